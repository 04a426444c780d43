"""Leader clustering of discovered segments by normalized Levenshtein distance.

Order-dependent by design: segments are processed in ascending id order, a
segment joins the first cluster whose leader lies within radius T, and a new
cluster may only be founded when the segment is at least a*T away from every
existing leader. Segments failing both tests go to the nearest leader (kept,
not dropped) unless ambiguous_policy="drop".
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .corpus import Segment
from .seqmatch import normalized_levenshtein


@dataclass
class LeaderParams:
    T: float = 0.4
    a: float = 1.8
    R: int = 3
    ambiguous_policy: str = "nearest"   # or "drop"

    def validate(self) -> None:
        if not 0 < self.T <= 1:
            raise ValueError("T must be in (0, 1]")
        if self.a <= 0:
            raise ValueError("a must be positive")
        if self.R < 1:
            raise ValueError("R must be >= 1")
        if self.ambiguous_policy not in ("nearest", "drop"):
            raise ValueError("ambiguous_policy must be 'nearest' or 'drop'")


@dataclass
class Cluster:
    id: int
    leader: int                       # segment id
    members: list[int]
    mean_len: float = 0.0
    stability: float | None = None    # filled by density re-clustering only
    nearest_assigned: set[int] = field(default_factory=set, compare=False)


def leader_cluster(segments: list[Segment], params: LeaderParams) -> list[Cluster]:
    """One-pass leader clustering over segments with len(symbols) >= R."""
    params.validate()
    eligible = [s for s in sorted(segments, key=lambda s: s.id)
                if len(s.symbols) >= params.R]
    clusters: list[Cluster] = []
    leader_symbols: list[tuple[int, ...]] = []
    founding_gap = params.a * params.T

    for seg in eligible:
        nearest_idx = -1
        nearest_dist = float("inf")
        assigned = False
        for idx, leader in enumerate(leader_symbols):
            dist = normalized_levenshtein(seg.symbols, leader)
            if dist < nearest_dist:
                nearest_dist = dist
                nearest_idx = idx
            if dist <= params.T:
                clusters[idx].members.append(seg.id)
                assigned = True
                break
        if assigned:
            continue
        if nearest_idx < 0 or nearest_dist >= founding_gap:
            clusters.append(Cluster(id=len(clusters), leader=seg.id, members=[seg.id]))
            leader_symbols.append(seg.symbols)
        elif params.ambiguous_policy == "nearest":
            clusters[nearest_idx].members.append(seg.id)
            clusters[nearest_idx].nearest_assigned.add(seg.id)
        # "drop": ambiguous segment is discarded

    lengths = {s.id: len(s.symbols) for s in eligible}
    for cluster in clusters:
        cluster.mean_len = sum(lengths[m] for m in cluster.members) / len(cluster.members)
    return clusters


def cluster_set_stats(clusters: list[Cluster]) -> dict:
    """Summary: cluster count, size histogram, and per-cluster mean length."""
    histogram: dict[int, int] = {}
    for cluster in clusters:
        histogram[len(cluster.members)] = histogram.get(len(cluster.members), 0) + 1
    return {
        "count": len(clusters),
        "total_members": sum(len(c.members) for c in clusters),
        "size_histogram": dict(sorted(histogram.items())),
        "mean_len": {c.id: c.mean_len for c in clusters},
    }


def validate_partition(clusters: list[Cluster]) -> None:
    seen: set[int] = set()
    for cluster in clusters:
        if not cluster.members:
            raise ValueError(f"cluster {cluster.id} is empty")
        if cluster.leader not in cluster.members:
            raise ValueError(f"cluster {cluster.id}: leader not a member")
        overlap = seen.intersection(cluster.members)
        if overlap:
            raise ValueError(f"segments {sorted(overlap)} appear in multiple clusters")
        seen.update(cluster.members)


def write_clusters(path, clusters: list[Cluster]) -> None:
    """clusters_baseline.json: list of {id, leader, members}."""
    blob = [{"id": c.id, "leader": c.leader, "members": sorted(c.members)}
            for c in clusters]
    Path(path).write_text(json.dumps(blob, sort_keys=True, indent=2) + "\n")


def load_clusters(path) -> list[Cluster]:
    blob = json.loads(Path(path).read_text())
    return [Cluster(id=c["id"], leader=c["leader"], members=list(c["members"]))
            for c in blob]
