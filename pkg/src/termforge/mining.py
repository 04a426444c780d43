"""Cluster purity/contrast statistics and weak-pair mining for network training.

Purity of a cluster C is the mean and standard deviation of Levenshtein
distances over all |C|^2 ordered member pairs (self pairs included, read
literally from the defining sums; exclude_self flips to the |C|(|C|-1)
variant for sensitivity checks). Contrast statistics run over all |C1||C2|
cross pairs. Thresholds scale with the average symbol length of the clusters
involved, and comparisons are strict.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

from .baseline import Cluster
from .corpus import Segment
from .seqmatch import levenshtein
from .util import rng_from


class MiningError(RuntimeError):
    """No usable source clusters for the requested samples."""


@dataclass
class PurityStats:
    mu_s: float
    sigma_s: float


@dataclass
class ContrastStats:
    mu_d: float
    sigma_d: float


@dataclass
class MiningThresholds:
    thres_mu_s: float = 0.2
    thres_sigma_s: float = 0.2
    thres_mu_d: float = 0.4
    thres_sigma_d: float = 0.2

    def validate(self) -> None:
        for name in ("thres_mu_s", "thres_sigma_s", "thres_mu_d", "thres_sigma_d"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")


@dataclass
class SiamesePair:
    a: int
    b: int
    y: int                      # 1 matched, 0 mismatched
    clusters: tuple[int, int]


@dataclass
class Triplet:
    anchor: int
    positive: int
    negative: int
    clusters: tuple[int, int]   # (anchor cluster, negative cluster)


@dataclass
class PairManifest:
    siamese_pairs: list[SiamesePair] = field(default_factory=list)
    triplets: list[Triplet] = field(default_factory=list)
    sample_seed: int = 0


def _member_symbols(cluster: Cluster, segments_by_id: dict[int, Segment]):
    return [segments_by_id[m].symbols for m in cluster.members]


def _string_counts(symbols: list[tuple[int, ...]]) -> list[tuple[tuple[int, ...], int]]:
    counts: dict[tuple[int, ...], int] = {}
    for s in symbols:
        counts[s] = counts.get(s, 0) + 1
    return list(counts.items())


def mean_symbol_length(cluster: Cluster, segments_by_id: dict[int, Segment]) -> float:
    return sum(len(segments_by_id[m].symbols) for m in cluster.members) / len(cluster.members)


def purity_stats(cluster: Cluster, segments_by_id: dict[int, Segment],
                 include_self: bool = True) -> PurityStats:
    """Mean/std of within-cluster Levenshtein distances over all ordered
    member pairs (self pairs included by default, matching the defining sums).

    Computed over distinct symbol strings weighted by multiplicity, which is
    exact and much cheaper on clusters full of repeated strings.
    """
    symbols = _member_symbols(cluster, segments_by_id)
    n = len(symbols)
    if n == 0:
        raise ValueError("purity_stats requires a non-empty cluster")
    if n == 1 and not include_self:
        return PurityStats(0.0, 0.0)
    counts = _string_counts(symbols)
    total_pairs = n * n if include_self else n * (n - 1)
    weighted_sum = 0.0
    entries = []   # (weight, value) for distinct unordered string pairs
    for i, (sa, ca) in enumerate(counts):
        for sb, cb in counts[i + 1:]:
            value = levenshtein(sa, sb)
            weight = 2 * ca * cb          # both orders
            weighted_sum += weight * value
            entries.append((weight, value))
    mu = weighted_sum / total_pairs
    zero_weight = total_pairs - sum(w for w, _ in entries)
    var = (sum(w * (v - mu) ** 2 for w, v in entries) + zero_weight * mu * mu)
    var /= total_pairs
    return PurityStats(mu, math.sqrt(var))


def contrast_stats(c1: Cluster, c2: Cluster,
                   segments_by_id: dict[int, Segment]) -> ContrastStats:
    """Mean/std of Levenshtein distances over all cross pairs of two clusters."""
    syms_1 = _member_symbols(c1, segments_by_id)
    syms_2 = _member_symbols(c2, segments_by_id)
    if not syms_1 or not syms_2:
        raise ValueError("contrast_stats requires non-empty clusters")
    total_pairs = len(syms_1) * len(syms_2)
    weighted_sum = 0.0
    entries = []
    for sa, ca in _string_counts(syms_1):
        for sb, cb in _string_counts(syms_2):
            value = levenshtein(sa, sb)
            weight = ca * cb
            weighted_sum += weight * value
            entries.append((weight, value))
    mu = weighted_sum / total_pairs
    var = sum(w * (v - mu) ** 2 for w, v in entries) / total_pairs
    return ContrastStats(mu, math.sqrt(var))


def select_pure_clusters(clusters: list[Cluster], segments_by_id: dict[int, Segment],
                         thresholds: MiningThresholds,
                         include_self: bool = True) -> list[Cluster]:
    """Clusters whose purity statistics fall strictly below the scaled bounds."""
    thresholds.validate()
    retained = []
    for cluster in clusters:
        mean_len = cluster.mean_len or mean_symbol_length(cluster, segments_by_id)
        stats = purity_stats(cluster, segments_by_id, include_self=include_self)
        if (stats.mu_s < thresholds.thres_mu_s * mean_len
                and stats.sigma_s < thresholds.thres_sigma_s * mean_len):
            retained.append(cluster)
    return retained


def select_contrasting_pairs(retained: list[Cluster], segments_by_id: dict[int, Segment],
                             thresholds: MiningThresholds) -> list[tuple[Cluster, Cluster]]:
    """Unordered retained-cluster pairs with large, consistent cross distance."""
    thresholds.validate()
    pairs = []
    for i in range(len(retained)):
        for j in range(i + 1, len(retained)):
            c1, c2 = retained[i], retained[j]
            scale = ((c1.mean_len or mean_symbol_length(c1, segments_by_id))
                     + (c2.mean_len or mean_symbol_length(c2, segments_by_id))) / 2
            stats = contrast_stats(c1, c2, segments_by_id)
            if (stats.mu_d > thresholds.thres_mu_d * scale
                    and stats.sigma_d < thresholds.thres_sigma_d * scale):
                pairs.append((c1, c2))
    return pairs


def _weighted_choice(rng, weights: list[int]) -> int:
    total = sum(weights)
    ticket = int(rng.integers(0, total))
    for idx, w in enumerate(weights):
        ticket -= w
        if ticket < 0:
            return idx
    return len(weights) - 1


def _distinct_pair(rng, n: int) -> tuple[int, int]:
    i = int(rng.integers(0, n))
    j = int(rng.integers(0, n - 1))
    if j >= i:
        j += 1
    return i, j


def sample_manifest(retained: list[Cluster], contrasting: list[tuple[Cluster, Cluster]],
                    n_siamese: int, n_triplet: int, seed: int) -> PairManifest:
    """Sample Siamese pairs (balanced 50/50) and triplet tuples with replacement.

    Positive sources are weighted by their number of member pairs, negative
    sources by |C1|*|C2|, i.e. sampling is uniform over the valid combination
    space. Triplet anchors come from retained clusters that both have >= 2
    members and contrast with at least one other cluster.
    """
    manifest = PairManifest(sample_seed=seed)
    if n_siamese == 0 and n_triplet == 0:
        return manifest

    positive_sources = [c for c in retained if len(c.members) >= 2]
    pos_weights = [len(c.members) * (len(c.members) - 1) // 2 for c in positive_sources]
    neg_weights = [len(c1.members) * len(c2.members) for c1, c2 in contrasting]

    partners: dict[int, list[tuple[int, Cluster]]] = {}
    for c1, c2 in contrasting:
        partners.setdefault(c1.id, []).append((c2.id, c2))
        partners.setdefault(c2.id, []).append((c1.id, c1))
    triplet_sources = [c for c in positive_sources if c.id in partners]
    tri_weights = [len(c.members) * (len(c.members) - 1) // 2 for c in triplet_sources]

    need_positives = n_siamese > 0 or n_triplet > 0
    if need_positives and not positive_sources:
        raise MiningError("no positive source: no retained cluster has >= 2 members")
    if n_siamese > 0 and not contrasting:
        raise MiningError("no negative source: no contrasting cluster pair selected")
    if n_triplet > 0 and not triplet_sources:
        raise MiningError("no negative source: no retained cluster contrasts with another")

    rng = rng_from(seed)
    n_pos = (n_siamese + 1) // 2
    for k in range(n_siamese):
        if k < n_pos:
            src = positive_sources[_weighted_choice(rng, pos_weights)]
            i, j = _distinct_pair(rng, len(src.members))
            manifest.siamese_pairs.append(SiamesePair(
                a=src.members[i], b=src.members[j], y=1, clusters=(src.id, src.id)))
        else:
            c1, c2 = contrasting[_weighted_choice(rng, neg_weights)]
            i = int(rng.integers(0, len(c1.members)))
            j = int(rng.integers(0, len(c2.members)))
            manifest.siamese_pairs.append(SiamesePair(
                a=c1.members[i], b=c2.members[j], y=0, clusters=(c1.id, c2.id)))

    for _ in range(n_triplet):
        src = triplet_sources[_weighted_choice(rng, tri_weights)]
        i, j = _distinct_pair(rng, len(src.members))
        options = partners[src.id]
        _neg_id, neg_cluster = options[int(rng.integers(0, len(options)))]
        k = int(rng.integers(0, len(neg_cluster.members)))
        manifest.triplets.append(Triplet(
            anchor=src.members[i], positive=src.members[j],
            negative=neg_cluster.members[k], clusters=(src.id, neg_cluster.id)))
    return manifest


def write_manifest(path, manifest: PairManifest) -> None:
    blob = {
        "sample_seed": manifest.sample_seed,
        "siamese": [{"a": p.a, "b": p.b, "y": p.y, "clusters": list(p.clusters)}
                    for p in manifest.siamese_pairs],
        "triplets": [{"anchor": t.anchor, "positive": t.positive,
                      "negative": t.negative, "clusters": list(t.clusters)}
                     for t in manifest.triplets],
    }
    Path(path).write_text(json.dumps(blob, sort_keys=True, indent=2) + "\n")


def load_manifest(path) -> PairManifest:
    blob = json.loads(Path(path).read_text())
    return PairManifest(
        siamese_pairs=[SiamesePair(p["a"], p["b"], p["y"], tuple(p["clusters"]))
                       for p in blob["siamese"]],
        triplets=[Triplet(t["anchor"], t["positive"], t["negative"], tuple(t["clusters"]))
                  for t in blob["triplets"]],
        sample_seed=blob["sample_seed"],
    )
