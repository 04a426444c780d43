"""Stage orchestration: synth -> discover -> baseline -> mine -> train ->
embed -> recluster -> evaluate, with content-hash stage caching.

Every stage is idempotent for identical inputs and seed: a stage re-runs only
when the hash of its config subset plus upstream artifacts changes (or with
force=True). All randomness flows from the root seed through labelled
sub-seed derivation, so two runs with the same config produce byte-identical
artifacts.
"""

from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import baseline as baseline_mod
from . import embednet, evaluation, mining, recluster, seqmatch, synthgen
from .corpus import load_corpus, load_gold, write_corpus, write_gold
from .util import derive_seed, sha256_bytes, sha256_file, stable_json

log = logging.getLogger("termforge")

STAGES = ("synth", "discover", "baseline", "mine", "train",
          "embed", "recluster", "evaluate")
SYSTEMS = ("baseline", "siamese", "triplet")
EXTRACTIONS = ("eom", "hybrid")


class PipelineError(RuntimeError):
    pass


@dataclass
class PipelineConfig:
    seed: int = 0
    system: str = "baseline"
    extraction: str = "eom"
    workdir: str = "runs/default"
    synth: synthgen.SynthConfig = field(
        default_factory=lambda: synthgen.SynthConfig(vocabulary_size=5))
    align: seqmatch.AlignScoring = field(default_factory=seqmatch.AlignScoring)
    leader: baseline_mod.LeaderParams = field(default_factory=baseline_mod.LeaderParams)
    thresholds: mining.MiningThresholds = field(default_factory=mining.MiningThresholds)
    n_siamese: int = 10_000
    n_triplet: int = 10_000
    train: embednet.TrainConfig = field(default_factory=embednet.TrainConfig)
    hdbscan: recluster.HdbscanParams = field(default_factory=recluster.HdbscanParams)
    eval: evaluation.EvalConfig = field(default_factory=evaluation.EvalConfig)
    max_dp_cells: int = 200_000_000

    def validate(self) -> None:
        if self.system not in SYSTEMS:
            raise PipelineError(f"system must be one of {SYSTEMS}, got {self.system!r}")
        if self.extraction not in EXTRACTIONS:
            raise PipelineError(
                f"extraction must be one of {EXTRACTIONS}, got {self.extraction!r}")

    @property
    def mode(self) -> str:
        if self.system == "baseline":
            return "baseline"
        return f"{self.system}-{self.extraction}"

    def stage_names(self) -> tuple[str, ...]:
        if self.system == "baseline":
            return ("synth", "discover", "baseline", "evaluate")
        return STAGES

    @classmethod
    def from_dict(cls, blob: dict) -> "PipelineConfig":
        synth_data = dict(blob.get("synth", {}))
        synth_data.pop("seed", None)   # derived from the root seed
        for key in ("word_length_range", "frames_per_subword_range"):
            if key in synth_data:
                synth_data[key] = tuple(synth_data[key])
        mining_data = dict(blob.get("mining", {}))
        n_siamese = mining_data.pop("n_siamese", 10_000)
        n_triplet = mining_data.pop("n_triplet", 10_000)
        config = cls(
            seed=blob.get("seed", 0),
            system=blob.get("system", "baseline"),
            extraction=blob.get("extraction", "eom"),
            workdir=blob.get("workdir", "runs/default"),
            synth=synthgen.SynthConfig(**synth_data),
            align=seqmatch.AlignScoring(**blob.get("align", {})),
            leader=baseline_mod.LeaderParams(**blob.get("leader", {})),
            thresholds=mining.MiningThresholds(**mining_data),
            n_siamese=n_siamese,
            n_triplet=n_triplet,
            train=embednet.TrainConfig(**blob.get("train", {})),
            hdbscan=recluster.HdbscanParams(**blob.get("hdbscan", {})),
            eval=evaluation.EvalConfig(**blob.get("eval", {})),
            max_dp_cells=blob.get("max_dp_cells", 200_000_000),
        )
        config.validate()
        return config

    @classmethod
    def from_file(cls, path) -> "PipelineConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def to_dict(self) -> dict:
        blob = {
            "seed": self.seed,
            "system": self.system,
            "extraction": self.extraction,
            "workdir": self.workdir,
            "synth": asdict(self.synth),
            "align": asdict(self.align),
            "leader": asdict(self.leader),
            "mining": {**asdict(self.thresholds),
                       "n_siamese": self.n_siamese, "n_triplet": self.n_triplet},
            "train": asdict(self.train),
            "hdbscan": asdict(self.hdbscan),
            "eval": asdict(self.eval),
            "max_dp_cells": self.max_dp_cells,
        }
        blob["synth"]["word_length_range"] = list(self.synth.word_length_range)
        blob["synth"]["frames_per_subword_range"] = list(self.synth.frames_per_subword_range)
        return blob


@dataclass
class _Stage:
    name: str
    inputs: list[str]                 # workdir-relative artifact paths
    outputs: list[str]
    missing_message: str


def _stage_table(config: PipelineConfig) -> dict[str, _Stage]:
    clusters_file = ("clusters_baseline.json" if config.system == "baseline"
                     else "clusters_final.json")
    return {
        "synth": _Stage("synth", [], ["corpus/manifest.json", "corpus/gold.json"],
                        ""),
        "discover": _Stage("discover", ["corpus/manifest.json"], ["segments.jsonl"],
                           "missing corpus (run the synth stage first)"),
        "baseline": _Stage("baseline", ["segments.jsonl"], ["clusters_baseline.json"],
                           "missing segments (run the discover stage first)"),
        "mine": _Stage("mine", ["segments.jsonl", "clusters_baseline.json"],
                       ["manifest.json"],
                       "missing baseline clusters (run the baseline stage first)"),
        "train": _Stage("train", ["manifest.json", "corpus/manifest.json",
                                  "segments.jsonl"],
                        ["params.ckpt", "loss_curve.csv"],
                        "missing pair manifest (run the mine stage first)"),
        "embed": _Stage("embed", ["params.ckpt", "segments.jsonl",
                                  "corpus/manifest.json"],
                        ["embeddings.npy"],
                        "missing trained params (run the train stage first)"),
        "recluster": _Stage("recluster", ["embeddings.npy", "segments.jsonl"],
                            ["clusters_final.json"],
                            "missing embeddings (run the embed stage first)"),
        "evaluate": _Stage("evaluate", [clusters_file, "segments.jsonl",
                                        "corpus/manifest.json", "corpus/gold.json"],
                           ["report.json", "report.txt"],
                           f"missing {clusters_file} (run the upstream stages first)"),
    }


def _stage_config_subset(config: PipelineConfig, stage: str) -> dict:
    common = {"seed": config.seed}
    if stage == "synth":
        return {**common, "synth": stable_json(asdict(config.synth))}
    if stage == "discover":
        return {**common, "align": stable_json(asdict(config.align)),
                "max_dp_cells": config.max_dp_cells}
    if stage == "baseline":
        return {**common, "leader": stable_json(asdict(config.leader))}
    if stage == "mine":
        return {**common, "thresholds": stable_json(asdict(config.thresholds)),
                "n_siamese": config.n_siamese, "n_triplet": config.n_triplet}
    if stage == "train":
        return {**common, "train": stable_json(asdict(config.train)),
                "system": config.system}
    if stage == "embed":
        return {**common, "l_max": config.train.l_max}
    if stage == "recluster":
        return {**common, "hdbscan": stable_json(asdict(config.hdbscan)),
                "extraction": config.extraction}
    if stage == "evaluate":
        return {**common, "eval": stable_json(asdict(config.eval)),
                "system": config.system, "extraction": config.extraction}
    raise PipelineError(f"unknown stage {stage!r}")


def _corpus_input_hash(workdir: Path, rel: str) -> str:
    """Hash a corpus by manifest plus every utterance file it references."""
    manifest_path = workdir / rel
    manifest = json.loads(manifest_path.read_text())
    parts = [sha256_file(manifest_path)]
    for utt_id in manifest["utterances"]:
        for suffix in (".feat", ".sym"):
            parts.append(sha256_file(manifest_path.parent / f"{utt_id}{suffix}"))
    return sha256_bytes("".join(parts).encode())


def _stage_hash(config: PipelineConfig, stage: _Stage, workdir: Path) -> str:
    parts = [stable_json(_stage_config_subset(config, stage.name))]
    for rel in stage.inputs:
        path = workdir / rel
        if rel == "corpus/manifest.json":
            parts.append(_corpus_input_hash(workdir, rel))
        else:
            parts.append(sha256_file(path))
    return sha256_bytes("|".join(parts).encode())


# ---------------------------------------------------------------------------
# stage bodies


def _run_synth(config: PipelineConfig, workdir: Path) -> None:
    synth_cfg = synthgen.SynthConfig(**{**asdict(config.synth),
                                        "seed": derive_seed(config.seed, "synth")})
    corpus, gold = synthgen.generate(synth_cfg)
    corpus_dir = workdir / "corpus"
    write_corpus(corpus, corpus_dir)
    write_gold(gold, corpus_dir / "gold.json")
    log.info("synth: %d utterances, %d frames", len(corpus), corpus.total_frames())


def _run_discover(config: PipelineConfig, workdir: Path) -> None:
    corpus = load_corpus(workdir / "corpus")
    segments = seqmatch.discover_segments(corpus, config.align,
                                          max_dp_cells=config.max_dp_cells)
    seqmatch.write_segments(workdir / "segments.jsonl", segments)
    log.info("discover: %d segments", len(segments))


def _run_baseline(config: PipelineConfig, workdir: Path) -> None:
    segments = seqmatch.load_segments(workdir / "segments.jsonl")
    clusters = baseline_mod.leader_cluster(segments, config.leader)
    baseline_mod.validate_partition(clusters)
    baseline_mod.write_clusters(workdir / "clusters_baseline.json", clusters)
    log.info("baseline: %d clusters", len(clusters))


def _run_mine(config: PipelineConfig, workdir: Path) -> None:
    segments = seqmatch.load_segments(workdir / "segments.jsonl")
    by_id = {s.id: s for s in segments}
    clusters = baseline_mod.load_clusters(workdir / "clusters_baseline.json")
    for cluster in clusters:
        cluster.mean_len = mining.mean_symbol_length(cluster, by_id)
    retained = mining.select_pure_clusters(clusters, by_id, config.thresholds)
    contrasting = mining.select_contrasting_pairs(retained, by_id, config.thresholds)
    manifest = mining.sample_manifest(
        retained, contrasting, config.n_siamese, config.n_triplet,
        seed=derive_seed(config.seed, "mine"))
    mining.write_manifest(workdir / "manifest.json", manifest)
    log.info("mine: %d retained clusters, %d contrasting pairs, %d pairs, %d triplets",
             len(retained), len(contrasting),
             len(manifest.siamese_pairs), len(manifest.triplets))


def _run_train(config: PipelineConfig, workdir: Path) -> None:
    corpus = load_corpus(workdir / "corpus")
    segments = seqmatch.load_segments(workdir / "segments.jsonl")
    manifest = mining.load_manifest(workdir / "manifest.json")
    arch = embednet.NetArch(l_max=config.train.l_max,
                            feature_dim=corpus.feature_dim)
    params = embednet.init_params(arch, derive_seed(config.seed, "init"))
    train_cfg = embednet.TrainConfig(**{**asdict(config.train),
                                        "seed": derive_seed(config.seed, "train")})
    params, curve = embednet.train(params, manifest, corpus, segments,
                                   train_cfg, mode=config.system)
    embednet.save_params(workdir / "params.ckpt", params)
    embednet.write_loss_curve(workdir / "loss_curve.csv", curve)
    log.info("train[%s]: %d epochs, final loss %.6f",
             config.system, len(curve), curve[-1])


def _run_embed(config: PipelineConfig, workdir: Path) -> None:
    corpus = load_corpus(workdir / "corpus")
    segments = seqmatch.load_segments(workdir / "segments.jsonl")
    params = embednet.load_params(workdir / "params.ckpt")
    table = embednet.embed_all(params, segments, corpus, config.train.l_max)
    np.save(workdir / "embeddings.npy", table)
    log.info("embed: %s table", table.shape)


def _run_recluster(config: PipelineConfig, workdir: Path) -> None:
    segments = seqmatch.load_segments(workdir / "segments.jsonl")
    table = np.load(workdir / "embeddings.npy")
    params = recluster.HdbscanParams(**{
        **asdict(config.hdbscan),
        "cluster_selection_epsilon": (config.hdbscan.cluster_selection_epsilon
                                      if config.extraction == "hybrid" else 0.0),
    })
    result = recluster.hdbscan(table, params)
    blob = {
        "clusters": [
            {
                "id": idx,
                "leader": min(segments[p].id for p in members),
                "members": sorted(segments[p].id for p in members),
                "stability": result.stabilities[idx],
            }
            for idx, members in enumerate(result.clusters)
        ],
        "noise": sorted(segments[p].id for p in result.noise),
    }
    (workdir / "clusters_final.json").write_text(
        json.dumps(blob, sort_keys=True, indent=2) + "\n")
    log.info("recluster: %d clusters, %d noise segments",
             len(result.clusters), len(result.noise))


def _load_final_clusters(path) -> list[baseline_mod.Cluster]:
    blob = json.loads(Path(path).read_text())
    return [baseline_mod.Cluster(id=c["id"], leader=c["leader"],
                                 members=list(c["members"]),
                                 stability=c.get("stability"))
            for c in blob["clusters"]]


def _run_evaluate(config: PipelineConfig, workdir: Path) -> None:
    corpus = load_corpus(workdir / "corpus")
    gold = load_gold(workdir / "corpus" / "gold.json")
    segments = seqmatch.load_segments(workdir / "segments.jsonl")
    if config.system == "baseline":
        clusters = baseline_mod.load_clusters(workdir / "clusters_baseline.json")
    else:
        clusters = _load_final_clusters(workdir / "clusters_final.json")
    report = evaluation.report(clusters, segments, corpus, gold, config.eval)
    evaluation.write_report(report, workdir / "report.json", workdir / "report.txt",
                            system=config.mode)
    log.info("evaluate[%s]: %d clusters scored", config.mode, len(clusters))


_RUNNERS = {
    "synth": _run_synth,
    "discover": _run_discover,
    "baseline": _run_baseline,
    "mine": _run_mine,
    "train": _run_train,
    "embed": _run_embed,
    "recluster": _run_recluster,
    "evaluate": _run_evaluate,
}


def run_stage(stage_name: str, config: PipelineConfig, force: bool = False) -> bool:
    """Run one stage; returns False when the cached artifacts are current."""
    config.validate()
    if stage_name not in _RUNNERS:
        raise PipelineError(f"unknown stage {stage_name!r} (expected one of {STAGES})")
    if stage_name not in config.stage_names():
        raise PipelineError(f"stage {stage_name!r} is not part of mode {config.mode}")
    workdir = Path(config.workdir)
    workdir.mkdir(parents=True, exist_ok=True)
    stage = _stage_table(config)[stage_name]

    for rel in stage.inputs:
        if not (workdir / rel).exists():
            raise PipelineError(stage.missing_message)

    stamp_dir = workdir / ".stamps"
    stamp_dir.mkdir(exist_ok=True)
    stamp_path = stamp_dir / f"{stage.name}.json"
    current = _stage_hash(config, stage, workdir)
    outputs_present = all((workdir / rel).exists() for rel in stage.outputs)
    if not force and outputs_present and stamp_path.exists():
        recorded = json.loads(stamp_path.read_text()).get("hash")
        if recorded == current:
            log.info("%s: up to date, skipping", stage.name)
            return False

    _RUNNERS[stage.name](config, workdir)
    stamp_path.write_text(json.dumps({"hash": current}, sort_keys=True) + "\n")
    return True


def run_all(config: PipelineConfig, force: bool = False) -> evaluation.EvalReport:
    """Run every stage for the configured mode and return the final report."""
    config.validate()
    for stage_name in config.stage_names():
        run_stage(stage_name, config, force=force)
    workdir = Path(config.workdir)
    report = evaluation.load_report(workdir / "report.json")
    print(evaluation.render_text(report, system=config.mode), end="")
    return report
