"""Data model and on-disk formats for pseudo-transcribed speech corpora.

A corpus directory contains:

    manifest.json   {"feature_dim": int, "alphabet_size": int, "utterances": [ids]}
    <id>.feat       header u64 frames, u64 dim (little-endian), then
                    frames*dim float32 values, row-major, little-endian
    <id>.sym        line 1: subword symbols, line 2: start frames,
                    line 3: end frames (all space-separated integers)
    gold.json       optional word-level ground truth

Feature payloads are float32 so that write -> load round-trips are bit-exact.
A Corpus is immutable after load and safe for concurrent readers.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


class CorpusError(ValueError):
    """Malformed corpus data or violated invariant."""


@dataclass(eq=False)
class Utterance:
    """One utterance: frame features plus its symbol-aligned pseudo-transcription."""

    id: str
    features: np.ndarray                       # (frames, feature_dim) float32
    transcription: tuple[int, ...]
    frame_spans: tuple[tuple[int, int], ...]   # half-open, sorted, non-overlapping

    @property
    def frames(self) -> int:
        return int(self.features.shape[0])

    def validate(self, feature_dim: int, alphabet_size: int) -> None:
        if self.features.ndim != 2:
            raise CorpusError(f"{self.id}: feature matrix must be 2-D")
        if self.frames == 0:
            raise CorpusError(f"{self.id}: empty utterance")
        if self.features.shape[1] != feature_dim:
            raise CorpusError(
                f"{self.id}: feature dim {self.features.shape[1]} != manifest {feature_dim}"
            )
        if len(self.transcription) != len(self.frame_spans):
            raise CorpusError(f"{self.id}: span/symbol length mismatch")
        prev_end = 0
        for sym, (start, end) in zip(self.transcription, self.frame_spans):
            if not 0 <= sym < alphabet_size:
                raise CorpusError(f"{self.id}: symbol {sym} outside alphabet")
            if start < prev_end or end <= start:
                raise CorpusError(f"{self.id}: spans must be sorted and non-empty")
            if end > self.frames:
                raise CorpusError(f"{self.id}: span overflow ({end} > {self.frames})")
            prev_end = end


@dataclass
class Segment:
    """A hypothesized term occurrence inside one utterance."""

    id: int
    utterance_id: str
    start: int                                 # frame span, half-open
    end: int
    symbols: tuple[int, ...]
    embedding: np.ndarray | None = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        if self.end <= self.start:
            raise CorpusError(f"segment {self.id}: end must exceed start")
        if not self.symbols:
            raise CorpusError(f"segment {self.id}: symbols must be non-empty")

    @property
    def n_frames(self) -> int:
        return self.end - self.start


@dataclass
class GoldToken:
    word_id: int
    start: int
    end: int
    symbols: tuple[int, ...]


@dataclass
class UtteranceGold:
    boundaries: tuple[int, ...]                # frame indices, first=0, last=frames
    tokens: tuple[GoldToken, ...]              # word tokens only (fillers excluded)
    true_symbols: tuple[int, ...]              # pre-noise transcription, fillers included
    true_spans: tuple[tuple[int, int], ...]


@dataclass
class GoldAnnotation:
    utterances: dict[str, UtteranceGold]

    def validate(self, corpus: "Corpus") -> None:
        for utt_id, gold in self.utterances.items():
            frames = corpus[utt_id].frames
            bounds = gold.boundaries
            if not bounds or bounds[0] != 0 or bounds[-1] != frames:
                raise CorpusError(f"{utt_id}: gold boundaries must start at 0 and end at {frames}")
            if any(b >= c for b, c in zip(bounds, bounds[1:])):
                raise CorpusError(f"{utt_id}: gold boundaries must be strictly sorted")


class Corpus:
    """Validated, ordered collection of utterances with a shared feature space."""

    def __init__(self, feature_dim: int, alphabet_size: int, utterances: list[Utterance]):
        self.feature_dim = int(feature_dim)
        self.alphabet_size = int(alphabet_size)
        self._utterances: dict[str, Utterance] = {}
        for utt in utterances:
            if utt.id in self._utterances:
                raise CorpusError(f"duplicate utterance id {utt.id}")
            utt.validate(self.feature_dim, self.alphabet_size)
            self._utterances[utt.id] = utt

    @property
    def ids(self) -> list[str]:
        return list(self._utterances)

    def __len__(self) -> int:
        return len(self._utterances)

    def __iter__(self):
        return iter(self._utterances.values())

    def __contains__(self, utt_id: str) -> bool:
        return utt_id in self._utterances

    def __getitem__(self, utt_id: str) -> Utterance:
        try:
            return self._utterances[utt_id]
        except KeyError:
            raise CorpusError(f"unknown utterance {utt_id!r}") from None

    def total_frames(self) -> int:
        return sum(u.frames for u in self)


def slice_features(corpus: Corpus, segment: Segment) -> np.ndarray:
    """Rows [start, end) of the segment's utterance feature matrix."""
    utt = corpus[segment.utterance_id]
    if not 0 <= segment.start < segment.end <= utt.frames:
        raise CorpusError(
            f"segment {segment.id}: span ({segment.start}, {segment.end}) "
            f"out of range for {utt.id} with {utt.frames} frames"
        )
    return utt.features[segment.start:segment.end]


def symbols_in_span(utt: Utterance, start: int, end: int,
                    symbols: tuple[int, ...] | None = None,
                    min_overlap: float = 0.5) -> tuple[int, ...]:
    """Symbols whose frame span overlaps [start, end) by >= min_overlap of their duration.

    `symbols` substitutes an alternative symbol sequence aligned with
    utt.frame_spans (used to restrict gold transcriptions to a segment).
    """
    seq = utt.transcription if symbols is None else symbols
    out = []
    for sym, (s, e) in zip(seq, utt.frame_spans):
        inter = min(end, e) - max(start, s)
        if inter > 0 and inter >= min_overlap * (e - s):
            out.append(sym)
    return tuple(out)


# ---------------------------------------------------------------------------
# on-disk formats


def _write_feat(path: Path, features: np.ndarray) -> None:
    with open(path, "wb") as fh:
        fh.write(struct.pack("<QQ", features.shape[0], features.shape[1]))
        fh.write(np.ascontiguousarray(features, dtype="<f4").tobytes())


def _read_feat(path: Path, utt_id: str) -> np.ndarray:
    raw = path.read_bytes()
    if len(raw) < 16:
        raise CorpusError(f"{utt_id}: truncated feature file")
    frames, dim = struct.unpack_from("<QQ", raw, 0)
    data = np.frombuffer(raw, dtype="<f4", offset=16)
    if data.size != frames * dim:
        raise CorpusError(f"{utt_id}: feature payload size mismatch")
    return data.reshape(int(frames), int(dim)).copy()


def _write_sym(path: Path, utt: Utterance) -> None:
    lines = [
        " ".join(str(s) for s in utt.transcription),
        " ".join(str(s) for s, _ in utt.frame_spans),
        " ".join(str(e) for _, e in utt.frame_spans),
    ]
    path.write_text("\n".join(lines) + "\n")


def _read_sym(path: Path, utt_id: str) -> tuple[tuple[int, ...], tuple[tuple[int, int], ...]]:
    lines = path.read_text().splitlines()
    if len(lines) < 3:
        raise CorpusError(f"{utt_id}: transcription file needs 3 lines")
    symbols = tuple(int(x) for x in lines[0].split())
    starts = [int(x) for x in lines[1].split()]
    ends = [int(x) for x in lines[2].split()]
    if len(starts) != len(ends):
        raise CorpusError(f"{utt_id}: start/end frame lines differ in length")
    if len(symbols) != len(starts):
        raise CorpusError(f"{utt_id}: span/symbol length mismatch")
    return symbols, tuple(zip(starts, ends))


def write_corpus(corpus: Corpus, path) -> None:
    """Persist a corpus; load_corpus(write_corpus(c)) reproduces c bit-exactly."""
    root = Path(path)
    root.mkdir(parents=True, exist_ok=True)
    manifest = {
        "feature_dim": corpus.feature_dim,
        "alphabet_size": corpus.alphabet_size,
        "utterances": corpus.ids,
    }
    (root / "manifest.json").write_text(json.dumps(manifest, sort_keys=True, indent=2) + "\n")
    for utt in corpus:
        _write_feat(root / f"{utt.id}.feat", utt.features)
        _write_sym(root / f"{utt.id}.sym", utt)


def load_corpus(path) -> Corpus:
    """Load and validate a corpus directory."""
    root = Path(path)
    manifest_path = root / "manifest.json"
    if not manifest_path.is_file():
        raise CorpusError(f"missing manifest: {manifest_path}")
    manifest = json.loads(manifest_path.read_text())
    utterances = []
    for utt_id in manifest["utterances"]:
        feat_path = root / f"{utt_id}.feat"
        sym_path = root / f"{utt_id}.sym"
        for required in (feat_path, sym_path):
            if not required.is_file():
                raise CorpusError(f"{utt_id}: missing file {required.name}")
        features = _read_feat(feat_path, utt_id)
        symbols, spans = _read_sym(sym_path, utt_id)
        utterances.append(Utterance(utt_id, features, symbols, spans))
    return Corpus(manifest["feature_dim"], manifest["alphabet_size"], utterances)


def write_gold(gold: GoldAnnotation, path) -> None:
    blob = {"utterances": {}}
    for utt_id, g in gold.utterances.items():
        blob["utterances"][utt_id] = {
            "boundaries": list(g.boundaries),
            "tokens": [
                {"word": t.word_id, "start": t.start, "end": t.end, "symbols": list(t.symbols)}
                for t in g.tokens
            ],
            "true_symbols": list(g.true_symbols),
            "true_starts": [s for s, _ in g.true_spans],
            "true_ends": [e for _, e in g.true_spans],
        }
    Path(path).write_text(json.dumps(blob, sort_keys=True, indent=2) + "\n")


def load_gold(path) -> GoldAnnotation:
    blob = json.loads(Path(path).read_text())
    utterances = {}
    for utt_id, g in blob["utterances"].items():
        tokens = tuple(
            GoldToken(t["word"], t["start"], t["end"], tuple(t["symbols"]))
            for t in g["tokens"]
        )
        spans = tuple(zip(g["true_starts"], g["true_ends"]))
        utterances[utt_id] = UtteranceGold(
            boundaries=tuple(g["boundaries"]),
            tokens=tokens,
            true_symbols=tuple(g["true_symbols"]),
            true_spans=spans,
        )
    return GoldAnnotation(utterances)
