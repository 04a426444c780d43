"""Symbol-sequence kernels: edit distance and local-alignment segment discovery."""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from functools import lru_cache
from typing import Sequence

from .corpus import Corpus, Segment
from .util import worker_count

Span = tuple[int, int]


class ScaleError(RuntimeError):
    """Raised when an all-pairs computation would exceed its operation budget."""


@dataclass
class AlignScoring:
    match_score: float = 1.0
    mismatch_penalty: float = -1.0
    gap_penalty: float = -1.0
    min_align_score: float = 3.0
    min_length: int = 3

    def validate(self) -> None:
        if self.match_score <= 0:
            raise ValueError("match_score must be positive")
        if self.mismatch_penalty > 0 or self.gap_penalty > 0:
            raise ValueError("penalties must be <= 0")
        if self.min_align_score <= 0:
            raise ValueError("min_align_score must be positive")
        if self.min_length < 1:
            raise ValueError("min_length must be >= 1")


@lru_cache(maxsize=2_000_000)
def _lev_core(a: tuple, b: tuple) -> int:
    if not b:
        return len(a)
    previous = list(range(len(b) + 1))
    for i, sym_a in enumerate(a, 1):
        current = [i] + [0] * len(b)
        for j, sym_b in enumerate(b, 1):
            cost = previous[j - 1] + (sym_a != sym_b)
            deletion = previous[j] + 1
            insertion = current[j - 1] + 1
            current[j] = min(cost, deletion, insertion)
        previous = current
    return previous[-1]


def levenshtein(a: Sequence[int], b: Sequence[int]) -> int:
    """Unit-cost edit distance between two symbol sequences (memoized; the
    pipeline hits the same string pairs over and over)."""
    ta, tb = tuple(a), tuple(b)
    if len(ta) < len(tb) or (len(ta) == len(tb) and tb < ta):
        ta, tb = tb, ta
    return _lev_core(ta, tb)


def normalized_levenshtein(a: Sequence[int], b: Sequence[int]) -> float:
    """levenshtein(a, b) / max(len(a), len(b)); undefined when both are empty."""
    longest = max(len(a), len(b))
    if longest == 0:
        raise ValueError("normalized levenshtein undefined for two empty sequences")
    return levenshtein(a, b) / longest


def _sw_fill(a, b, scoring: AlignScoring, mask_a, mask_b, ban_diagonal):
    """Smith-Waterman matrix under position masks; best cell is the first
    row-major maximum."""
    n, m = len(a), len(b)
    score_rows = [[0.0] * (m + 1) for _ in range(n + 1)]
    best_score, best_i, best_j = 0.0, 0, 0
    match = scoring.match_score
    mismatch = scoring.mismatch_penalty
    gap = scoring.gap_penalty
    for i in range(1, n + 1):
        if mask_a[i - 1]:
            continue
        sym_a = a[i - 1]
        row = score_rows[i]
        above = score_rows[i - 1]
        for j in range(1, m + 1):
            if mask_b[j - 1] or (ban_diagonal and i == j):
                continue
            value = above[j - 1] + (match if sym_a == b[j - 1] else mismatch)
            up = above[j] + gap
            if up > value:
                value = up
            left = row[j - 1] + gap
            if left > value:
                value = left
            if value <= 0.0:
                continue
            row[j] = value
            if value > best_score:
                best_score, best_i, best_j = value, i, j
    return score_rows, best_score, best_i, best_j


def _sw_traceback(score_rows, a, b, scoring: AlignScoring, i, j):
    """Follow tie-broken pointers (diagonal, then up, then left) back to a zero cell."""
    match = scoring.match_score
    mismatch = scoring.mismatch_penalty
    gap = scoring.gap_penalty
    a_idx: list[int] = []
    b_idx: list[int] = []
    while score_rows[i][j] > 0.0:
        here = score_rows[i][j]
        diag = score_rows[i - 1][j - 1] + (match if a[i - 1] == b[j - 1] else mismatch)
        if here == diag:
            a_idx.append(i - 1)
            b_idx.append(j - 1)
            i -= 1
            j -= 1
        elif here == score_rows[i - 1][j] + gap:
            a_idx.append(i - 1)
            i -= 1
        elif here == score_rows[i][j - 1] + gap:
            b_idx.append(j - 1)
            j -= 1
        else:  # pragma: no cover - forward pass guarantees one branch matches
            raise AssertionError("inconsistent traceback")
    return (min(a_idx), max(a_idx) + 1), (min(b_idx), max(b_idx) + 1)


def local_align(a: Sequence[int], b: Sequence[int], scoring: AlignScoring,
                self_pair: bool = False) -> list[tuple[Span, Span, float]]:
    """All maximal local alignments meeting the score and length thresholds.

    Alignments are extracted best-first; the positions they consume are then
    masked on each side, so returned spans never overlap within this pair.
    For self alignment the main diagonal is banned and identical span pairs
    are discarded.
    """
    scoring.validate()
    mask_a = [False] * len(a)
    mask_b = [False] * len(b)
    results: list[tuple[Span, Span, float]] = []
    while True:
        rows, best, i, j = _sw_fill(a, b, scoring, mask_a, mask_b, self_pair)
        if best < scoring.min_align_score:
            break
        span_a, span_b = _sw_traceback(rows, a, b, scoring, i, j)
        mask_a[span_a[0]:span_a[1]] = [True] * (span_a[1] - span_a[0])
        mask_b[span_b[0]:span_b[1]] = [True] * (span_b[1] - span_b[0])
        long_enough = (span_a[1] - span_a[0] >= scoring.min_length
                       and span_b[1] - span_b[0] >= scoring.min_length)
        if long_enough and not (self_pair and span_a == span_b):
            results.append((span_a, span_b, best))
    return results


def _align_pair(task):
    """Worker task for one utterance pair; top-level so it pickles."""
    a, b, scoring, self_pair = task
    return local_align(a, b, scoring, self_pair=self_pair)


def discover_segments(corpus: Corpus, scoring: AlignScoring,
                      max_dp_cells: int = 200_000_000,
                      workers: int | None = None) -> list[Segment]:
    """Run local alignment over all unordered utterance pairs (self pairs
    included) and convert every aligned span into a deduplicated Segment.

    Segment ids are dense in discovery order. A budget guard rejects corpora
    whose single-pass DP cell count would exceed max_dp_cells.
    """
    utts = list(corpus)
    pairs = [(i, j) for i in range(len(utts)) for j in range(i, len(utts))]
    cells = sum(len(utts[i].transcription) * len(utts[j].transcription) for i, j in pairs)
    if cells > max_dp_cells:
        raise ScaleError(
            f"alignment budget exceeded: {cells} DP cells > {max_dp_cells}; "
            "shrink the corpus or raise max_dp_cells"
        )

    tasks = [(utts[i].transcription, utts[j].transcription, scoring, i == j)
             for i, j in pairs]
    n_workers = worker_count(workers)
    if n_workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=n_workers) as pool:
            alignments = list(pool.map(_align_pair, tasks, chunksize=64))
    else:
        alignments = [_align_pair(task) for task in tasks]

    segments: list[Segment] = []
    seen: set[tuple[str, int, int]] = set()

    def add(utt, sym_span: Span) -> None:
        key = (utt.id, sym_span[0], sym_span[1])
        if key in seen:
            return
        seen.add(key)
        frame_start = utt.frame_spans[sym_span[0]][0]
        frame_end = utt.frame_spans[sym_span[1] - 1][1]
        segments.append(Segment(
            id=len(segments),
            utterance_id=utt.id,
            start=frame_start,
            end=frame_end,
            symbols=utt.transcription[sym_span[0]:sym_span[1]],
        ))

    for (i, j), found in zip(pairs, alignments):
        for span_a, span_b, _score in found:
            add(utts[i], span_a)
            add(utts[j], span_b)
    return segments


def write_segments(path, segments: list[Segment]) -> None:
    """segments.jsonl: one segment per line (id, utterance, span, symbols)."""
    import json

    with open(path, "w") as fh:
        for seg in segments:
            fh.write(json.dumps({
                "id": seg.id,
                "utterance": seg.utterance_id,
                "span": [seg.start, seg.end],
                "symbols": list(seg.symbols),
            }, sort_keys=True) + "\n")


def load_segments(path) -> list[Segment]:
    import json

    segments = []
    with open(path) as fh:
        for line in fh:
            blob = json.loads(line)
            segments.append(Segment(
                id=blob["id"],
                utterance_id=blob["utterance"],
                start=blob["span"][0],
                end=blob["span"][1],
                symbols=tuple(blob["symbols"]),
            ))
    return segments
