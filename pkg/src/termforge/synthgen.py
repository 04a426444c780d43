"""Ground-truthed synthetic corpora with planted repeated terms.

Stands in for a real first-stage decoder: utterances are concatenations of
vocabulary words (plus optional filler subwords), features are per-subword
prototype vectors plus Gaussian noise, and the emitted pseudo-transcription
is the true symbol string corrupted by independent substitutions. Features
always come from the TRUE symbols, so embedding learning can outperform
symbol matching once substitution noise is turned on.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .corpus import Corpus, GoldAnnotation, GoldToken, Segment, Utterance, UtteranceGold
from .seqmatch import normalized_levenshtein
from .util import derive_seed, rng_from


class SynthError(ValueError):
    """Unsatisfiable synthesis configuration."""


@dataclass
class SynthConfig:
    vocabulary_size: int
    word_length_range: tuple[int, int] = (4, 6)
    occurrences_per_word: int = 20
    alphabet_size: int = 55
    feature_dim: int = 40
    frames_per_subword_range: tuple[int, int] = (2, 4)
    symbol_substitution_rate: float = 0.0
    feature_noise_sigma: float = 0.0
    filler_rate: float = 0.0
    words_per_utterance: int = 8
    min_word_separation: float = 0.0   # pairwise normalized Levenshtein floor
    indel_rate: float = 0.0            # extension flag, off by default
    seed: int = 0

    def validate(self) -> None:
        if self.vocabulary_size < 1:
            raise SynthError("vocabulary_size must be positive")
        for name, (lo, hi) in (
            ("word_length_range", self.word_length_range),
            ("frames_per_subword_range", self.frames_per_subword_range),
        ):
            if lo < 1 or hi < lo:
                raise SynthError(f"{name} must be a non-empty positive range")
        for name, rate in (
            ("symbol_substitution_rate", self.symbol_substitution_rate),
            ("filler_rate", self.filler_rate),
            ("indel_rate", self.indel_rate),
        ):
            if not 0.0 <= rate <= 1.0:
                raise SynthError(f"{name} must be in [0, 1]")
        if self.feature_noise_sigma < 0:
            raise SynthError("feature_noise_sigma must be non-negative")
        if self.alphabet_size < 2:
            raise SynthError("alphabet_size must be at least 2")
        if self.words_per_utterance < 1:
            raise SynthError("words_per_utterance must be positive")
        if not 0.0 <= self.min_word_separation <= 1.0:
            raise SynthError("min_word_separation must be in [0, 1]")


def _sample_vocabulary(config: SynthConfig) -> list[tuple[int, ...]]:
    lo, hi = config.word_length_range
    capacity = sum(config.alphabet_size ** length for length in range(lo, hi + 1))
    if config.vocabulary_size > capacity:
        raise SynthError(
            f"cannot build {config.vocabulary_size} distinct words of length "
            f"{lo}..{hi} over {config.alphabet_size} symbols"
        )
    rng = rng_from(derive_seed(config.seed, "vocabulary"))
    words: list[tuple[int, ...]] = []
    seen = set()
    attempts = 0
    while len(words) < config.vocabulary_size:
        attempts += 1
        if attempts > 1000 * config.vocabulary_size:
            raise SynthError("failed to sample a duplicate-free vocabulary")
        length = int(rng.integers(lo, hi + 1))
        word = tuple(int(s) for s in rng.integers(0, config.alphabet_size, size=length))
        if word in seen:
            continue
        if config.min_word_separation > 0 and any(
                normalized_levenshtein(word, other) < config.min_word_separation
                for other in words):
            continue
        seen.add(word)
        words.append(word)
    return words


def _substitute(symbols: list[int], rate: float, alphabet: int,
                rng: np.random.Generator) -> list[int]:
    if rate == 0.0 or not symbols:
        return list(symbols)
    flips = rng.random(len(symbols)) < rate
    out = list(symbols)
    for i in np.flatnonzero(flips):
        # uniform over the alphabet minus the original symbol
        repl = int(rng.integers(0, alphabet - 1))
        if repl >= out[i]:
            repl += 1
        out[i] = repl
    return out


def _apply_indels(symbols: list[int], spans: list[tuple[int, int]], rate: float,
                  alphabet: int, rng: np.random.Generator):
    """Optional insertion/deletion noise on the emitted transcription.

    Deletions hand their frames to the previous symbol (next, if first);
    insertions split a span >= 2 frames and emit a random symbol in the
    second half. Gold spans are left untouched, so they stop aligning with
    the transcription once this is enabled.
    """
    out_syms: list[int] = []
    out_spans: list[tuple[int, int]] = []
    for sym, (start, end) in zip(symbols, spans):
        action = rng.random()
        if action < rate / 2 and (out_spans or len(symbols) > 1):
            # delete: frames absorbed by the previous span when one exists
            if out_spans:
                prev_s, _ = out_spans[-1]
                out_spans[-1] = (prev_s, end)
            else:
                # first symbol: mark for absorption by the next one
                out_spans.append((start, end))
                out_syms.append(-1)
            continue
        out_syms.append(sym)
        out_spans.append((start, end))
        if rate / 2 <= action < rate and end - start >= 2:
            mid = (start + end) // 2
            out_spans[-1] = (start, mid)
            out_syms.append(int(rng.integers(0, alphabet)))
            out_spans.append((mid, end))
    if out_syms and out_syms[0] == -1:
        if len(out_syms) > 1:
            merged_end = out_spans[1][1]
            out_syms = out_syms[1:]
            out_spans = [(out_spans[0][0], merged_end)] + out_spans[2:]
        else:
            out_syms = [int(rng.integers(0, alphabet))]
    return out_syms, out_spans


def generate(config: SynthConfig) -> tuple[Corpus, GoldAnnotation]:
    """Build a corpus plus gold annotation; deterministic for a fixed seed."""
    config.validate()
    vocabulary = _sample_vocabulary(config)
    prototypes = rng_from(derive_seed(config.seed, "prototypes")).standard_normal(
        (config.alphabet_size, config.feature_dim)
    )

    token_stream = np.repeat(np.arange(config.vocabulary_size), config.occurrences_per_word)
    token_stream = rng_from(derive_seed(config.seed, "order")).permutation(token_stream)

    utterances: list[Utterance] = []
    gold_utts: dict[str, UtteranceGold] = {}
    n_utts = (len(token_stream) + config.words_per_utterance - 1) // config.words_per_utterance
    pad = max(4, len(str(n_utts)))
    frames_lo, frames_hi = config.frames_per_subword_range

    for u in range(n_utts):
        utt_id = f"u{u:0{pad}d}"
        rng = rng_from(derive_seed(config.seed, f"utterance:{u}"))
        words = token_stream[u * config.words_per_utterance:(u + 1) * config.words_per_utterance]

        # token layout: (kind, payload) with fillers between words
        tokens: list[tuple[str, object]] = []
        for pos, word_idx in enumerate(words):
            if pos > 0 and config.filler_rate > 0 and rng.random() < config.filler_rate:
                tokens.append(("filler", int(rng.integers(0, config.alphabet_size))))
            tokens.append(("word", int(word_idx)))

        true_symbols: list[int] = []
        token_sym_counts: list[int] = []
        for kind, payload in tokens:
            syms = vocabulary[payload] if kind == "word" else (payload,)
            true_symbols.extend(syms)
            token_sym_counts.append(len(syms))

        frame_counts = rng.integers(frames_lo, frames_hi + 1, size=len(true_symbols))
        spans: list[tuple[int, int]] = []
        cursor = 0
        for count in frame_counts:
            spans.append((cursor, cursor + int(count)))
            cursor += int(count)
        total_frames = cursor

        blocks = []
        for sym, (start, end) in zip(true_symbols, spans):
            block = np.repeat(prototypes[sym][None, :], end - start, axis=0)
            if config.feature_noise_sigma > 0:
                block = block + config.feature_noise_sigma * rng.standard_normal(block.shape)
            blocks.append(block)
        features = np.concatenate(blocks, axis=0).astype(np.float32)

        emitted = _substitute(true_symbols, config.symbol_substitution_rate,
                              config.alphabet_size, rng)
        emitted_spans = list(spans)
        if config.indel_rate > 0:
            emitted, emitted_spans = _apply_indels(
                emitted, emitted_spans, config.indel_rate, config.alphabet_size, rng
            )

        utterances.append(Utterance(
            id=utt_id,
            features=features,
            transcription=tuple(emitted),
            frame_spans=tuple(emitted_spans),
        ))

        boundaries = [0]
        gold_tokens = []
        sym_cursor = 0
        for (kind, payload), count in zip(tokens, token_sym_counts):
            start = spans[sym_cursor][0]
            end = spans[sym_cursor + count - 1][1]
            boundaries.append(end)
            if kind == "word":
                gold_tokens.append(GoldToken(payload, start, end, vocabulary[payload]))
            sym_cursor += count
        gold_utts[utt_id] = UtteranceGold(
            boundaries=tuple(boundaries),
            tokens=tuple(gold_tokens),
            true_symbols=tuple(true_symbols),
            true_spans=tuple(spans),
        )
        assert boundaries[-1] == total_frames

    corpus = Corpus(config.feature_dim, config.alphabet_size, utterances)
    gold = GoldAnnotation(gold_utts)
    gold.validate(corpus)
    return corpus, gold


def gold_segment_label(gold: GoldAnnotation, segment: Segment) -> int | None:
    """Gold word whose token overlaps the segment by more than half in both
    directions (strictly, so a segment spanning two equal words stays
    unlabelled)."""
    utt_gold = gold.utterances.get(segment.utterance_id)
    if utt_gold is None:
        return None
    seg_len = segment.end - segment.start
    best: tuple[int, int, int] | None = None   # (-overlap, token start, word id)
    for token in utt_gold.tokens:
        inter = min(segment.end, token.end) - max(segment.start, token.start)
        if inter <= 0:
            continue
        if inter * 2 > seg_len and inter * 2 > (token.end - token.start):
            key = (-inter, token.start, token.word_id)
            if best is None or key < best:
                best = key
    return None if best is None else best[2]
