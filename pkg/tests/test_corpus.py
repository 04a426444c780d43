import numpy as np
import pytest

from termforge.corpus import (Corpus, CorpusError, Segment, Utterance,
                              load_corpus, slice_features, symbols_in_span,
                              write_corpus)

from conftest import make_corpus, make_segment, make_utterance


def test_round_trip_two_utterances(tmp_path, rng):
    utts = []
    for i in range(2):
        frames = int(rng.integers(6, 12))
        features = rng.standard_normal((frames, 5)).astype(np.float32)
        n_syms = frames // 2
        spans = tuple((2 * k, 2 * k + 2) for k in range(n_syms))
        symbols = tuple(int(s) for s in rng.integers(0, 55, size=n_syms))
        utts.append(Utterance(f"u{i}", features, symbols, spans))
    corpus = Corpus(5, 55, utts)
    write_corpus(corpus, tmp_path)
    loaded = load_corpus(tmp_path)
    assert len(loaded) == 2
    for original, restored in zip(corpus, loaded):
        assert restored.id == original.id
        assert restored.transcription == original.transcription
        assert restored.frame_spans == original.frame_spans
        # float payloads must survive bit-exactly
        assert restored.features.tobytes() == original.features.tobytes()


def test_empty_utterance_rejected():
    features = np.zeros((0, 4), dtype=np.float32)
    with pytest.raises(CorpusError, match="empty utterance"):
        Corpus(4, 55, [Utterance("u0", features, (), ())])


def test_span_symbol_length_mismatch(tmp_path):
    corpus = make_corpus([[1, 2, 3]])
    write_corpus(corpus, tmp_path)
    sym_file = tmp_path / "u0.sym"
    lines = sym_file.read_text().splitlines()
    lines[0] = lines[0] + " 9"     # one extra symbol, no extra span
    sym_file.write_text("\n".join(lines) + "\n")
    with pytest.raises(CorpusError, match="span/symbol length mismatch"):
        load_corpus(tmp_path)


def test_feature_dim_mismatch_names_utterance(tmp_path):
    corpus = make_corpus([[1, 2]])
    write_corpus(corpus, tmp_path)
    manifest = (tmp_path / "manifest.json").read_text().replace('"feature_dim": 4',
                                                                '"feature_dim": 8')
    (tmp_path / "manifest.json").write_text(manifest)
    with pytest.raises(CorpusError, match="u0"):
        load_corpus(tmp_path)


def test_missing_file_reported(tmp_path):
    corpus = make_corpus([[1, 2]])
    write_corpus(corpus, tmp_path)
    (tmp_path / "u0.feat").unlink()
    with pytest.raises(CorpusError, match="missing file"):
        load_corpus(tmp_path)


def test_write_to_invalid_path_raises(tmp_path):
    corpus = make_corpus([[1, 2]])
    blocker = tmp_path / "blocker"
    blocker.write_text("not a directory")
    with pytest.raises(OSError):
        write_corpus(corpus, blocker / "corpus")


def test_slice_full_matrix():
    corpus = make_corpus([[3, 1, 4]])
    seg = make_segment(0, "u0", (0, 3), corpus)
    sliced = slice_features(corpus, seg)
    assert sliced.shape == (6, 4)
    assert (sliced == corpus["u0"].features).all()


def test_slice_single_row():
    corpus = make_corpus([[3, 1, 4]], frames_per_symbol=1)
    seg = Segment(0, "u0", 1, 2, (1,))
    row = slice_features(corpus, seg)
    assert row.shape == (1, 4)
    assert (row == corpus["u0"].features[1]).all()


def test_slice_invalid_span_rejected():
    corpus = make_corpus([[3, 1, 4]])
    with pytest.raises(CorpusError):
        Segment(0, "u0", 5, 3, (1,))
    seg = Segment(0, "u0", 2, 99, (1,))
    with pytest.raises(CorpusError, match="out of range"):
        slice_features(corpus, seg)


def test_slice_shape_property(rng):
    corpus = make_corpus([list(rng.integers(0, 55, size=8)) for _ in range(3)])
    for utt in corpus:
        for _ in range(10):
            lo = int(rng.integers(0, len(utt.transcription)))
            hi = int(rng.integers(lo + 1, len(utt.transcription) + 1))
            seg = make_segment(0, utt.id, (lo, hi), corpus)
            sliced = slice_features(corpus, seg)
            assert sliced.shape == (seg.end - seg.start, corpus.feature_dim)


def test_symbols_in_span_overlap_rule():
    utt = make_utterance("u0", [7, 8, 9], frames_per_symbol=4)
    # spans: [0,4) [4,8) [8,12); cover half of the middle symbol exactly
    assert symbols_in_span(utt, 0, 6) == (7, 8)
    assert symbols_in_span(utt, 0, 5) == (7,)
    assert symbols_in_span(utt, 4, 12) == (8, 9)
