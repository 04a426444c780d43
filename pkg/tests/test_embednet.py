import numpy as np
import pytest

from termforge import embednet
from termforge.embednet import (NetArch, TrainConfig, TrainingDiverged,
                                backward, batch_loss, contrastive_loss,
                                embed_all, forward, init_params, load_params,
                                pad_or_truncate, save_params, train,
                                triplet_loss)
from termforge.mining import PairManifest, SiamesePair, Triplet
from termforge.seqmatch import AlignScoring, discover_segments
from termforge.synthgen import SynthConfig, generate
from termforge.util import rng_from

SMALL = NetArch(l_max=24, feature_dim=8)


def test_pad_identity():
    x = np.arange(12.0).reshape(4, 3)
    assert (pad_or_truncate(x, 4) == x).all()


def test_pad_appends_zero_rows():
    x = np.ones((3, 2))
    padded = pad_or_truncate(x, 5)
    assert padded.shape == (5, 2)
    assert (padded[3:] == 0).all() and (padded[:3] == 1).all()


def test_truncate_keeps_head():
    x = np.arange(14.0).reshape(7, 2)
    assert (pad_or_truncate(x, 5) == x[:5]).all()


def test_forward_zero_params_zero_input():
    params = init_params(SMALL, 0)
    for name in params.arrays:
        params.arrays[name][:] = 0.0
    out = forward(params, np.zeros((SMALL.l_max, SMALL.feature_dim)))
    assert out.shape == (SMALL.embed_dim,)
    assert (out == 0.0).all()


def test_zero_input_zero_bias_gives_zero_embedding():
    params = init_params(SMALL, 3)   # weights random, biases zero
    out = forward(params, np.zeros((SMALL.l_max, SMALL.feature_dim)))
    assert (out == 0.0).all()


def test_final_layer_is_linear():
    params = init_params(SMALL, 4)
    rng = rng_from(1)
    x = rng.standard_normal((SMALL.l_max, SMALL.feature_dim))
    base = forward(params, x)
    doubled = params.copy()
    doubled.arrays["Wo"] *= 2.0
    doubled.arrays["bo"] *= 2.0
    assert np.allclose(forward(doubled, x), 2.0 * base, atol=1e-12)


def naive_forward(params, x):
    """Independent layer-by-layer re-evaluation with plain loops."""
    arch = params.arch
    p = params.arrays

    def conv(inp, W, b):
        t_out = inp.shape[0] - W.shape[2] + 1
        out = np.zeros((t_out, W.shape[0]))
        for t in range(t_out):
            for o in range(W.shape[0]):
                acc = b[o]
                for i in range(W.shape[1]):
                    for k in range(W.shape[2]):
                        acc += W[o, i, k] * inp[t + k, i]
                out[t, o] = acc
        return out

    def pool(inp, width):
        t_out = inp.shape[0] // width
        out = np.zeros((t_out, inp.shape[1]))
        for t in range(t_out):
            for c in range(inp.shape[1]):
                out[t, c] = max(inp[t * width + j, c] for j in range(width))
        return out

    relu = lambda v: np.maximum(v, 0.0)
    h = pool(relu(conv(x, p["W1"], p["b1"])), arch.pool_width)
    h = pool(relu(conv(h, p["W2"], p["b2"])), arch.pool_width)
    h = relu(conv(h, p["W3"], p["b3"]))
    h = h.reshape(-1)
    h = relu(h @ p["Wf1"] + p["bf1"])
    h = relu(h @ p["Wf2"] + p["bf2"])
    return h @ p["Wo"] + p["bo"]


def test_forward_matches_naive_oracle():
    params = init_params(SMALL, 7)
    rng = rng_from(2)
    for _ in range(3):
        x = rng.standard_normal((SMALL.l_max, SMALL.feature_dim))
        assert np.allclose(forward(params, x), naive_forward(params, x), atol=1e-10)


def test_contrastive_closed_forms():
    e = np.array([0.3, -0.2, 1.0])
    assert contrastive_loss(e, e, 1, 1.0) == 0.0
    far = e + np.array([2.0, 0.0, 0.0])
    assert contrastive_loss(e, far, 0, 1.0) == 0.0          # hinge inactive
    assert abs(contrastive_loss(e, e, 0, 1.0) - 0.5) < 1e-12


def test_triplet_closed_forms():
    ea = np.zeros(4)
    ep = np.array([1.0, 0, 0, 0])
    assert abs(triplet_loss(ea, ep, ep, 1.0) - 1.0) < 1e-12  # distances cancel
    en_far = np.array([2.0, 0, 0, 0])
    assert triplet_loss(ea, ep, en_far, 1.0) == 0.0          # gap >= margin
    en = np.array([1.2, 0, 0, 0])
    assert abs(triplet_loss(ea, ep, en, 1.0) - 0.56) < 1e-12


def test_contrastive_matched_gradient_is_difference():
    rng = rng_from(8)
    e0 = rng.standard_normal((5, 7))
    e1 = rng.standard_normal((5, 7))
    _, grad = embednet._contrastive_batch(e0, e1, np.ones(5, dtype=int), 1.0)
    assert np.allclose(grad, e0 - e1, atol=1e-14)


def test_zero_loss_batch_zero_gradient():
    params = init_params(SMALL, 9)
    rng = rng_from(3)
    x = rng.standard_normal((3, SMALL.l_max, SMALL.feature_dim))
    batch = {"x0": x, "x1": x.copy(), "y": np.ones(3, dtype=int)}
    loss, grads = backward(params, batch, "siamese", margin=1.0)
    assert loss == 0.0
    assert all((g == 0.0).all() for g in grads.values())


def _state_signature(params, batch, kind):
    keys = ("x0", "x1") if kind == "siamese" else ("xa", "xp", "xn")
    parts = []
    for key in keys:
        _, cache = embednet._forward_cached(params, batch[key])
        for z in ("z1", "z2", "z3", "zf1", "zf2"):
            parts.append((cache[z] > 0).tobytes())
        parts.append(cache["idx1"].tobytes())
        parts.append(cache["idx2"].tobytes())
    return b"".join(parts)


def run_gradient_check(params, batch, kind, margin, n_probes, h, rng,
                       max_skipped=None):
    """Central-difference check; probes whose activation signature flips
    between theta-h and theta+h cross a kink, where the finite-difference
    oracle is invalid, and are re-drawn."""
    _, grads = backward(params, batch, kind, margin)
    names = list(embednet.PARAM_ORDER)
    checked = 0
    skipped = 0
    worst = 0.0
    while checked < n_probes:
        name = names[int(rng.integers(0, len(names)))]
        flat = params.arrays[name].reshape(-1)
        k = int(rng.integers(0, flat.size))
        orig = flat[k]
        flat[k] = orig + h
        sig_plus = _state_signature(params, batch, kind)
        loss_plus = batch_loss(params, batch, kind, margin)
        flat[k] = orig - h
        sig_minus = _state_signature(params, batch, kind)
        loss_minus = batch_loss(params, batch, kind, margin)
        flat[k] = orig
        if sig_plus != sig_minus:
            skipped += 1
            if max_skipped is not None:
                assert skipped <= max_skipped, "too many kink crossings"
            continue
        numeric = (loss_plus - loss_minus) / (2 * h)
        analytic = grads[name].reshape(-1)[k]
        rel = abs(numeric - analytic) / max(abs(numeric) + abs(analytic), 1e-8)
        worst = max(worst, rel)
        checked += 1
    return worst, skipped


@pytest.mark.parametrize("kind", ["siamese", "triplet"])
def test_gradients_match_finite_differences(kind):
    params = init_params(SMALL, 123)
    rng = rng_from(99)
    B = 4
    batch = {
        "x0": rng.standard_normal((B, 24, 8)),
        "x1": rng.standard_normal((B, 24, 8)),
        "y": np.array([1, 0, 1, 0]),
        "xa": rng.standard_normal((B, 24, 8)),
        "xp": rng.standard_normal((B, 24, 8)),
        "xn": rng.standard_normal((B, 24, 8)),
    }
    worst, skipped = run_gradient_check(params, batch, kind, margin=1.0,
                                        n_probes=60, h=1e-5, rng=rng_from(5))
    assert worst < 1e-4, f"worst relative error {worst}"
    assert skipped <= 10


def _toy_training_setup(seed=0):
    """Separable two-class data: constant features 1.0 vs -1.0."""
    config = SynthConfig(vocabulary_size=2, word_length_range=(4, 4),
                         occurrences_per_word=6, alphabet_size=4, feature_dim=8,
                         frames_per_subword_range=(3, 3), words_per_utterance=1,
                         min_word_separation=0.9, seed=seed)
    corpus, _ = generate(config)
    segments = discover_segments(corpus, AlignScoring())
    # group segments by symbol string: two groups
    groups = {}
    for seg in segments:
        groups.setdefault(seg.symbols, []).append(seg.id)
    group_a, group_b = list(groups.values())[:2]
    pairs = []
    triplets = []
    for i in range(5):
        pairs.append(SiamesePair(group_a[i], group_a[i + 1], 1, (0, 0)))
        pairs.append(SiamesePair(group_a[i], group_b[i], 0, (0, 1)))
        triplets.append(Triplet(group_a[i], group_a[i + 1], group_b[i], (0, 1)))
        triplets.append(Triplet(group_b[i], group_b[i + 1], group_a[i], (1, 0)))
    manifest = PairManifest(siamese_pairs=pairs, triplets=triplets, sample_seed=0)
    return corpus, segments, manifest


def test_zero_learning_rate_is_identity():
    corpus, segments, manifest = _toy_training_setup()
    arch = NetArch(l_max=24, feature_dim=8)
    params = init_params(arch, 5)
    config = TrainConfig(learning_rate=0.0, batch_size=4, max_epochs=3,
                         seed=1, l_max=24)
    trained, curve = train(params, manifest, corpus, segments, config, "siamese")
    for name in params.arrays:
        assert (trained.arrays[name] == params.arrays[name]).all()
    assert len(set(curve)) == 1   # flat loss curve


@pytest.mark.parametrize("mode", ["siamese", "triplet"])
def test_training_reduces_loss(mode):
    corpus, segments, manifest = _toy_training_setup()
    arch = NetArch(l_max=24, feature_dim=8)
    params = init_params(arch, 5)
    config = TrainConfig(learning_rate=0.05, batch_size=4, max_epochs=12,
                         seed=1, l_max=24)
    _, curve = train(params, manifest, corpus, segments, config, mode)
    assert curve[-1] < curve[0]


def test_training_deterministic():
    corpus, segments, manifest = _toy_training_setup()
    arch = NetArch(l_max=24, feature_dim=8)
    curves = []
    finals = []
    for _ in range(2):
        params = init_params(arch, 5)
        config = TrainConfig(learning_rate=0.05, batch_size=4, max_epochs=5,
                             seed=1, l_max=24)
        trained, curve = train(params, manifest, corpus, segments, config, "triplet")
        curves.append(tuple(curve))
        finals.append(trained)
    assert curves[0] == curves[1]
    for name in finals[0].arrays:
        assert (finals[0].arrays[name] == finals[1].arrays[name]).all()


def test_divergence_guard():
    # the matched contrastive term grows quadratically with distance, so an
    # absurd learning rate drives the epoch mean to overflow
    corpus, segments, manifest = _toy_training_setup()
    arch = NetArch(l_max=24, feature_dim=8)
    params = init_params(arch, 5)
    config = TrainConfig(learning_rate=1e12, batch_size=4, max_epochs=20,
                         seed=1, l_max=24)
    with pytest.raises(TrainingDiverged):
        with np.errstate(over="ignore", invalid="ignore"):
            train(params, manifest, corpus, segments, config, "siamese")


def test_embed_all_rows_and_duplicates():
    corpus, segments, _ = _toy_training_setup()
    arch = NetArch(l_max=24, feature_dim=8)
    params = init_params(arch, 6)
    table = embed_all(params, segments, corpus, l_max=24)
    assert table.shape == (len(segments), arch.embed_dim)
    by_symbols = {}
    for row, seg in zip(table, segments):
        key = seg.symbols
        if key in by_symbols:
            assert np.allclose(by_symbols[key], row, atol=1e-12)
        else:
            by_symbols[key] = row


def test_trained_embeddings_separate_classes():
    corpus, segments, manifest = _toy_training_setup()
    arch = NetArch(l_max=24, feature_dim=8)
    params = init_params(arch, 5)
    config = TrainConfig(learning_rate=0.05, batch_size=4, max_epochs=15,
                         seed=1, l_max=24)
    trained, _ = train(params, manifest, corpus, segments, config, "triplet")
    table = embed_all(trained, segments, corpus, l_max=24)
    groups = {}
    for row, seg in zip(table, segments):
        groups.setdefault(seg.symbols, []).append(row)
    (rows_a, rows_b) = [np.array(v) for v in groups.values()][:2]
    intra = max(
        np.linalg.norm(rows_a - rows_a.mean(0), axis=1).mean(),
        np.linalg.norm(rows_b - rows_b.mean(0), axis=1).mean(),
    )
    inter = np.linalg.norm(rows_a.mean(0) - rows_b.mean(0))
    assert inter > intra


def test_branches_share_parameters():
    params = init_params(SMALL, 11)
    rng = rng_from(4)
    x = rng.standard_normal((2, SMALL.l_max, SMALL.feature_dim))
    batch = {"xa": x, "xp": x.copy(), "xn": x.copy()}
    ea, _ = embednet._forward_cached(params, batch["xa"])
    ep, _ = embednet._forward_cached(params, batch["xp"])
    en, _ = embednet._forward_cached(params, batch["xn"])
    assert (ea == ep).all() and (ea == en).all()


def test_checkpoint_round_trip(tmp_path):
    params = init_params(SMALL, 42)
    path = tmp_path / "params.ckpt"
    save_params(path, params)
    restored = load_params(path)
    assert restored.arch == params.arch
    assert restored.init_seed == params.init_seed
    for name in params.arrays:
        assert (restored.arrays[name] == params.arrays[name]).all()


def test_bad_input_shape_rejected():
    params = init_params(SMALL, 1)
    with pytest.raises(ValueError, match="does not match arch"):
        forward(params, np.zeros((10, 8)))


def test_arch_too_short_rejected():
    with pytest.raises(ValueError, match="too short"):
        NetArch(l_max=10, feature_dim=8).time_lengths()
