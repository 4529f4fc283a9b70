import math

import numpy as np
import pytest

from conftest import random_pairs, small_params
from morphoseq import seq2seq as m
from morphoseq.numcore import NumericError, finite_diff_grad
from morphoseq.tokenizer import EOW_ID, Vocabulary, encode_input, detokenize


# -- init -------------------------------------------------------------------

def test_init_deterministic_and_bounded():
    cfg = m.ModelConfig(embed_dim=8, hidden_dim=6, seed=5)
    a, b = m.init_params(cfg, 12), m.init_params(cfg, 12)
    assert all(a[k].tobytes() == b[k].tobytes() for k in a)
    for name, v in a.items():
        s = m.init_scale(name, v.shape)
        if v.ndim == 1:
            assert (v == 0).all()
        else:
            assert (np.abs(v) < s).all()
    assert m.init_params(m.ModelConfig(embed_dim=8, hidden_dim=6, seed=6), 12)["W_o"].tobytes() \
        != a["W_o"].tobytes()


def test_init_vocab_size_mismatch():
    with pytest.raises(ValueError):
        m.init_params(m.ModelConfig(vocab_size=5), 7)


def test_param_shapes():
    p = small_params(0)
    assert p["embed"].shape == (12, 8)
    assert p["enc.W_z"].shape == (8, 6) and p["dec.U_h"].shape == (6, 6)
    assert p["W_c"].shape == (12, 6) and p["W_o"].shape == (6, 12) and p["b_o"].shape == (12,)


# -- encoder ----------------------------------------------------------------

def test_encode_zero_weights_gives_zero_states():
    p = {k: np.zeros_like(v) for k, v in small_params(0).items()}
    states = m.encode(p, [4, 5, 6, 3])
    assert states.shape == (4, 6) and (states == 0).all()


def test_encode_length_one():
    assert m.encode(small_params(0), [3]).shape == (1, 6)


def test_encode_rejects_out_of_range_index():
    with pytest.raises(IndexError):
        m.encode(small_params(0), [12])


def _scalar_gru(p, side, x, h):
    """Straight-line GRU step over Python floats (independent of numpy matmul)."""
    H = len(h)

    def pre(gate, hin):
        W, U, b = p[f"{side}.W_{gate}"], p[f"{side}.U_{gate}"], p[f"{side}.b_{gate}"]
        return [sum(x[i] * W[i][j] for i in range(len(x))) + sum(hin[i] * U[i][j] for i in range(H))
                + b[j] for j in range(H)]

    sig = lambda v: 1.0 / (1.0 + math.exp(-v))
    z = [sig(v) for v in pre("z", h)]
    r = [sig(v) for v in pre("r", h)]
    n = [math.tanh(v) for v in pre("h", [r[i] * h[i] for i in range(H)])]
    return [(1 - z[j]) * h[j] + z[j] * n[j] for j in range(H)]


def test_encode_matches_scalar_recomputation():
    p = small_params(3, vocab_size=5, embed=3, hidden=2)
    plist = {k: v.tolist() for k, v in p.items()}
    h = [0.0, 0.0]
    expected = []
    for tok in (4, 2):
        h = _scalar_gru(plist, "enc", plist["embed"][tok], h)
        expected.append(h)
    np.testing.assert_allclose(m.encode(p, [4, 2]), expected, rtol=1e-13, atol=1e-15)


# -- attention / decode step -------------------------------------------------

def test_attend_single_state():
    s = np.array([[0.3, -0.2]])
    ctx, w = m.attend(np.array([1.0, 2.0]), s)
    assert w.tolist() == [1.0]
    np.testing.assert_array_equal(ctx, s[0])


def test_attend_orthogonal_query_gives_mean():
    s = np.array([[0.0, 1.0], [0.0, -3.0], [0.0, 0.5]])
    ctx, w = m.attend(np.array([2.0, 0.0]), s)
    np.testing.assert_allclose(w, [1 / 3] * 3, atol=1e-15)
    np.testing.assert_allclose(ctx, s.mean(axis=0), atol=1e-15)


def test_attend_ln2_scores():
    s = np.array([[0.0, 0.0], [math.log(2), 0.0]])
    _, w = m.attend(np.array([1.0, 0.0]), s)
    np.testing.assert_allclose(w, [1 / 3, 2 / 3], atol=1e-15)


def test_decode_step_zero_output_layer_is_uniform():
    p = small_params(1)
    p["W_o"][:] = 0
    p["b_o"][:] = 0
    states = m.encode(p, [4, 5, 3])
    dist, _, _ = m.decode_step(p, EOW_ID, states[-1], states)
    np.testing.assert_allclose(dist, np.full(12, 1 / 12), atol=1e-16)


def test_decode_step_distribution_and_attention():
    p = small_params(2)
    states = m.encode(p, [4, 7, 9, 3])
    dist, h_new, alpha = m.decode_step(p, 5, states[-1], states)
    assert abs(dist.sum() - 1) < 1e-12
    _, expected_alpha = m.attend(h_new, states)
    np.testing.assert_array_equal(alpha, expected_alpha)


# -- loss -------------------------------------------------------------------

def test_uniform_output_loss_is_log_v():
    p = small_params(0)
    p["W_o"][:] = 0
    p["b_o"][:] = 0
    loss, _ = m.forward_loss(p, [([4, 5, 3], [6, 7, 8, 3])])
    assert loss == pytest.approx(math.log(12), abs=1e-14)


def test_loss_matches_decode_step_composition():
    p = small_params(4)
    src, tgt = [4, 8, 5, 3], [9, 6, 3]
    states = m.encode(p, src)
    h, prev, nll = states[-1], EOW_ID, []
    for y in tgt:
        dist, h, _ = m.decode_step(p, prev, h, states)
        nll.append(-math.log(dist[y]))
        prev = y
    loss, _ = m.forward_loss(p, [(src, tgt)])
    assert loss == pytest.approx(sum(nll) / len(nll), rel=1e-12)
    assert loss >= 0


@pytest.mark.parametrize("seed", range(5))
def test_batched_loss_equals_mean_of_single_losses(seed):
    p = small_params(seed)
    pairs = random_pairs(seed, n=5)
    batched, _ = m.forward_loss(p, pairs)
    single = np.mean([m.forward_loss(p, [pp])[0] for pp in pairs])
    assert abs(batched - single) < 1e-10


def test_non_finite_loss_reports_step():
    p = small_params(0)
    p["b_o"][5] = np.inf
    with pytest.raises(NumericError, match="step"):
        m.forward_loss(p, [([4, 3], [6, 3])])


def test_empty_target_rejected():
    with pytest.raises(ValueError):
        m.forward_loss(small_params(0), [([4, 3], [])])


# -- gradients ---------------------------------------------------------------

def max_rel_error(params, pairs, h=1e-5):
    _, grads = m.loss_and_grads(params, pairs)
    fd = finite_diff_grad(lambda q: m.forward_loss(q, pairs)[0], params, h)
    return max(float(np.max(np.abs(grads[k] - fd[k]) / np.maximum(1.0, np.abs(fd[k]))))
               for k in params)


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_gradients_match_finite_differences(seed):
    assert max_rel_error(small_params(seed), random_pairs(seed)) < 1e-5


def test_absent_tokens_get_zero_embedding_gradient():
    p = small_params(0)
    _, g = m.loss_and_grads(p, [([4, 5, 3], [6, 3])])
    used = {3, 4, 5, 6}
    for tok in range(12):
        if tok not in used:
            assert (g["embed"][tok] == 0).all()


def test_duplicated_token_gradient_is_sum_over_occurrences():
    p = small_params(7)
    tied = ([4, 9, 4, 3], [6, 3])
    # untie: vocab entry 12 is a copy of 4 that can never be emitted
    q = {k: v.copy() for k, v in p.items()}
    q["embed"] = np.vstack([p["embed"], p["embed"][4]])
    q["W_o"] = np.hstack([p["W_o"], np.zeros((6, 1))])
    q["b_o"] = np.append(p["b_o"], -1e300)
    untied = ([4, 9, 12, 3], [6, 3])
    lt, gt = m.loss_and_grads(p, [tied])
    lu, gu = m.loss_and_grads(q, [untied])
    assert lt == pytest.approx(lu, abs=1e-14)
    np.testing.assert_allclose(gt["embed"][4], gu["embed"][4] + gu["embed"][12], atol=1e-13)


# -- decoding and training --------------------------------------------------

def test_greedy_decode_max_len_and_trace():
    p = small_params(3)
    out, trace = m.greedy_decode(p, [4, 5, 6, 3], max_len=1)
    assert len(out) == 1 and trace.shape == (1, 4)
    out, trace = m.greedy_decode(p, [4, 5, 6, 3], max_len=7)
    assert trace.shape[0] == len(out) <= 7
    np.testing.assert_allclose(trace.sum(axis=1), 1.0, atol=1e-9)
    assert ((trace >= 0) & (trace <= 1)).all()


def test_greedy_ties_break_to_lowest_index():
    p = small_params(3)
    p["W_o"][:] = 0
    p["b_o"][:] = 0
    out, _ = m.greedy_decode(p, [4, 3], max_len=3)
    assert out == [0, 0, 0]


def test_greedy_decode_default_max_len():
    p = small_params(3)
    p["W_o"][:] = 0
    p["b_o"][:] = 0
    out, _ = m.greedy_decode(p, [4, 5, 3])
    assert len(out) == m.default_max_len(3) == 16


def test_zero_epochs_returns_init(retro):
    vocab = Vocabulary.build([retro], "charmorph")
    cfg = m.ModelConfig(embed_dim=8, hidden_dim=6, epochs=0, seed=2)
    params, losses = m.train([retro], vocab, cfg)
    init = m.init_params(cfg, vocab)
    assert losses == [] and all(params[k].tobytes() == init[k].tobytes() for k in init)


def test_train_empty_raises(retro):
    with pytest.raises(ValueError):
        m.train([], Vocabulary.build([retro], "char"), m.ModelConfig())


def test_training_is_deterministic(retro):
    from morphoseq.synthetic import make_corpus
    data = make_corpus(6, 4, seed=1)
    vocab = Vocabulary.build(data, "charmorph")
    cfg = m.ModelConfig(embed_dim=16, hidden_dim=12, batch_size=5, epochs=3, seed=9)
    p1, l1 = m.train(data, vocab, cfg)
    p2, l2 = m.train(data, vocab, cfg)
    assert l1 == l2
    assert all(p1[k].tobytes() == p2[k].tobytes() for k in p1)
    assert l1[-1] < l1[0]


def test_overfit_retrograde_pair(retro):
    vocab = Vocabulary.build([retro], "charmorph")
    tokens = encode_input(retro, "charmorph")

    def done(epoch, params, loss):
        return detokenize(m.predict(params, vocab, tokens)[0]) == "retrogradista"

    params, losses = m.train([retro], vocab, m.ModelConfig(epochs=300, seed=0), done)
    assert detokenize(m.predict(params, vocab, tokens)[0]) == "retrogradista"
    assert len(losses) < 300
