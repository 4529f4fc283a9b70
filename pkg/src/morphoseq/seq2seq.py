"""Single-layer GRU encoder-decoder with dot-product attention.

Row-vector convention throughout: a batch of inputs ``x`` with shape
``(B, D)`` is projected as ``x @ W`` with ``W`` of shape ``(D, H)``.

Parameters live in a plain ``dict`` of float64 arrays:

=================  ==============  ======================================
name               shape           role
=================  ==============  ======================================
embed              (V, D)          token embeddings (shared enc/dec)
enc.W_{z,r,h}      (D, H)          encoder input weights
enc.U_{z,r,h}      (H, H)          encoder recurrent weights
enc.b_{z,r,h}      (H,)            encoder biases
dec.*              as enc.*        decoder GRU
W_c                (2H, H)         projection of [context ; state]
W_o, b_o           (H, V), (V,)    output layer
=================  ==============  ======================================

The decoder starts from the final encoder state and reads ``<\\w>`` as its
first input. Attention output is not fed back into the recurrence.
"""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, replace
from typing import Callable, Dict, Optional, Sequence

import numpy as np

from .corpus import make_rng
from .numcore import DTYPE, AdadeltaState, NumericError, adadelta_step, log_softmax, softmax
from .tokenizer import EOW_ID, PAD, Token, Vocabulary, encode_input, encode_target

log = logging.getLogger(__name__)

Params = Dict[str, np.ndarray]
GATES = ("z", "r", "h")


@dataclass(frozen=True)
class ModelConfig:
    embed_dim: int = 300
    hidden_dim: int = 100
    batch_size: int = 20
    epochs: int = 20
    vocab_size: Optional[int] = None
    max_decode_len: Optional[int] = None
    seed: int = 0
    rho: float = 0.95
    eps: float = 1e-6

    def __post_init__(self):
        for name in ("embed_dim", "hidden_dim", "batch_size"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.epochs < 0:
            raise ValueError("epochs must be non-negative")
        if self.max_decode_len is not None and self.max_decode_len <= 0:
            raise ValueError("max_decode_len must be positive")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class AttentionTrace:
    weights: np.ndarray           # (output steps, input tokens)
    output_tokens: list
    input_tokens: list

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=DTYPE)
        assert self.weights.shape == (len(self.output_tokens), len(self.input_tokens))


def param_shapes(vocab_size: int, embed_dim: int, hidden_dim: int) -> dict[str, tuple]:
    V, D, H = vocab_size, embed_dim, hidden_dim
    shapes = {"embed": (V, D)}
    for side in ("enc", "dec"):
        for g in GATES:
            shapes[f"{side}.W_{g}"] = (D, H)
            shapes[f"{side}.U_{g}"] = (H, H)
            shapes[f"{side}.b_{g}"] = (H,)
    shapes["W_c"] = (2 * H, H)
    shapes["W_o"] = (H, V)
    shapes["b_o"] = (V,)
    return shapes


def init_scale(name: str, shape: tuple) -> float:
    """Half-width of the uniform init; 0 for biases.

    Embedding rows are looked up by a one-hot input, so their fan-in is 1.
    """
    if len(shape) == 1:
        return 0.0
    if name == "embed":
        return 1.0
    return 1.0 / np.sqrt(shape[0])


def init_params(config: ModelConfig, vocab) -> Params:
    V = vocab if isinstance(vocab, int) else len(vocab)
    if config.vocab_size is not None and config.vocab_size != V:
        raise ValueError(f"config expects vocab size {config.vocab_size}, vocabulary has {V}")
    rng = make_rng(np.random.SeedSequence([config.seed, 0]).generate_state(1)[0])
    params = {}
    for name, shape in param_shapes(V, config.embed_dim, config.hidden_dim).items():
        s = init_scale(name, shape)
        params[name] = np.zeros(shape, DTYPE) if s == 0.0 else rng.uniform(-s, s, size=shape)
    return params


def copy_params(params: Params) -> Params:
    return {k: v.copy() for k, v in params.items()}


def dims(params: Params) -> tuple[int, int, int]:
    V, D = params["embed"].shape
    return V, D, params["enc.U_z"].shape[0]


def sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


# -- single-sequence public ops --------------------------------------------

def gru_step(params: Params, side: str, x, h):
    p = params
    z = sigmoid(x @ p[f"{side}.W_z"] + h @ p[f"{side}.U_z"] + p[f"{side}.b_z"])
    r = sigmoid(x @ p[f"{side}.W_r"] + h @ p[f"{side}.U_r"] + p[f"{side}.b_r"])
    n = np.tanh(x @ p[f"{side}.W_h"] + (r * h) @ p[f"{side}.U_h"] + p[f"{side}.b_h"])
    return (1.0 - z) * h + z * n


def encode(params: Params, input_ids: Sequence[int]) -> np.ndarray:
    """Encoder states, one row per input token, starting from h_0 = 0."""
    V, _, H = dims(params)
    ids = np.asarray(input_ids, dtype=np.intp)
    if ids.size == 0:
        raise ValueError("cannot encode an empty sequence")
    if ids.min() < 0 or ids.max() >= V:
        raise IndexError(f"token index out of range for vocabulary of size {V}")
    h = np.zeros(H, DTYPE)
    states = np.empty((ids.size, H), DTYPE)
    for s, i in enumerate(ids):
        h = gru_step(params, "enc", params["embed"][i], h)
        states[s] = h
    return states


def attend(h_t, states):
    """Dot-product attention: returns ``(context, weights)``."""
    states = np.asarray(states, dtype=DTYPE)
    weights = softmax(states @ np.asarray(h_t, dtype=DTYPE))
    return weights @ states, weights


def decode_step(params: Params, prev_token: int, h_prev, states):
    """One decoder step: ``(distribution, h_new, attention weights)``."""
    h_new = gru_step(params, "dec", params["embed"][prev_token], h_prev)
    context, alpha = attend(h_new, states)
    a = np.tanh(np.concatenate([context, h_new]) @ params["W_c"])
    dist = softmax(a @ params["W_o"] + params["b_o"])
    return dist, h_new, alpha


def default_max_len(n_input: int) -> int:
    return 2 * n_input + 10


def greedy_decode(params: Params, input_ids: Sequence[int], max_len: Optional[int] = None):
    """Argmax decoding until ``<\\w>`` or ``max_len`` tokens.

    Returns ``(predicted ids, attention matrix)``; the emitted ``<\\w>`` (if
    reached) is included and owns the last attention row.
    """
    if max_len is None:
        max_len = default_max_len(len(input_ids))
    if max_len <= 0:
        raise ValueError("max_len must be positive")
    states = encode(params, input_ids)
    h = states[-1]
    prev = EOW_ID
    out, rows = [], []
    for _ in range(max_len):
        dist, h, alpha = decode_step(params, prev, h, states)
        prev = int(np.argmax(dist))
        out.append(prev)
        rows.append(alpha)
        if prev == EOW_ID:
            break
    return out, np.vstack(rows)


def predict(params: Params, vocab: Vocabulary, input_tokens: Sequence[Token],
            max_len: Optional[int] = None):
    """Decode token objects; returns ``(predicted tokens, AttentionTrace)``."""
    ids, weights = greedy_decode(params, vocab.encode(input_tokens), max_len)
    out = vocab.decode(ids)
    return out, AttentionTrace(weights, out, list(input_tokens))


# -- batched teacher-forced loss and its gradient ---------------------------

def pad_batch(seqs: Sequence[Sequence[int]]):
    T = max(len(s) for s in seqs)
    ids = np.full((len(seqs), T), PAD, dtype=np.intp)
    mask = np.zeros((len(seqs), T), DTYPE)
    for b, s in enumerate(seqs):
        ids[b, : len(s)] = s
        mask[b, : len(s)] = 1.0
    return ids, mask


def _gru_scan(params, side, xproj, h, mask=None):
    """Run a GRU over precomputed input projections.

    ``xproj`` maps gate -> (B, T, H) with bias already added. Where ``mask``
    is 0 the previous state is carried through unchanged.
    """
    U = {g: params[f"{side}.U_{g}"] for g in GATES}
    B, T, H = xproj["z"].shape
    hs = np.empty((B, T, H), DTYPE)
    steps = []
    for t in range(T):
        z = sigmoid(xproj["z"][:, t] + h @ U["z"])
        r = sigmoid(xproj["r"][:, t] + h @ U["r"])
        n = np.tanh(xproj["h"][:, t] + (r * h) @ U["h"])
        h_new = (1.0 - z) * h + z * n
        steps.append((h, z, r, n))
        if mask is not None:
            m = mask[:, t, None]
            h_new = m * h_new + (1.0 - m) * h
        hs[:, t] = h_new
        h = h_new
    return hs, steps


def _gru_scan_backward(params, side, steps, dhs, dh_last, mask=None):
    """Backprop through ``_gru_scan``.

    ``dhs`` is the loss gradient w.r.t. each emitted state, ``dh_last`` the
    extra gradient arriving at the final state. Returns the gradients w.r.t.
    the gate pre-activations (gate -> (B, T, H)), the recurrent-weight
    gradients and the gradient w.r.t. the initial state.
    """
    U = {g: params[f"{side}.U_{g}"] for g in GATES}
    B, T, H = dhs.shape
    dpre = {g: np.zeros((B, T, H), DTYPE) for g in GATES}
    dU = {g: np.zeros((H, H), DTYPE) for g in GATES}
    dh = dh_last.copy()
    for t in range(T - 1, -1, -1):
        h, z, r, n = steps[t]
        dh = dh + dhs[:, t]
        if mask is not None:
            m = mask[:, t, None]
            dh_new, carry = m * dh, (1.0 - m) * dh
        else:
            dh_new, carry = dh, 0.0
        dz = dh_new * (n - h)
        dn = dh_new * z
        dh_prev = dh_new * (1.0 - z)
        dn_pre = dn * (1.0 - n * n)
        rh = r * h
        dU["h"] += rh.T @ dn_pre
        drh = dn_pre @ U["h"].T
        dh_prev += drh * r
        dr_pre = drh * h * r * (1.0 - r)
        dz_pre = dz * z * (1.0 - z)
        dU["z"] += h.T @ dz_pre
        dU["r"] += h.T @ dr_pre
        dh_prev += dz_pre @ U["z"].T + dr_pre @ U["r"].T
        dpre["z"][:, t] = dz_pre
        dpre["r"][:, t] = dr_pre
        dpre["h"][:, t] = dn_pre
        dh = dh_prev + carry
    return dpre, dU, dh


def _project(params, side, x):
    return {g: x @ params[f"{side}.W_{g}"] + params[f"{side}.b_{g}"] for g in GATES}


def forward_loss(params: Params, pairs: Sequence[tuple]):
    """Teacher-forced loss for a batch of ``(input_ids, target_ids)`` pairs.

    The loss is the mean over examples of each example's mean per-token
    negative log-likelihood, so padding never changes its value.
    """
    if not pairs:
        raise ValueError("empty batch")
    srcs = [list(p[0]) for p in pairs]
    tgts = [list(p[1]) for p in pairs]
    if any(not t for t in tgts):
        raise ValueError("target sequences must be non-empty")
    src, src_mask = pad_batch(srcs)
    tgt, tgt_mask = pad_batch(tgts)
    B = len(pairs)
    dec_in = np.concatenate([np.full((B, 1), EOW_ID, np.intp), tgt[:, :-1]], axis=1)
    dec_in[tgt_mask == 0] = PAD

    E = params["embed"]
    H = params["enc.U_z"].shape[0]
    xe = E[src]
    enc_hs, enc_steps = _gru_scan(params, "enc", _project(params, "enc", xe),
                                  np.zeros((B, H), DTYPE), src_mask)
    h0 = enc_hs[:, -1]
    xd = E[dec_in]
    dec_hs, dec_steps = _gru_scan(params, "dec", _project(params, "dec", xd), h0)

    scores = dec_hs @ enc_hs.transpose(0, 2, 1)                  # (B, T, S)
    scores = np.where(src_mask[:, None, :] > 0, scores, -np.inf)
    alpha = softmax(scores)
    ctx = alpha @ enc_hs                                          # (B, T, H)
    cat = np.concatenate([ctx, dec_hs], axis=-1)
    a = np.tanh(cat @ params["W_c"])
    logits = a @ params["W_o"] + params["b_o"]
    logp = log_softmax(logits)

    lengths = tgt_mask.sum(axis=1)
    weight = tgt_mask / (lengths[:, None] * B)
    nll = -np.take_along_axis(logp, tgt[..., None], axis=-1)[..., 0]
    step_loss = nll * weight
    if not np.isfinite(step_loss).all():
        bad = np.argwhere(~np.isfinite(step_loss))[0]
        raise NumericError(f"non-finite loss at example {bad[0]}, step {bad[1]}")
    loss = float(step_loss.sum())
    cache = dict(src=src, src_mask=src_mask, tgt=tgt, weight=weight, dec_in=dec_in,
                 xe=xe, xd=xd, enc_hs=enc_hs, enc_steps=enc_steps, dec_hs=dec_hs,
                 dec_steps=dec_steps, alpha=alpha, ctx=ctx, cat=cat, a=a, logp=logp)
    return loss, cache


def backward(params: Params, cache) -> Params:
    """Exact gradients of ``forward_loss`` w.r.t. every parameter."""
    grads = {k: np.zeros_like(v) for k, v in params.items()}
    V, D, H = dims(params)
    a, cat, alpha = cache["a"], cache["cat"], cache["alpha"]
    enc_hs, dec_hs = cache["enc_hs"], cache["dec_hs"]

    dlogits = np.exp(cache["logp"])
    np.put_along_axis(dlogits, cache["tgt"][..., None],
                      np.take_along_axis(dlogits, cache["tgt"][..., None], -1) - 1.0, -1)
    dlogits *= cache["weight"][..., None]

    grads["W_o"] = a.reshape(-1, H).T @ dlogits.reshape(-1, V)
    grads["b_o"] = dlogits.sum(axis=(0, 1))
    da_pre = (dlogits @ params["W_o"].T) * (1.0 - a * a)
    grads["W_c"] = cat.reshape(-1, 2 * H).T @ da_pre.reshape(-1, H)
    dcat = da_pre @ params["W_c"].T
    dctx, ddec = dcat[..., :H], dcat[..., H:].copy()

    dalpha = dctx @ enc_hs.transpose(0, 2, 1)                     # (B, T, S)
    denc = alpha.transpose(0, 2, 1) @ dctx                        # (B, S, H)
    dscores = alpha * (dalpha - (alpha * dalpha).sum(axis=-1, keepdims=True))
    ddec += dscores @ enc_hs
    denc += dscores.transpose(0, 2, 1) @ dec_hs

    B = dec_hs.shape[0]
    dh0 = _side_backward(params, grads, "dec", cache["dec_steps"], ddec,
                         np.zeros((B, H), DTYPE), cache["xd"], cache["dec_in"], None)
    _side_backward(params, grads, "enc", cache["enc_steps"], denc, dh0,
                   cache["xe"], cache["src"], cache["src_mask"])
    return grads


def _side_backward(params, grads, side, steps, dhs, dh_last, xin, ids, mask):
    D = xin.shape[-1]
    H = dhs.shape[-1]
    dpre, dU, dh0 = _gru_scan_backward(params, side, steps, dhs, dh_last, mask)
    dx = np.zeros_like(xin)
    for g in GATES:
        grads[f"{side}.U_{g}"] = dU[g]
        grads[f"{side}.W_{g}"] = xin.reshape(-1, D).T @ dpre[g].reshape(-1, H)
        grads[f"{side}.b_{g}"] = dpre[g].sum(axis=(0, 1))
        dx += dpre[g] @ params[f"{side}.W_{g}"].T
    np.add.at(grads["embed"], ids.reshape(-1), dx.reshape(-1, D))
    return dh0


def loss_and_grads(params: Params, pairs):
    loss, cache = forward_loss(params, pairs)
    return loss, backward(params, cache)


# -- training ---------------------------------------------------------------

def encode_pairs(entries, vocab: Vocabulary):
    return [(vocab.encode(encode_input(e, vocab.mode)), vocab.encode(encode_target(e, vocab.mode)))
            for e in entries]


EpochCallback = Callable[[int, Params, float], Optional[bool]]


def train(entries, vocab: Vocabulary, config: ModelConfig,
          callback: Optional[EpochCallback] = None):
    """Mini-batch Adadelta training with per-epoch seeded shuffling.

    Returns ``(params, per-epoch mean loss list)``. ``callback(epoch, params,
    loss)`` runs after each epoch; returning True stops training early.
    """
    entries = list(getattr(entries, "train", entries))
    if not entries:
        raise ValueError("training set is empty")
    pairs = encode_pairs(entries, vocab)
    if config.max_decode_len is not None:
        longest = max(len(t) for _, t in pairs)
        if config.max_decode_len < longest:
            raise ValueError(f"max_decode_len {config.max_decode_len} < longest target {longest}")
    params = init_params(config, vocab)
    opt = {k: AdadeltaState.zeros_like(v, config.rho, config.eps) for k, v in params.items()}
    shuffle_rng = make_rng(np.random.SeedSequence([config.seed, 1]).generate_state(1)[0])
    losses = []
    n = len(pairs)
    for epoch in range(config.epochs):
        order = shuffle_rng.permutation(n)
        total = 0.0
        for start in range(0, n, config.batch_size):
            batch = [pairs[i] for i in order[start:start + config.batch_size]]
            loss, grads = loss_and_grads(params, batch)
            total += loss * len(batch)
            for k in params:
                params[k], opt[k] = adadelta_step(params[k], grads[k], opt[k])
        losses.append(total / n)
        log.debug("epoch %d loss %.6f", epoch + 1, losses[-1])
        if callback is not None and callback(epoch + 1, params, losses[-1]):
            break
    return params, losses


def with_vocab_size(config: ModelConfig, vocab: Vocabulary) -> ModelConfig:
    return replace(config, vocab_size=len(vocab))
