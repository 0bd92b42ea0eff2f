"""The three word-level architectures: gated-memory (LSTM), plain recurrent
(RNN), and trigram feed-forward (NPLM).

Per time step t, the gated model computes, with z = [e_t ; h_{t-1}]:

    f = sigmoid(z W_f + b_f)        i = sigmoid(z W_i + b_i)
    g = tanh(z W_g + b_g)           o = sigmoid(z W_o + b_o)
    c_t = f * c_{t-1} + i * g       h_t = o * tanh(c_t)

and logits_t = h_t W_y + b_y predict the token at position t+1. Initial h and
c are zero. The plain RNN replaces the cell with h_t = tanh(e W_xh +
h_{t-1} W_hh + b_h); the trigram model predicts from the concatenated
embeddings of the two preceding tokens through one tanh layer.

Backward passes are hand-written and accumulate into ``Parameter.grad``
without truncation through time. Inference helpers (``predict_topk``,
``greedy_complete``) run a stateful single-row stepper so repeated extension
of a context costs one cell step per token.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .corpus import BOS_ID, EOS_ID
from .numerics import (
    Parameter,
    ShapeMismatch,
    dropout_mask,
    sigmoid,
    sigmoid_grad,
    softmax,
    tanh_grad,
)

ARCHITECTURES = ("lstm", "rnn", "nplm")


class SequenceTooShort(ValueError):
    pass


class CacheMismatch(ValueError):
    pass


class KOutOfRange(ValueError):
    pass


@dataclass
class ModelDims:
    vocab_size: int
    embed_size: int
    hidden_size: int
    context_order: int = 2  # trigram model only

    def __post_init__(self):
        for name in ("vocab_size", "embed_size", "hidden_size", "context_order"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")


class LstmState(NamedTuple):
    h: np.ndarray
    c: np.ndarray


def _xavier(rng, fan_in, fan_out, dtype):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out)).astype(dtype)


@dataclass
class LstmParams:
    arch = "lstm"
    dims: ModelDims
    E: Parameter
    W_f: Parameter
    b_f: Parameter
    W_i: Parameter
    b_i: Parameter
    W_g: Parameter
    b_g: Parameter
    W_o: Parameter
    b_o: Parameter
    W_y: Parameter
    b_y: Parameter

    def items(self):
        return [(name, getattr(self, name)) for name in
                ("E", "W_f", "b_f", "W_i", "b_i", "W_g", "b_g",
                 "W_o", "b_o", "W_y", "b_y")]


@dataclass
class RnnParams:
    arch = "rnn"
    dims: ModelDims
    E: Parameter
    W_xh: Parameter
    W_hh: Parameter
    b_h: Parameter
    W_y: Parameter
    b_y: Parameter

    def items(self):
        return [(name, getattr(self, name)) for name in
                ("E", "W_xh", "W_hh", "b_h", "W_y", "b_y")]


@dataclass
class NplmParams:
    arch = "nplm"
    dims: ModelDims
    E: Parameter
    W_1: Parameter
    b_1: Parameter
    W_y: Parameter
    b_y: Parameter

    def items(self):
        return [(name, getattr(self, name)) for name in
                ("E", "W_1", "b_1", "W_y", "b_y")]


def init_params(arch: str, dims: ModelDims, seed: int = 0, dtype=np.float32):
    """Xavier-uniform weights, zero biases, forget-gate bias 1.0.

    Deterministic under seed: matrices are drawn in field order.
    """
    rng = np.random.default_rng(seed)
    v, s, d = dims.vocab_size, dims.embed_size, dims.hidden_size
    zeros = lambda n: np.zeros(n, dtype=dtype)
    if arch == "lstm":
        return LstmParams(
            dims=dims,
            E=Parameter(_xavier(rng, v, s, dtype)),
            W_f=Parameter(_xavier(rng, s + d, d, dtype)),
            b_f=Parameter(np.ones(d, dtype=dtype)),
            W_i=Parameter(_xavier(rng, s + d, d, dtype)),
            b_i=Parameter(zeros(d)),
            W_g=Parameter(_xavier(rng, s + d, d, dtype)),
            b_g=Parameter(zeros(d)),
            W_o=Parameter(_xavier(rng, s + d, d, dtype)),
            b_o=Parameter(zeros(d)),
            W_y=Parameter(_xavier(rng, d, v, dtype)),
            b_y=Parameter(zeros(v)),
        )
    if arch == "rnn":
        return RnnParams(
            dims=dims,
            E=Parameter(_xavier(rng, v, s, dtype)),
            W_xh=Parameter(_xavier(rng, s, d, dtype)),
            W_hh=Parameter(_xavier(rng, d, d, dtype)),
            b_h=Parameter(zeros(d)),
            W_y=Parameter(_xavier(rng, d, v, dtype)),
            b_y=Parameter(zeros(v)),
        )
    if arch == "nplm":
        return NplmParams(
            dims=dims,
            E=Parameter(_xavier(rng, v, s, dtype)),
            W_1=Parameter(_xavier(rng, dims.context_order * s, d, dtype)),
            b_1=Parameter(zeros(d)),
            W_y=Parameter(_xavier(rng, d, v, dtype)),
            b_y=Parameter(zeros(v)),
        )
    raise ValueError(f"unknown architecture {arch!r}; expected one of {ARCHITECTURES}")


def zero_grads(params) -> None:
    for _, p in params.items():
        p.zero_grad()


def clone_values(params) -> dict:
    return {name: p.value.copy() for name, p in params.items()}


def load_values(params, values: dict) -> None:
    for name, p in params.items():
        p.value[...] = values[name]


# -- gated cell -------------------------------------------------------------

def _fused_gates(p: LstmParams):
    # Column order (f, i, o | g): sigmoid applies to one contiguous block.
    w = np.concatenate(
        [p.W_f.value, p.W_i.value, p.W_o.value, p.W_g.value], axis=1)
    b = np.concatenate(
        [p.b_f.value, p.b_i.value, p.b_o.value, p.b_g.value])
    return w, b


def _lstm_step(e, h_prev, c_prev, w_all, b_all, d):
    z = np.concatenate([e, h_prev], axis=1)
    a = z @ w_all + b_all
    sig = sigmoid(a[:, :3 * d])
    f, i, o = sig[:, :d], sig[:, d:2 * d], sig[:, 2 * d:]
    g = np.tanh(a[:, 3 * d:])
    c = f * c_prev + i * g
    tc = np.tanh(c)
    h = o * tc
    return h, c, (z, f, i, o, g, c_prev, tc)


def lstm_cell(e: np.ndarray, state: LstmState, params: LstmParams):
    """One cell step on row vectors (or [B, d] batches)."""
    e = np.atleast_2d(e)
    d = params.dims.hidden_size
    if e.shape[1] != params.dims.embed_size or state.h.shape[-1] != d:
        raise ShapeMismatch(f"lstm_cell: e{e.shape} h{state.h.shape}")
    w_all, b_all = _fused_gates(params)
    h, c, cache = _lstm_step(e, np.atleast_2d(state.h), np.atleast_2d(state.c),
                             w_all, b_all, d)
    return LstmState(h, c), cache


# -- sequence forward/backward ----------------------------------------------

def _as_batch(ids):
    arr = np.asarray(ids, dtype=np.int64)
    if arr.ndim == 1:
        return arr[None, :], True
    if arr.ndim == 2:
        return arr, False
    raise ShapeMismatch(f"ids must be 1-D or 2-D, got shape {arr.shape}")


def _embed(params, ids_col, train, dropout, rng, dtype):
    e = params.E.value[ids_col]
    if train and dropout > 0.0:
        mask = dropout_mask(rng, e.shape, dropout, dtype)
        return e * mask, mask
    return e, None


def forward_sequence(params, ids, *, train=False, dropout=0.0, rng=None):
    """Logits for every predicting position of BOS-prefixed sequences.

    ids: [L] or [B, L] int array (BOS first; padded rows allowed). Returns
    (logits, cache) with logits [B, L-1, V] ([L-1, V] for 1-D input);
    row t predicts ids[:, t+1]. Dropout is active only when train=True.
    """
    batch, squeeze = _as_batch(ids)
    n_batch, length = batch.shape
    if length < 2:
        raise SequenceTooShort(f"need at least 2 positions, got {length}")
    if train and dropout > 0.0 and rng is None:
        raise ValueError("dropout requires an rng in training mode")
    dtype = params.E.value.dtype
    dims = params.dims
    steps = length - 1

    if params.arch == "nplm":
        return _nplm_forward(params, batch, squeeze, train, dropout, rng, dtype)

    hs = []
    h_masks = []
    step_caches = []
    h = np.zeros((n_batch, dims.hidden_size), dtype=dtype)
    if params.arch == "lstm":
        w_all, b_all = _fused_gates(params)
        c = np.zeros_like(h)
        for t in range(steps):
            e, e_mask = _embed(params, batch[:, t], train, dropout, rng, dtype)
            h, c, cache = _lstm_step(e, h, c, w_all, b_all, dims.hidden_size)
            step_caches.append(cache + (e_mask,))
            hs.append(h)
    else:
        for t in range(steps):
            e, e_mask = _embed(params, batch[:, t], train, dropout, rng, dtype)
            h = np.tanh(e @ params.W_xh.value + h @ params.W_hh.value
                        + params.b_h.value)
            step_caches.append((e, e_mask, h))
            hs.append(h)

    h_stack = np.stack(hs)  # [steps, B, d]
    if train and dropout > 0.0:
        for t in range(steps):
            h_masks.append(dropout_mask(rng, hs[t].shape, dropout, dtype))
        h_out = h_stack * np.stack(h_masks)
    else:
        h_out = h_stack
    flat = h_out.reshape(steps * n_batch, dims.hidden_size)
    logits = (flat @ params.W_y.value + params.b_y.value).reshape(
        steps, n_batch, dims.vocab_size)
    cache = {
        "arch": params.arch,
        "ids": batch,
        "squeeze": squeeze,
        "steps": step_caches,
        "h_out_flat": flat,
        "h_masks": h_masks,
    }
    if params.arch == "lstm":
        cache["w_all"] = w_all
    out = np.ascontiguousarray(logits.transpose(1, 0, 2))
    return (out[0] if squeeze else out), cache


def _nplm_forward(params, batch, squeeze, train, dropout, rng, dtype):
    n_batch, length = batch.shape
    steps = length - 1
    s = params.dims.embed_size
    # Context for position t+1 is (ids[t-1], ids[t]), BOS-padded on the left.
    prev1 = batch[:, :-1]
    prev2 = np.concatenate(
        [np.full((n_batch, 1), BOS_ID, dtype=batch.dtype), batch[:, :-2]], axis=1)
    ctx = np.stack([prev2, prev1], axis=2).reshape(-1)          # [B*steps*2]
    x = params.E.value[ctx].reshape(n_batch * steps, 2 * s)
    x_mask = None
    if train and dropout > 0.0:
        x_mask = dropout_mask(rng, x.shape, dropout, dtype)
        x = x * x_mask
    a = x @ params.W_1.value + params.b_1.value
    h = np.tanh(a)
    h_mask = None
    h_out = h
    if train and dropout > 0.0:
        h_mask = dropout_mask(rng, h.shape, dropout, dtype)
        h_out = h * h_mask
    logits = (h_out @ params.W_y.value + params.b_y.value).reshape(
        n_batch, steps, params.dims.vocab_size)
    cache = {
        "arch": "nplm",
        "ids": batch,
        "squeeze": squeeze,
        "ctx": ctx,
        "x": x,
        "x_mask": x_mask,
        "h": h,
        "h_out": h_out,
        "h_mask": h_mask,
    }
    return (logits[0] if squeeze else logits), cache


def backward_sequence(params, cache, dlogits) -> None:
    """Accumulate full-BPTT gradients of the sequence loss into params.

    dlogits must match the logits returned by the paired forward call.
    """
    if cache["arch"] != params.arch:
        raise CacheMismatch(f"cache is for {cache['arch']!r}, params are {params.arch!r}")
    batch = cache["ids"]
    n_batch, length = batch.shape
    steps = length - 1
    dims = params.dims
    dlogits = np.asarray(dlogits)
    if cache["squeeze"]:
        dlogits = dlogits[None, ...]
    if dlogits.shape != (n_batch, steps, dims.vocab_size):
        raise CacheMismatch(
            f"dlogits {dlogits.shape} does not match forward shape "
            f"{(n_batch, steps, dims.vocab_size)}")

    if params.arch == "nplm":
        _nplm_backward(params, cache, dlogits)
        return

    dl = np.ascontiguousarray(dlogits.transpose(1, 0, 2))  # [steps, B, V]
    dl_flat = dl.reshape(steps * n_batch, dims.vocab_size)
    params.W_y.grad += cache["h_out_flat"].T @ dl_flat
    params.b_y.grad += dl_flat.sum(axis=0)
    dh_out = (dl_flat @ params.W_y.value.T).reshape(steps, n_batch, dims.hidden_size)
    if cache["h_masks"]:
        dh_out = dh_out * np.stack(cache["h_masks"])

    dE = np.zeros_like(params.E.grad)
    s, d = dims.embed_size, dims.hidden_size
    if params.arch == "lstm":
        w_all = cache["w_all"]
        dw_all = np.zeros_like(w_all)
        db_all = np.zeros(4 * d, dtype=w_all.dtype)
        dh_next = np.zeros((n_batch, d), dtype=w_all.dtype)
        dc_next = np.zeros_like(dh_next)
        for t in reversed(range(steps)):
            z, f, i, o, g, c_prev, tc = cache["steps"][t][:7]
            e_mask = cache["steps"][t][7]
            dh = dh_out[t] + dh_next
            do = dh * tc
            dc = dh * o * tanh_grad(tc) + dc_next
            df = dc * c_prev
            di = dc * g
            dg = dc * i
            dc_next = dc * f
            da = np.concatenate(
                [df * sigmoid_grad(f), di * sigmoid_grad(i),
                 do * sigmoid_grad(o), dg * tanh_grad(g)], axis=1)
            dw_all += z.T @ da
            db_all += da.sum(axis=0)
            dz = da @ w_all.T
            de = dz[:, :s]
            if e_mask is not None:
                de = de * e_mask
            np.add.at(dE, batch[:, t], de)
            dh_next = dz[:, s:]
        params.W_f.grad += dw_all[:, :d]
        params.W_i.grad += dw_all[:, d:2 * d]
        params.W_o.grad += dw_all[:, 2 * d:3 * d]
        params.W_g.grad += dw_all[:, 3 * d:]
        params.b_f.grad += db_all[:d]
        params.b_i.grad += db_all[d:2 * d]
        params.b_o.grad += db_all[2 * d:3 * d]
        params.b_g.grad += db_all[3 * d:]
    else:
        dh_next = np.zeros((n_batch, d), dtype=params.E.value.dtype)
        for t in reversed(range(steps)):
            e, e_mask, h = cache["steps"][t]
            da = (dh_out[t] + dh_next) * tanh_grad(h)
            params.W_xh.grad += e.T @ da
            params.b_h.grad += da.sum(axis=0)
            h_prev = cache["steps"][t - 1][2] if t > 0 else np.zeros_like(h)
            params.W_hh.grad += h_prev.T @ da
            de = da @ params.W_xh.value.T
            if e_mask is not None:
                de = de * e_mask
            np.add.at(dE, batch[:, t], de)
            dh_next = da @ params.W_hh.value.T
    params.E.grad += dE


def _nplm_backward(params, cache, dlogits):
    dims = params.dims
    dl_flat = dlogits.reshape(-1, dims.vocab_size)
    params.W_y.grad += cache["h_out"].T @ dl_flat
    params.b_y.grad += dl_flat.sum(axis=0)
    dh = dl_flat @ params.W_y.value.T
    if cache["h_mask"] is not None:
        dh = dh * cache["h_mask"]
    da = dh * tanh_grad(cache["h"])
    params.W_1.grad += cache["x"].T @ da
    params.b_1.grad += da.sum(axis=0)
    dx = da @ params.W_1.value.T
    if cache["x_mask"] is not None:
        dx = dx * cache["x_mask"]
    s = dims.embed_size
    dpair = dx.reshape(-1, 2, s).reshape(-1, s)
    np.add.at(params.E.grad, cache["ctx"], dpair)


# -- incremental inference ---------------------------------------------------

def initial_state(params):
    dtype = params.E.value.dtype
    d = params.dims.hidden_size
    if params.arch == "lstm":
        return LstmState(np.zeros((1, d), dtype=dtype), np.zeros((1, d), dtype=dtype))
    if params.arch == "rnn":
        return np.zeros((1, d), dtype=dtype)
    return (BOS_ID, BOS_ID)


def step_state(params, state, token_id: int):
    """Consume one token; return (new state, logits over the next token)."""
    if params.arch == "nplm":
        new_state = (state[1], token_id)
        x = np.concatenate([params.E.value[new_state[0]], params.E.value[new_state[1]]])
        h = np.tanh(x @ params.W_1.value + params.b_1.value)
        return new_state, h @ params.W_y.value + params.b_y.value
    e = params.E.value[token_id][None, :]
    if params.arch == "lstm":
        w_all, b_all = _fused_gates(params)
        h, c, _ = _lstm_step(e, state.h, state.c, w_all, b_all, params.dims.hidden_size)
        state = LstmState(h, c)
        out = h
    else:
        out = np.tanh(e @ params.W_xh.value + state @ params.W_hh.value
                      + params.b_h.value)
        state = out
    return state, (out @ params.W_y.value + params.b_y.value)[0]


def run_context(params, context_ids):
    """Feed a BOS-prefixed context; return (state, logits for the next token)."""
    if len(context_ids) < 1:
        raise SequenceTooShort("context must contain at least BOS")
    state = initial_state(params)
    logits = None
    for tok in context_ids:
        state, logits = step_state(params, state, int(tok))
    return state, logits


def predict_topk(params, context_ids, k: int):
    """Top-k next tokens with probabilities, ties broken toward smaller ids."""
    v = params.dims.vocab_size
    if not 1 <= k <= v:
        raise KOutOfRange(f"k={k} outside [1, {v}]")
    _, logits = run_context(params, context_ids)
    probs = softmax(logits.astype(np.float64))
    order = np.lexsort((np.arange(v), -probs))[:k]
    return [(int(i), float(probs[i])) for i in order]


def greedy_complete(params, context_ids, steps: int):
    """Append argmax tokens until EOS or the step budget; returns the ids
    generated (EOS included when it terminates)."""
    if steps < 1:
        raise ValueError("steps must be >= 1")
    state, logits = run_context(params, context_ids)
    out = []
    for _ in range(steps):
        nxt = int(np.argmax(logits))  # first maximum = smallest id on ties
        out.append(nxt)
        if nxt == EOS_ID:
            break
        state, logits = step_state(params, state, nxt)
    return out
