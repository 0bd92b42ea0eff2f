"""Dense-array primitives with hand-written backward passes.

Arrays are plain row-major numpy (float32 for training and inference,
float64 when checking gradients; every op inherits the dtype of its inputs).
No function mutates its arguments; gradient accumulation happens only through
``Parameter.grad``, which the training loop zeroes before each step.
"""

from __future__ import annotations

import numpy as np


class ShapeMismatch(ValueError):
    pass


class AllMasked(ValueError):
    pass


class Parameter:
    """A trainable array paired with its gradient accumulator."""

    __slots__ = ("value", "grad")

    def __init__(self, value: np.ndarray):
        self.value = np.asarray(value)
        self.grad = np.zeros_like(self.value)

    @property
    def shape(self):
        return self.value.shape

    def zero_grad(self) -> None:
        self.grad.fill(0.0)

    def __repr__(self):
        return f"Parameter(shape={self.value.shape}, dtype={self.value.dtype})"


def affine_forward(x: np.ndarray, w: np.ndarray, b: np.ndarray) -> np.ndarray:
    """out = x @ w + b, with b broadcast over rows."""
    if x.shape[-1] != w.shape[0] or w.shape[1] != b.shape[-1]:
        raise ShapeMismatch(f"affine: x{x.shape} w{w.shape} b{b.shape}")
    return x @ w + b


def affine_backward(dout: np.ndarray, x: np.ndarray, w: np.ndarray):
    """Gradients (dx, dw, db) of an affine forward."""
    if dout.shape != (x.shape[0], w.shape[1]):
        raise ShapeMismatch(f"affine backward: dout{dout.shape} x{x.shape} w{w.shape}")
    return dout @ w.T, x.T @ dout, dout.sum(axis=0)


def sigmoid(x: np.ndarray) -> np.ndarray:
    # Evaluate on the negative half-line only, so exp never overflows.
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def sigmoid_grad(y: np.ndarray) -> np.ndarray:
    """d sigmoid / dx expressed through the forward output y."""
    return y * (1.0 - y)


def tanh(x: np.ndarray) -> np.ndarray:
    return np.tanh(x)


def tanh_grad(y: np.ndarray) -> np.ndarray:
    """d tanh / dx expressed through the forward output y."""
    return 1.0 - y * y


def softmax(logits: np.ndarray) -> np.ndarray:
    """Row-wise stable softmax."""
    shifted = logits - logits.max(axis=-1, keepdims=True)
    ex = np.exp(shifted)
    return ex / ex.sum(axis=-1, keepdims=True)


def log_softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=-1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


def softmax_xent(logits: np.ndarray, targets: np.ndarray, mask=None):
    """Mean cross-entropy (nats) over unmasked rows, and dlogits.

    logits may have any leading shape [..., V]; targets and mask match the
    leading shape. dlogits is (softmax - onehot) / n_unmasked on unmasked
    rows and zero on masked rows, so it backpropagates the mean loss
    directly. The loss itself is accumulated in float64 regardless of the
    logits dtype.
    """
    lead = logits.shape[:-1]
    v = logits.shape[-1]
    flat = logits.reshape(-1, v)
    n = flat.shape[0]
    targets = np.asarray(targets)
    if targets.shape != lead:
        raise ShapeMismatch(f"targets {targets.shape} for logits {logits.shape}")
    tflat = targets.reshape(-1)
    if np.any(tflat < 0) or np.any(tflat >= v):
        raise ValueError("targets out of range")
    if mask is None:
        mflat = np.ones(n, dtype=bool)
    else:
        mask = np.asarray(mask, dtype=bool)
        if mask.shape != lead:
            raise ShapeMismatch(f"mask {mask.shape} for logits {logits.shape}")
        mflat = mask.reshape(-1)
    count = int(mflat.sum())
    if count == 0:
        raise AllMasked("softmax_xent: every row is masked")

    logp = log_softmax(flat.astype(np.float64, copy=False))
    rows = np.arange(n)
    loss = float(-logp[rows, tflat][mflat].mean())

    dlogits = np.exp(logp)
    dlogits[rows, tflat] -= 1.0
    dlogits[~mflat] = 0.0
    dlogits /= count
    return loss, dlogits.astype(logits.dtype, copy=False).reshape(logits.shape)


def dropout_mask(rng: np.random.Generator, shape, rate: float, dtype) -> np.ndarray:
    """Inverted-dropout mask: zeros with probability rate, 1/(1-rate) elsewhere."""
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout rate {rate} outside [0, 1)")
    keep = rng.random(shape) >= rate
    return (keep / (1.0 - rate)).astype(dtype, copy=False)


def grad_check(loss_fn, params, eps: float = 1e-5) -> float:
    """Max relative error between analytic and central-difference gradients.

    ``loss_fn()`` must deterministically recompute the scalar loss and leave
    the analytic gradients in each parameter's ``grad``. Run in float64.

    Relative error per component: |a - n| / max(1e-8, |a| + |n|).
    """
    if isinstance(params, dict):
        params = list(params.values())
    loss_fn()
    analytic = [p.grad.copy() for p in params]
    worst = 0.0
    for p, g in zip(params, analytic):
        flat_v = p.value.reshape(-1)
        flat_g = g.reshape(-1)
        for i in range(flat_v.size):
            orig = flat_v[i]
            flat_v[i] = orig + eps
            lp = loss_fn()
            flat_v[i] = orig - eps
            lm = loss_fn()
            flat_v[i] = orig
            numeric = (lp - lm) / (2.0 * eps)
            err = abs(flat_g[i] - numeric) / max(1e-8, abs(flat_g[i]) + abs(numeric))
            worst = max(worst, err)
    loss_fn()  # restore grads for the unperturbed point
    return worst
