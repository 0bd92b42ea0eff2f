"""Mini-batch training with LR decay and early stopping.

Schedule: after each epoch the validation perplexity is compared against the
best seen so far. Five consecutive epochs without improvement (absolute
threshold 1e-4) halve the learning rate and reset the counter; the fifth
halving stops training. The first epoch only establishes the baseline (there
is nothing to improve on yet), so it counts toward the stall counter, which
makes a never-improving run decay at epochs 5, 10, 15, 20, 25 exactly.

Batches are re-formed every epoch: deterministic shuffle keyed on (seed,
epoch), then a stable sort by length so padding stays small, then the batch
order is shuffled again. PAD positions are masked out of the loss.
"""

from __future__ import annotations

import itertools
import json
import math
import time
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .checkpoint import Checkpoint
from .corpus import PAD_ID
from .models import (
    ARCHITECTURES,
    ModelDims,
    backward_sequence,
    clone_values,
    forward_sequence,
    init_params,
    load_values,
    zero_grads,
)
from .numerics import softmax_xent

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


class NonFiniteGradient(RuntimeError):
    pass


@dataclass
class TrainConfig:
    architecture: str = "lstm"
    embed_size: int = 1024
    hidden_size: int = 1024
    dropout: float = 0.0
    batch_size: int = 32
    initial_lr: float = 1e-3
    optimizer: str = "adam"
    patience_epochs: int = 5
    improvement_threshold: float = 1e-4
    decay_factor: float = 0.5
    max_decays: int = 5
    grad_clip_norm: float = 5.0
    max_epochs: int = 200
    seed: int = 0

    def __post_init__(self):
        if self.architecture not in ARCHITECTURES:
            raise ValueError(f"architecture must be one of {ARCHITECTURES}")
        if self.optimizer not in ("adam", "sgd"):
            raise ValueError("optimizer must be 'adam' or 'sgd'")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must lie in [0, 1)")
        for name in ("embed_size", "hidden_size", "batch_size",
                     "patience_epochs", "max_decays", "max_epochs"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.initial_lr < 0 or self.grad_clip_norm < 0:
            raise ValueError("initial_lr and grad_clip_norm must be >= 0")
        if not 0.0 < self.decay_factor < 1.0:
            raise ValueError("decay_factor must lie in (0, 1)")


@dataclass
class EpochRecord:
    epoch: int
    lr: float
    train_loss: float
    val_ppl: float
    decay_count: int

    def as_dict(self) -> dict:
        return asdict(self)


@dataclass
class TrainState:
    epoch: int = 0
    current_lr: float = 0.0
    best_val_perplexity: float = math.inf
    best_epoch: int = 0
    epochs_since_improvement: int = 0
    decay_count: int = 0
    history: list = field(default_factory=list)


class AdamState:
    """First/second moment buffers plus the shared step counter."""

    def __init__(self, params):
        self.t = 0
        self.m = {name: np.zeros_like(p.value) for name, p in params.items()}
        self.v = {name: np.zeros_like(p.value) for name, p in params.items()}


def make_batches(encoded, batch_size: int, seed: int, epoch: int):
    """Padded id batches with loss masks; every sentence appears once.

    Returns a list of (ids [B, L], targets [B, L-1], mask [B, L-1]) with
    rows padded to the longest sentence in their batch.
    """
    if not encoded:
        raise ValueError("cannot batch an empty split")
    if batch_size < 1:
        raise ValueError("batch_size must be >= 1")
    rng = np.random.default_rng([seed, epoch])
    order = rng.permutation(len(encoded))
    lengths = np.array([len(encoded[i]) for i in order])
    order = order[np.argsort(lengths, kind="stable")]
    chunks = [order[i:i + batch_size] for i in range(0, len(order), batch_size)]
    chunk_order = rng.permutation(len(chunks))

    batches = []
    for ci in chunk_order:
        rows = [encoded[i] for i in chunks[ci]]
        width = max(len(r) for r in rows)
        ids = np.full((len(rows), width), PAD_ID, dtype=np.int64)
        for j, row in enumerate(rows):
            ids[j, :len(row)] = row
        targets = ids[:, 1:]
        mask = targets != PAD_ID
        batches.append((ids, targets, mask))
    return batches


def global_grad_norm(params) -> float:
    total = 0.0
    for _, p in params.items():
        g = p.grad.astype(np.float64, copy=False)
        total += float(np.dot(g.ravel(), g.ravel()))
    return math.sqrt(total)


def optimizer_step(params, opt_state, lr: float, config: TrainConfig) -> float:
    """Clip by global norm, then apply one Adam or SGD update. Returns the
    pre-clip gradient norm."""
    for name, p in params.items():
        finite = np.isfinite(p.grad)
        if not finite.all():
            raise NonFiniteGradient(
                f"non-finite gradient in {name}: "
                f"{p.grad.size - int(finite.sum())} of {p.grad.size} entries")
    norm = global_grad_norm(params)
    scale = 1.0
    if config.grad_clip_norm > 0 and norm > config.grad_clip_norm:
        scale = config.grad_clip_norm / norm

    if config.optimizer == "sgd":
        for _, p in params.items():
            p.value -= lr * scale * p.grad
        return norm

    opt_state.t += 1
    bc1 = 1.0 - ADAM_BETA1 ** opt_state.t
    bc2 = 1.0 - ADAM_BETA2 ** opt_state.t
    for name, p in params.items():
        g = p.grad if scale == 1.0 else p.grad * scale
        m = opt_state.m[name]
        v = opt_state.v[name]
        m *= ADAM_BETA1
        m += (1.0 - ADAM_BETA1) * g
        v *= ADAM_BETA2
        v += (1.0 - ADAM_BETA2) * np.square(g)
        p.value -= (lr / bc1) * m / (np.sqrt(v / bc2) + ADAM_EPS)
    return norm


def perplexity_of(params, encoded, batch_size: int = 64) -> float:
    """exp(mean NLL) over all predicting positions, float64 accumulation.

    Deterministic and partition-independent: batches are length-sorted, and
    the per-position NLL sum does not depend on the grouping.
    """
    total_nll = 0.0
    total_cnt = 0
    for ids, targets, mask in make_batches(encoded, batch_size, seed=0, epoch=0):
        logits, _ = forward_sequence(params, ids)
        loss, _ = softmax_xent(logits, targets, mask)
        cnt = int(mask.sum())
        total_nll += loss * cnt
        total_cnt += cnt
    return math.exp(total_nll / total_cnt)


def train(config: TrainConfig, splits, vocab, *, metrics_stream=None,
          val_perplexity_fn=None, deadline=None):
    """Train one model; returns (best Checkpoint, TrainState).

    splits: DatasetSplit of encoded id sequences. val_perplexity_fn, when
    given, replaces the validation pass (used to exercise the schedule with
    a controlled metric). deadline: optional wall-clock budget in seconds.
    """
    dims = ModelDims(vocab.size, config.embed_size, config.hidden_size)
    params = init_params(config.architecture, dims, seed=config.seed)
    opt_state = AdamState(params) if config.optimizer == "adam" else None
    dropout_rng = np.random.default_rng([config.seed, 7])
    state = TrainState(current_lr=config.initial_lr)
    best_values = clone_values(params)
    started = time.monotonic()

    for epoch in range(1, config.max_epochs + 1):
        state.epoch = epoch
        total_nll = 0.0
        total_cnt = 0
        for ids, targets, mask in make_batches(
                splits.train, config.batch_size, config.seed, epoch):
            zero_grads(params)
            logits, cache = forward_sequence(
                params, ids, train=True, dropout=config.dropout, rng=dropout_rng)
            loss, dlogits = softmax_xent(logits, targets, mask)
            backward_sequence(params, cache, dlogits)
            optimizer_step(params, opt_state, state.current_lr, config)
            cnt = int(mask.sum())
            total_nll += loss * cnt
            total_cnt += cnt
        train_loss = total_nll / total_cnt

        if val_perplexity_fn is not None:
            val_ppl = float(val_perplexity_fn(params))
        else:
            val_ppl = perplexity_of(params, splits.validation, config.batch_size)

        prior_best = state.best_val_perplexity
        if val_ppl < prior_best:
            state.best_val_perplexity = val_ppl
            state.best_epoch = epoch
            best_values = clone_values(params)
        # Epoch 1 sets the baseline; only later epochs can count as
        # improvements for the stall counter.
        improved = (epoch > 1
                    and val_ppl < prior_best - config.improvement_threshold)
        state.epochs_since_improvement = (
            0 if improved else state.epochs_since_improvement + 1)

        stopping = False
        if state.epochs_since_improvement >= config.patience_epochs:
            state.decay_count += 1
            state.current_lr *= config.decay_factor
            state.epochs_since_improvement = 0
            if state.decay_count >= config.max_decays:
                stopping = True

        record = EpochRecord(epoch=epoch, lr=state.current_lr,
                             train_loss=train_loss, val_ppl=val_ppl,
                             decay_count=state.decay_count)
        state.history.append(record)
        if metrics_stream is not None:
            metrics_stream.write(json.dumps(record.as_dict()) + "\n")
            metrics_stream.flush()

        if stopping:
            break
        if deadline is not None and time.monotonic() - started > deadline:
            break

    load_values(params, best_values)
    ckpt = Checkpoint.from_params(params, vocab, asdict(config))
    return ckpt, state


SWEEP_AXES = ("embed_size", "hidden_size", "dropout")


def sweep(base: TrainConfig, grid: dict, splits, vocab, *, metrics_stream=None):
    """Train one model per grid point; returns rows sorted by test accuracy.

    grid maps a subset of {embed_size, hidden_size, dropout} to value lists.
    Each point derives its own seed from the base seed and its grid index so
    points stay independent and reproducible.
    """
    from .evaluation import evaluate  # local import: evaluation depends on models only

    unknown = set(grid) - set(SWEEP_AXES)
    if unknown:
        raise ValueError(f"unknown sweep axes {sorted(unknown)}; "
                         f"allowed: {SWEEP_AXES}")
    if not grid or any(len(v) == 0 for v in grid.values()):
        raise ValueError("sweep grid must be non-empty on every axis")

    axes = [name for name in SWEEP_AXES if name in grid]
    rows = []
    for idx, values in enumerate(itertools.product(*(grid[a] for a in axes))):
        point = dict(zip(axes, values))
        point_seed = int(np.random.SeedSequence([base.seed, idx]).generate_state(1)[0])
        config = replace(base, seed=point_seed, **point)
        ckpt, state = train(config, splits, vocab, metrics_stream=metrics_stream)
        report = evaluate(ckpt.to_params(), splits.test)
        rows.append({
            **{a: point[a] for a in axes},
            "seed": point_seed,
            "epochs": state.epoch,
            "test_accuracy": report.accuracy,
            "test_perplexity": report.perplexity,
        })
    rows.sort(key=lambda r: -r["test_accuracy"])
    return rows
