"""Metrics over a trained model: teacher-forced perplexity/accuracy/macro-F1,
autoregressive multi-shot accuracy, context-length buckets, and a 2-D PCA
projection of the embedding table.

Conventions: every predicting position counts, including the EOS position
and UNK targets; PAD never counts. EOS inclusion is configurable because the
choice moves accuracy on short-sentence corpora. Macro-F1 averages only over
classes that actually occur as gold targets in the split.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np

from .corpus import EOS_ID, PAD_ID
from .models import forward_sequence, initial_state, run_context, step_state
from .numerics import log_softmax, softmax_xent

LENGTH_BUCKETS = ((1, 5), (6, 10), (11, 15), (16, 20), (21, None))


class EmptySplit(ValueError):
    pass


class DegenerateRank(ValueError):
    pass


@dataclass
class EvalReport:
    perplexity: float
    cross_entropy: float  # nats per predicting position
    accuracy: float
    macro_f1: float
    token_count: int
    class_count: int

    def as_dict(self) -> dict:
        return {
            "perplexity": self.perplexity,
            "cross_entropy": self.cross_entropy,
            "accuracy": self.accuracy,
            "macro_f1": self.macro_f1,
            "token_count": self.token_count,
            "class_count": self.class_count,
        }


@dataclass
class MultiShotReport:
    k_max: int
    anchor_count: int
    per_shot: list  # a_k for k = 1..K, fraction of anchors
    joint: list     # fraction of anchors with shots 1..k all correct
    counts: list    # anchors contributing to shot k (constant by design)

    def as_dict(self) -> dict:
        return {
            "k_max": self.k_max,
            "anchor_count": self.anchor_count,
            "per_shot": self.per_shot,
            "joint": self.joint,
            "counts": self.counts,
        }


@dataclass
class LengthBucketReport:
    buckets: list = field(default_factory=list)
    # each bucket: {lo, hi, sentences, positions, accuracy}

    def as_dict(self) -> dict:
        return {"buckets": self.buckets}


@dataclass
class EmbeddingProjection:
    coords: np.ndarray            # [n, 2]
    explained_variance: tuple     # ratio of total variance per component
    token_ids: list

    def as_dict(self) -> dict:
        return {
            "explained_variance": list(self.explained_variance),
            "token_ids": list(self.token_ids),
            "coords": self.coords.tolist(),
        }


def _pad_batches(encoded, batch_size):
    """Deterministic length-sorted padded batches (no shuffling)."""
    order = sorted(range(len(encoded)), key=lambda i: len(encoded[i]))
    for start in range(0, len(order), batch_size):
        rows = [encoded[i] for i in order[start:start + batch_size]]
        width = max(len(r) for r in rows)
        ids = np.full((len(rows), width), PAD_ID, dtype=np.int64)
        for j, row in enumerate(rows):
            ids[j, :len(row)] = row
        yield ids


def evaluate(params, encoded, *, include_eos: bool = True,
             batch_size: int = 64) -> EvalReport:
    """Teacher-forced metrics over every predicting position of a split."""
    if not encoded:
        raise EmptySplit("evaluate: no sentences")
    v = params.dims.vocab_size
    total_nll = 0.0
    total_correct = 0
    total_count = 0
    tp = np.zeros(v, dtype=np.int64)
    fp = np.zeros(v, dtype=np.int64)
    fn = np.zeros(v, dtype=np.int64)

    for ids in _pad_batches(encoded, batch_size):
        targets = ids[:, 1:]
        mask = targets != PAD_ID
        if not include_eos:
            mask = mask & (targets != EOS_ID)
        if not mask.any():
            continue
        logits, _ = forward_sequence(params, ids)
        loss, _ = softmax_xent(logits, targets, mask)
        cnt = int(mask.sum())
        total_nll += loss * cnt
        total_count += cnt
        pred = np.argmax(logits, axis=-1)  # first max = smallest id on ties
        gold = targets[mask]
        hyp = pred[mask]
        hit = hyp == gold
        total_correct += int(hit.sum())
        np.add.at(tp, gold[hit], 1)
        np.add.at(fn, gold[~hit], 1)
        np.add.at(fp, hyp[~hit], 1)

    if total_count == 0:
        raise EmptySplit("evaluate: every position is masked")
    ce = total_nll / total_count
    supported = (tp + fn) > 0
    denom = 2 * tp + fp + fn
    f1 = np.zeros(v, dtype=np.float64)
    nz = denom > 0
    f1[nz] = 2.0 * tp[nz] / denom[nz]
    return EvalReport(
        perplexity=math.exp(ce),
        cross_entropy=ce,
        accuracy=total_correct / total_count,
        macro_f1=float(f1[supported].mean()) if supported.any() else 0.0,
        token_count=total_count,
        class_count=int(supported.sum()),
    )


def multishot(params, encoded, k_max: int = 4) -> MultiShotReport:
    """Autoregressive k-step accuracy without teacher forcing.

    A sentence [BOS, w_1..w_T, EOS] contributes anchors t = 1..T+1-k_max
    (it needs at least k_max+1 predicting positions). At anchor t the gold
    prefix w_1..w_t is fed, then k_max tokens are generated greedily, each
    fed back; shot k is correct when the k-th generated token matches the
    gold token at position t+k. One anchor set serves every k, so counts
    are constant in k.
    """
    if k_max < 1:
        raise ValueError("k_max must be >= 1")
    shot_hits = np.zeros(k_max, dtype=np.int64)
    joint_hits = np.zeros(k_max, dtype=np.int64)
    anchors = 0
    for row in encoded:
        gold = list(row[1:])          # w_1..w_T, EOS
        n_pos = len(gold)
        if n_pos < k_max + 1:
            continue
        # state[t], logits[t]: after feeding BOS + w_1..w_t
        state, logits = run_context(params, row[:1])
        prefix_states = [(state, logits)]
        for tok in gold[:-1]:
            state, logits = step_state(params, state, int(tok))
            prefix_states.append((state, logits))
        for t in range(1, n_pos - k_max + 1):
            anchors += 1
            state, logits = prefix_states[t]
            all_correct = True
            for k in range(k_max):
                gen = int(np.argmax(logits))
                if gen == gold[t + k]:
                    shot_hits[k] += 1
                else:
                    all_correct = False
                if all_correct:
                    joint_hits[k] += 1
                if k + 1 < k_max:
                    state, logits = step_state(params, state, gen)
    per_shot = [float(h / anchors) if anchors else 0.0 for h in shot_hits]
    joint = [float(h / anchors) if anchors else 0.0 for h in joint_hits]
    return MultiShotReport(k_max=k_max, anchor_count=anchors,
                           per_shot=per_shot, joint=joint,
                           counts=[anchors] * k_max)


def length_buckets(params, encoded, *, include_eos: bool = True) -> LengthBucketReport:
    """Teacher-forced accuracy grouped by sentence token count T."""
    if not encoded:
        raise EmptySplit("length_buckets: no sentences")
    groups = {i: [] for i in range(len(LENGTH_BUCKETS))}
    for row in encoded:
        t_count = len(row) - 2  # strip BOS and EOS
        for i, (lo, hi) in enumerate(LENGTH_BUCKETS):
            if t_count >= lo and (hi is None or t_count <= hi):
                groups[i].append(row)
                break
    report = LengthBucketReport()
    for i, (lo, hi) in enumerate(LENGTH_BUCKETS):
        rows = groups[i]
        entry = {"lo": lo, "hi": hi, "sentences": len(rows),
                 "positions": 0, "accuracy": None}
        if rows:
            sub = evaluate(params, rows, include_eos=include_eos)
            entry["positions"] = sub.token_count
            entry["accuracy"] = sub.accuracy
        report.buckets.append(entry)
    return report


def sentence_score(params, row):
    """Per-position log-probs (nats) and perplexity of one encoded sentence."""
    if len(row) < 2:
        raise EmptySplit("sentence_score: nothing to predict")
    logits, _ = forward_sequence(params, np.asarray(row, dtype=np.int64))
    logp = log_softmax(logits.astype(np.float64))
    targets = np.asarray(row[1:])
    per_token = logp[np.arange(len(targets)), targets]
    return per_token.tolist(), float(np.exp(-per_token.mean()))


# -- PCA ----------------------------------------------------------------------

def _power_iteration(c, rng, tol=1e-9, max_iters=1000):
    v = rng.standard_normal(c.shape[0])
    v /= np.linalg.norm(v)
    lam = 0.0
    for _ in range(max_iters):
        w = c @ v
        norm = np.linalg.norm(w)
        if norm == 0.0:
            return 0.0, v
        w /= norm
        if np.linalg.norm(w - v) < tol:
            v = w
            break
        v = w
    lam = float(v @ c @ v)
    return lam, v


def pca_project(embeddings, token_ids=None) -> EmbeddingProjection:
    """Top-2 principal components via power iteration with deflation."""
    e = np.asarray(embeddings, dtype=np.float64)
    if token_ids is None:
        token_ids = list(range(e.shape[0]))
    else:
        token_ids = [int(i) for i in token_ids]
        e = e[token_ids]
    if e.shape[0] < 3:
        raise ValueError("need at least 3 rows for a 2-D projection")
    centered = e - e.mean(axis=0, keepdims=True)
    cov = centered.T @ centered / (e.shape[0] - 1)
    total = float(np.trace(cov))
    if not math.isfinite(total) or total <= 1e-12:
        raise DegenerateRank("all points coincide; no variance to project")

    rng = np.random.default_rng(0)
    lam1, v1 = _power_iteration(cov, rng)
    deflated = cov - lam1 * np.outer(v1, v1)
    if float(np.trace(deflated)) <= 1e-12 * total:
        raise DegenerateRank("rank below 2; second component is numerically zero")
    lam2, v2 = _power_iteration(deflated, rng)
    coords = centered @ np.stack([v1, v2], axis=1)
    return EmbeddingProjection(
        coords=coords,
        explained_variance=(lam1 / total, lam2 / total),
        token_ids=token_ids,
    )


# -- report emitters ----------------------------------------------------------

def text_table(headers, rows) -> str:
    """Aligned plain-text table; numbers right-aligned, text left-aligned."""
    def fmt(x):
        if isinstance(x, float):
            return f"{x:.4f}"
        return "-" if x is None else str(x)
    cells = [[fmt(x) for x in row] for row in rows]
    widths = [max(len(h), *(len(r[i]) for r in cells)) if cells else len(h)
              for i, h in enumerate(headers)]
    is_num = [all(isinstance(r[i], (int, float)) or r[i] is None for r in rows)
              for i in range(len(headers))] if rows else [False] * len(headers)

    def line(items, numeric_align):
        out = []
        for i, item in enumerate(items):
            out.append(item.rjust(widths[i]) if numeric_align[i] else item.ljust(widths[i]))
        return "  ".join(out).rstrip()

    parts = [line(list(headers), [False] * len(headers)),
             "  ".join("-" * w for w in widths)]
    parts += [line(r, is_num) for r in cells]
    return "\n".join(parts)


def eval_report_text(report: EvalReport) -> str:
    rows = [[k, v] for k, v in report.as_dict().items()]
    return text_table(("metric", "value"), rows)


def multishot_text(report: MultiShotReport) -> str:
    rows = [[k + 1, report.counts[k], report.per_shot[k], report.joint[k]]
            for k in range(report.k_max)]
    return text_table(("shot", "anchors", "accuracy", "joint_accuracy"), rows)


def buckets_text(report: LengthBucketReport) -> str:
    rows = [[f"[{b['lo']},{b['hi'] if b['hi'] is not None else 'inf'}]",
             b["sentences"], b["positions"], b["accuracy"]]
            for b in report.buckets]
    return text_table(("bucket", "sentences", "positions", "accuracy"), rows)


def sweep_text(rows) -> str:
    if not rows:
        return "(empty sweep)"
    headers = tuple(rows[0].keys())
    return text_table(headers, [[r[h] for h in headers] for r in rows])


def pca_csv(projection: EmbeddingProjection, vocab) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(("token", "x", "y"))
    for tid, (x, y) in zip(projection.token_ids, projection.coords):
        writer.writerow((vocab.token(tid), f"{x:.6f}", f"{y:.6f}"))
    return buf.getvalue()
