"""Reward-weighted regression over exported trajectory records.

The real policy is a fine-tuned language model; training one is out of scope
here. What this module owns is the objective: a weighted negative
log-likelihood whose weights are exp(reward/tau). The ToyPolicy (hashed
context buckets, softmax over the finite library of seen responses) exists so
the loss and its analytic gradient can be checked numerically and optimized
end to end on real exported datasets.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from typing import Any

import numpy as np

from .errors import DivergedLoss, IoFailure, TooFewSamples, ValidationError


def load_rlao_dataset(path: str) -> tuple[dict[str, Any], list[dict[str, Any]]]:
    """Read an exported dataset: (header, records)."""
    try:
        with open(path, encoding="utf-8") as fh:
            lines = [line for line in fh if line.strip()]
    except OSError as exc:
        raise IoFailure(f"cannot read dataset {path}: {exc}") from exc
    if not lines:
        raise TooFewSamples(f"dataset {path} is empty")
    try:
        header = json.loads(lines[0])
        records = [json.loads(line) for line in lines[1:]]
    except json.JSONDecodeError as exc:
        raise IoFailure(f"dataset {path} is not valid JSONL: {exc}") from exc
    if "schema_version" not in header or "tau" not in header:
        raise ValidationError("dataset header lacks schema_version/tau")
    return header, records


def _bucket(text: str, buckets: int) -> int:
    digest = hashlib.sha256(text.encode("utf-8")).hexdigest()
    return int(digest[:8], 16) % buckets


@dataclass
class Batch:
    """Vectorized training batch: context buckets, target ids, weights."""

    bucket_ids: np.ndarray  # int, shape (N,)
    target_ids: np.ndarray  # int, shape (N,)
    weights: np.ndarray  # float, shape (N,)
    templates: list[str]  # target library, first-seen order


def make_batch(records: list[dict[str, Any]], buckets: int = 16) -> Batch:
    """Index records against the library of distinct target texts."""
    templates: list[str] = []
    index: dict[str, int] = {}
    bucket_ids, target_ids, weights = [], [], []
    for record in records:
        target = record["target"]
        if target not in index:
            index[target] = len(templates)
            templates.append(target)
        bucket_ids.append(_bucket(record["context"], buckets))
        target_ids.append(index[target])
        weights.append(float(record["weight"]))
    return Batch(
        bucket_ids=np.asarray(bucket_ids, dtype=np.int64),
        target_ids=np.asarray(target_ids, dtype=np.int64),
        weights=np.asarray(weights, dtype=np.float64),
        templates=templates,
    )


class ToyPolicy:
    """Tabular softmax policy: one distribution per context bucket."""

    def __init__(self, n_templates: int, buckets: int = 16):
        if n_templates < 1:
            raise ValidationError("policy needs at least one template")
        self.buckets = buckets
        self.theta = np.zeros((buckets, n_templates), dtype=np.float64)

    def probs(self) -> np.ndarray:
        """Row-wise softmax of theta, shape (buckets, n_templates)."""
        shifted = self.theta - self.theta.max(axis=1, keepdims=True)
        exp = np.exp(shifted)
        return exp / exp.sum(axis=1, keepdims=True)


def rwr_loss(policy: ToyPolicy, batch: Batch) -> float:
    """Weighted NLL: -(1/N) * sum_i w_i * log pi(target_i | context_i)."""
    n = len(batch.target_ids)
    if n == 0:
        return 0.0
    p = policy.probs()[batch.bucket_ids, batch.target_ids]
    # an underflowed probability yields -inf here and inf overall, which the
    # training loop's divergence guard turns into DivergedLoss
    with np.errstate(divide="ignore"):
        logs = np.log(p)
    return float(-(batch.weights * logs).sum() / n)


def rwr_grad(policy: ToyPolicy, batch: Batch) -> np.ndarray:
    """Analytic gradient of rwr_loss w.r.t. theta, same shape as theta."""
    grad = np.zeros_like(policy.theta)
    n = len(batch.target_ids)
    if n == 0:
        return grad
    probs = policy.probs()
    for b, t, w in zip(batch.bucket_ids, batch.target_ids, batch.weights):
        row = probs[b].copy()
        row[t] -= 1.0
        grad[b] += w * row / n
    return grad


def train_toy(
    records: list[dict[str, Any]],
    *,
    buckets: int = 16,
    lr: float = 0.5,
    steps: int = 200,
) -> tuple[ToyPolicy, Batch, list[float]]:
    """Plain gradient descent on the RWR objective; returns the loss curve."""
    if not records:
        raise TooFewSamples("cannot train on an empty dataset")
    batch = make_batch(records, buckets)
    policy = ToyPolicy(len(batch.templates), buckets)
    losses = [rwr_loss(policy, batch)]
    for _ in range(steps):
        policy.theta -= lr * rwr_grad(policy, batch)
        loss = rwr_loss(policy, batch)
        if not np.isfinite(loss) or loss > losses[0] * 10 + 1.0:
            raise DivergedLoss(f"loss diverged to {loss} (started at {losses[0]})")
        losses.append(loss)
    return policy, batch, losses
