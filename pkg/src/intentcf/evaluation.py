"""Full-ranking top-N evaluation: Recall@N and NDCG@N with masking.

Every item is scored for each evaluated user; the user's known training
(and, for the test phase, validation) interactions are masked out before
ranking.  Ties break on ascending item index so runs are reproducible.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .backbone import ForwardTrace, score_all
from .dataset import DatasetSplit
from .errors import ConfigError, EvalError


@dataclass
class MetricReport:
    """Recall/NDCG per cutoff, averaged over evaluated users."""

    per_n: dict[int, tuple[float, float]]
    users_evaluated: int

    def recall(self, n: int) -> float:
        return self.per_n[n][0]

    def ndcg(self, n: int) -> float:
        return self.per_n[n][1]

    def to_dict(self) -> dict[str, float | int]:
        out: dict[str, float | int] = {}
        for n in sorted(self.per_n):
            out[f"recall@{n}"] = self.per_n[n][0]
            out[f"ndcg@{n}"] = self.per_n[n][1]
        out["users_evaluated"] = self.users_evaluated
        return out


def topn(scores: np.ndarray, mask: Iterable[int], n: int) -> np.ndarray:
    """Indices of the n highest-scoring unmasked items, ties by lower index.

    Returns fewer than n entries when fewer unmasked items exist.
    """
    if n < 1:
        raise ConfigError("n must be >= 1")
    scores = np.asarray(scores).ravel()
    valid = np.ones(scores.shape[0], dtype=bool)
    mask_idx = np.fromiter(mask, dtype=np.int64) if not isinstance(mask, np.ndarray) else mask
    if mask_idx.size:
        valid[mask_idx] = False
    candidates = np.flatnonzero(valid)
    order = np.lexsort((candidates, -scores[candidates]))
    return candidates[order[:n]]


def recall_at_n(recommended: np.ndarray, relevant: set[int], n: int) -> float:
    """Fraction of the relevant set present in the top-n prefix."""
    if not relevant:
        raise ConfigError("relevant set must be non-empty")
    hits = sum(1 for item in recommended[:n] if int(item) in relevant)
    return hits / len(relevant)


def ndcg_at_n(recommended: np.ndarray, relevant: set[int], n: int) -> float:
    """Binary-relevance NDCG with 1/log2(rank+1) gains."""
    if not relevant:
        raise ConfigError("relevant set must be non-empty")
    dcg = 0.0
    for rank, item in enumerate(recommended[:n], start=1):
        if int(item) in relevant:
            dcg += 1.0 / math.log2(rank + 1)
    ideal = sum(1.0 / math.log2(r + 1) for r in range(1, min(n, len(relevant)) + 1))
    return dcg / ideal


def evaluate(
    trace: ForwardTrace,
    split: DatasetSplit,
    phase: str,
    ns: tuple[int, ...] = (10, 20, 50),
) -> MetricReport:
    """Rank all items for every user with ground truth in ``phase``.

    The val phase masks each user's train items; the test phase masks
    train and val items.  Users with empty ground truth are excluded from
    the averages.
    """
    if trace.noise_rate != 0.0:
        raise ConfigError("evaluation requires a noise-free forward trace")
    truth = split.edges_by_user(phase)
    if not truth:
        raise EvalError(f"no users with ground truth in phase {phase!r}")
    train_pos = split.train.user_positives
    val_by_user = split.edges_by_user("val") if phase == "test" else {}
    max_n = max(ns)
    sums = {n: [0.0, 0.0] for n in ns}
    users = sorted(truth)
    for u in users:
        masked = train_pos[u]
        if phase == "test" and u in val_by_user:
            masked = np.concatenate((masked, val_by_user[u]))
        scores = score_all(trace, np.array([u]))[0]
        ranked = topn(scores, masked, max_n)
        relevant = set(truth[u].tolist())
        for n in ns:
            sums[n][0] += recall_at_n(ranked, relevant, n)
            sums[n][1] += ndcg_at_n(ranked, relevant, n)
    count = len(users)
    per_n = {n: (sums[n][0] / count, sums[n][1] / count) for n in ns}
    return MetricReport(per_n=per_n, users_evaluated=count)
