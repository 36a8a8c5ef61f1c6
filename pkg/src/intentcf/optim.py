"""Sparse-row Adam over the embedding table plus a finite-difference checker.

The Adam variant is lazy: only rows present in the gradient buffer get
their moments, step counters, and parameters updated; untouched rows keep
stale state.  Bias correction therefore uses a per-row step count.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .backbone import EmbeddingTable
from .errors import ConfigError, NumericError
from .objectives import GradBuffer


@dataclass
class AdamState:
    """First/second moment estimates and per-row step counters."""

    m: np.ndarray
    v: np.ndarray
    t: np.ndarray

    @classmethod
    def zeros(cls, num_rows: int, d: int) -> "AdamState":
        return cls(
            m=np.zeros((num_rows, d)),
            v=np.zeros((num_rows, d)),
            t=np.zeros(num_rows, dtype=np.int64),
        )


def adam_step(
    state: AdamState,
    emb: EmbeddingTable,
    grads: GradBuffer,
    lr: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> None:
    """Apply one bias-corrected Adam update to the rows present in ``grads``."""
    if lr <= 0:
        raise ConfigError("lr must be > 0")
    if not (0 <= beta1 < 1 and 0 <= beta2 < 1):
        raise ConfigError("beta1 and beta2 must lie in [0, 1)")
    rows = grads.rows()
    if rows.size == 0:
        return
    g = grads.values(rows)
    finite = np.isfinite(g)
    if not finite.all():
        bad = int(rows[np.flatnonzero(~finite.all(axis=1))[0]])
        raise NumericError(f"non-finite gradient at row {bad}")
    state.t[rows] += 1
    t = state.t[rows].astype(np.float64)[:, None]
    m = beta1 * state.m[rows] + (1.0 - beta1) * g
    v = beta2 * state.v[rows] + (1.0 - beta2) * g * g
    state.m[rows] = m
    state.v[rows] = v
    m_hat = m / (1.0 - beta1 ** t)
    v_hat = v / (1.0 - beta2 ** t)
    emb.table[rows] -= lr * m_hat / (np.sqrt(v_hat) + eps)


def finite_diff_check(
    loss_fn: Callable[[EmbeddingTable], float],
    emb: EmbeddingTable,
    analytic: GradBuffer,
    h: float = 1e-5,
    touched_rows: np.ndarray | None = None,
) -> float:
    """Max relative error between analytic and central-difference gradients.

    ``loss_fn`` must be deterministic (run with noise disabled).  The
    relative error denominator is ``max(|analytic|, |numeric|, 1e-8)``.
    The table is perturbed in place and restored coordinate by coordinate.
    """
    rows = analytic.rows() if touched_rows is None else np.asarray(touched_rows, dtype=np.int64)
    table = emb.table
    dense = analytic.dense()
    worst = 0.0
    for r in rows:
        for j in range(table.shape[1]):
            orig = table[r, j]
            table[r, j] = orig + h
            f_plus = loss_fn(emb)
            table[r, j] = orig - h
            f_minus = loss_fn(emb)
            table[r, j] = orig
            numeric = (f_plus - f_minus) / (2.0 * h)
            a = dense[r, j]
            rel = abs(a - numeric) / max(abs(a), abs(numeric), 1e-8)
            worst = max(worst, rel)
    return worst
