"""Uniformity targets on the unit sphere, k-means prototypes, and matching.

Targets are fixed unit vectors optimized once so that they spread as
uniformly as possible; prototypes are k-means centroids of the current
base embeddings.  Each prototype is matched to exactly one target by
maximizing total cosine similarity with an optimal (not greedy)
assignment.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment

from .errors import ConfigError, ShapeError

logger = logging.getLogger(__name__)

MAX_TARGETS = 10 ** 6


@dataclass
class TargetSet:
    """Unit-norm target vectors plus the settings that produced them."""

    vectors: np.ndarray
    tau: float
    steps: int
    lr: float

    @property
    def count(self) -> int:
        return self.vectors.shape[0]

    @property
    def d(self) -> int:
        return self.vectors.shape[1]


@dataclass
class Centroids:
    """k-means result: centroid matrix, per-point labels, final inertia."""

    matrix: np.ndarray
    labels: np.ndarray
    inertia: float
    inertia_history: list[float]

    @property
    def count(self) -> int:
        return self.matrix.shape[0]


@dataclass
class Assignment:
    """Bijection from prototype index to target index."""

    perm: np.ndarray
    mean_similarity: float


def uniformity_loss(vectors: np.ndarray, tau: float) -> float:
    """Mean over rows of log-sum-exp of pairwise similarities / tau."""
    s = vectors @ vectors.T / tau
    m = s.max(axis=1, keepdims=True)
    return float(np.mean(np.log(np.exp(s - m).sum(axis=1)) + m[:, 0]))


def generate_targets(
    num_targets: int,
    d: int,
    tau: float = 0.5,
    steps: int = 2000,
    lr: float = 0.1,
    seed: int | np.random.SeedSequence = 0,
) -> TargetSet:
    """Spread ``num_targets`` unit vectors by projected gradient descent.

    Starts from random Gaussian directions and repeatedly descends the
    pairwise log-sum-exp energy, re-projecting onto the unit sphere after
    every step.  Deterministic for a fixed seed.
    """
    if num_targets < 2 or d < 2:
        raise ConfigError("need at least 2 targets in at least 2 dimensions")
    if num_targets > MAX_TARGETS:
        raise ConfigError(f"num_targets {num_targets} exceeds practical bound {MAX_TARGETS}")
    if tau <= 0:
        raise ConfigError("tau must be > 0")
    rng = np.random.default_rng(seed)
    t = rng.standard_normal((num_targets, d))
    t /= np.linalg.norm(t, axis=1, keepdims=True)
    for _ in range(steps):
        s = t @ t.T / tau
        s -= s.max(axis=1, keepdims=True)
        e = np.exp(s)
        p = e / e.sum(axis=1, keepdims=True)
        grad = (p + p.T) @ t / (num_targets * tau)
        t = t - lr * grad
        t /= np.linalg.norm(t, axis=1, keepdims=True)
    return TargetSet(vectors=t, tau=tau, steps=steps, lr=lr)


def _plus_plus_init(x: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    """k-means++ seeding from the data rows."""
    m = x.shape[0]
    chosen = np.empty(k, dtype=np.int64)
    chosen[0] = rng.integers(m)
    dist = np.sum((x - x[chosen[0]]) ** 2, axis=1)
    for j in range(1, k):
        total = dist.sum()
        if total <= 0:
            # All remaining distances zero (duplicate points): pick any unused row.
            unused = np.setdiff1d(np.arange(m), chosen[:j], assume_unique=False)
            chosen[j] = unused[rng.integers(unused.size)]
        else:
            chosen[j] = rng.choice(m, p=dist / total)
        dist = np.minimum(dist, np.sum((x - x[chosen[j]]) ** 2, axis=1))
    return x[chosen].copy()


def _assign_labels(x: np.ndarray, centers: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    d2 = (
        np.sum(x ** 2, axis=1)[:, None]
        - 2.0 * (x @ centers.T)
        + np.sum(centers ** 2, axis=1)[None, :]
    )
    labels = np.argmin(d2, axis=1)
    return labels, np.maximum(d2[np.arange(x.shape[0]), labels], 0.0)


def kmeans(
    x: np.ndarray,
    num_clusters: int,
    iters: int = 20,
    seed: int | np.random.SeedSequence = 0,
) -> Centroids:
    """Lloyd iterations with k-means++ seeding.

    Runs until labels stop changing or ``iters`` is reached.  An empty
    cluster steals the point currently farthest from its assigned centroid
    (never emptying another cluster), so no cluster stays empty.  The
    recorded inertia is non-increasing across iterations.
    """
    x = np.asarray(x, dtype=np.float64)
    m = x.shape[0]
    if m < num_clusters:
        raise ConfigError(f"need at least {num_clusters} points, got {m}")
    if iters < 1:
        raise ConfigError("iters must be >= 1")
    rng = np.random.default_rng(seed)
    centers = _plus_plus_init(x, num_clusters, rng)
    labels = np.full(m, -1, dtype=np.int64)
    history: list[float] = []
    for _ in range(iters):
        new_labels, d2 = _assign_labels(x, centers)
        counts = np.bincount(new_labels, minlength=num_clusters)
        stole = False
        empties = np.flatnonzero(counts == 0)
        if empties.size:
            stole = True
            far_order = np.argsort(-d2, kind="stable")
            cursor = 0
            for c in empties:
                while counts[new_labels[far_order[cursor]]] <= 1:
                    cursor += 1
                p = far_order[cursor]
                cursor += 1
                counts[new_labels[p]] -= 1
                new_labels[p] = c
                counts[c] += 1
        converged = not stole and np.array_equal(new_labels, labels)
        labels = new_labels
        sums = np.zeros_like(centers)
        np.add.at(sums, labels, x)
        centers = sums / counts[:, None]
        history.append(float(np.sum((x - centers[labels]) ** 2)))
        if converged:
            break
    return Centroids(matrix=centers, labels=labels, inertia=history[-1], inertia_history=history)


def solve_assignment(similarity: np.ndarray) -> np.ndarray:
    """Permutation maximizing the total similarity ``sum_i S[i, perm[i]]``."""
    similarity = np.asarray(similarity, dtype=np.float64)
    if similarity.ndim != 2 or similarity.shape[0] != similarity.shape[1]:
        raise ShapeError(f"similarity matrix must be square, got {similarity.shape}")
    rows, cols = linear_sum_assignment(similarity, maximize=True)
    perm = np.empty(similarity.shape[0], dtype=np.int64)
    perm[rows] = cols
    return perm


def assign_targets(centroids: Centroids, targets: TargetSet) -> Assignment:
    """Match each prototype to one target by maximal cosine similarity."""
    if centroids.count != targets.count:
        raise ShapeError(
            f"{centroids.count} prototypes vs {targets.count} targets; counts must match"
        )
    norms = np.linalg.norm(centroids.matrix, axis=1)
    zero = norms == 0
    if zero.any():
        logger.warning("%d zero-norm prototypes; their similarities set to 0", int(zero.sum()))
    safe = np.where(zero, 1.0, norms)
    unit_centroids = centroids.matrix / safe[:, None]
    sim = unit_centroids @ targets.vectors.T
    sim[zero] = 0.0
    perm = solve_assignment(sim)
    mean_sim = float(sim[np.arange(sim.shape[0]), perm].mean())
    return Assignment(perm=perm, mean_similarity=mean_sim)
