"""Trainable embeddings, noisy multi-layer propagation, and scoring.

Only the layer-0 table is a parameter.  Propagation is linear in it
(noise is treated as a constant), so gradients taken at any layer or at
the mean readout pull back to the table through repeated adjacency
products; see :func:`pullback`.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, NumericError, ShapeError
from .graph import NormalizedAdjacency, multiply

READOUT = "readout"


@dataclass
class Hyperparameters:
    """Every tunable knob of the model and its training loop."""

    d: int = 64
    num_layers: int = 3
    noise_rate: float = 2e-3
    tau: float = 0.1
    alpha: float = 1.0
    lambda1: float = 1e-2
    lambda2: float = 1e-3
    lambda3: float = 1e-2
    lambda_reg: float = 1e-4
    num_user_intents: int = 1000
    num_item_intents: int = 1000
    contrast_layer: int = 1
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    batch_size: int = 2048
    epochs: int = 100
    warmup_epochs: int = 5
    seed: int = 42

    def validate(self) -> None:
        if self.tau <= 0:
            raise ConfigError("tau must be > 0")
        if self.noise_rate < 0:
            raise ConfigError("noise_rate must be >= 0")
        if not 1 <= self.contrast_layer <= self.num_layers:
            raise ConfigError(f"contrast_layer must be in [1, {self.num_layers}]")
        if self.num_user_intents < 2 or self.num_item_intents < 2:
            raise ConfigError("intent counts must be >= 2")
        for name in ("lambda1", "lambda2", "lambda3", "lambda_reg", "alpha"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be >= 0")
        if self.d < 1 or self.num_layers < 1:
            raise ConfigError("d and num_layers must be >= 1")
        if self.lr <= 0:
            raise ConfigError("lr must be > 0")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ConfigError("beta1 and beta2 must lie in [0, 1)")
        if self.batch_size < 1 or self.epochs < 0 or self.warmup_epochs < 0:
            raise ConfigError("batch_size must be >= 1 and epoch counts >= 0")


class EmbeddingTable:
    """Base (layer-0) embeddings: users first, items after."""

    def __init__(self, table: np.ndarray, num_users: int, num_items: int):
        table = np.asarray(table, dtype=np.float64)
        if table.ndim != 2 or table.shape[0] != num_users + num_items:
            raise ShapeError(f"table shape {table.shape} does not match {num_users}+{num_items} rows")
        self.table = table
        self.num_users = num_users
        self.num_items = num_items

    @property
    def d(self) -> int:
        return self.table.shape[1]

    @property
    def n(self) -> int:
        return self.table.shape[0]

    def user_block(self) -> np.ndarray:
        return self.table[: self.num_users]

    def item_block(self) -> np.ndarray:
        return self.table[self.num_users:]

    def copy(self) -> "EmbeddingTable":
        return EmbeddingTable(self.table.copy(), self.num_users, self.num_items)


def init_embeddings(
    num_users: int,
    num_items: int,
    d: int,
    seed: int | np.random.SeedSequence,
) -> EmbeddingTable:
    """Uniform init on [-sqrt(6/(2d)), +sqrt(6/(2d))], deterministic per seed."""
    if num_users < 1 or num_items < 1 or d < 1:
        raise ConfigError("num_users, num_items and d must all be >= 1")
    rng = np.random.default_rng(seed)
    bound = np.sqrt(6.0 / (2.0 * d))
    table = rng.uniform(-bound, bound, size=(num_users + num_items, d))
    return EmbeddingTable(table, num_users, num_items)


@dataclass
class ForwardTrace:
    """All per-layer states of one propagation pass.

    ``layers[l]`` holds Z(l) for l = 0..L; ``noises[l]`` holds the noise
    added before producing layer l+1 (all zeros when noise was disabled).
    ``readout`` is the mean over layers 0..L.
    """

    layers: list[np.ndarray]
    noises: list[np.ndarray]
    readout: np.ndarray
    L: int
    noise_rate: float
    num_users: int
    adj: NormalizedAdjacency = field(repr=False)


def forward(
    emb: EmbeddingTable,
    adj: NormalizedAdjacency,
    noise: bool,
    noise_rate: float,
    L: int,
    rng: np.random.Generator | None = None,
) -> ForwardTrace:
    """Propagate L layers, optionally perturbing each layer's input.

    The perturbation of row m is ``noise_rate * X * sign(Z[m])`` with X
    drawn uniform on [0, 1) per coordinate, so it never flips signs and its
    magnitude is bounded by ``noise_rate``.  Each layer computes
    ``Z(l+1) = A @ (Z(l) + noise(l))``.
    """
    if emb.n != adj.n:
        raise ShapeError(f"embedding rows {emb.n} != adjacency nodes {adj.n}")
    if noise and rng is None:
        raise ConfigError("noisy forward requires a random generator")
    layers = [emb.table]
    noises: list[np.ndarray] = []
    for layer in range(L):
        z = layers[-1]
        if noise:
            delta = noise_rate * rng.random(z.shape) * np.sign(z)
        else:
            delta = np.zeros_like(z)
        noises.append(delta)
        nxt = multiply(adj, z + delta)
        if not np.all(np.isfinite(nxt)):
            raise NumericError(f"non-finite values after propagation layer {layer + 1}")
        layers.append(nxt)
    readout = layers[0].copy()
    for z in layers[1:]:
        readout += z
    readout /= L + 1
    return ForwardTrace(layers, noises, readout, L, noise_rate if noise else 0.0, emb.num_users, adj)


def _check_pairs(trace: ForwardTrace, users: np.ndarray, items: np.ndarray) -> None:
    num_items = trace.readout.shape[0] - trace.num_users
    if users.size and (users.min() < 0 or users.max() >= trace.num_users):
        raise IndexError(f"user index out of range [0, {trace.num_users})")
    if items.size and (items.min() < 0 or items.max() >= num_items):
        raise IndexError(f"item index out of range [0, {num_items})")


def score_pairs(trace: ForwardTrace, pairs: np.ndarray) -> np.ndarray:
    """Inner-product scores for an ``(m, 2)`` array of (user, item) pairs."""
    pairs = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
    users, items = pairs[:, 0], pairs[:, 1]
    _check_pairs(trace, users, items)
    zu = trace.readout[users]
    zi = trace.readout[trace.num_users + items]
    return np.sum(zu * zi, axis=1)


def score_all(trace: ForwardTrace, users: np.ndarray) -> np.ndarray:
    """Score every item for each user; row arithmetic matches score_pairs exactly."""
    users = np.asarray(users, dtype=np.int64).ravel()
    _check_pairs(trace, users, np.empty(0, dtype=np.int64))
    items = trace.readout[trace.num_users:]
    out = np.empty((users.size, items.shape[0]))
    for k, u in enumerate(users):
        out[k] = np.sum(trace.readout[u] * items, axis=1)
    return out


def pullback(
    trace: ForwardTrace,
    adj: NormalizedAdjacency,
    grads: dict[int | str, np.ndarray],
) -> np.ndarray:
    """Map layer-space gradients back to the embedding table.

    ``grads`` maps layer indices (0..L) and/or the key ``"readout"`` to
    (n, d) gradient arrays.  Because Z(l) depends on the table linearly
    through A^l (noise is constant), the result is ``sum_l A^l g_l`` with
    the readout gradient spread as ``g/(L+1)`` over every layer; noise
    receives zero gradient.
    """
    n, d = trace.layers[0].shape
    per_layer: list[np.ndarray | None] = [None] * (trace.L + 1)
    for key, g in grads.items():
        g = np.asarray(g)
        if g.shape != (n, d):
            raise ShapeError(f"gradient for {key!r} has shape {g.shape}, expected {(n, d)}")
        if key == READOUT:
            share = g / (trace.L + 1)
            for layer in range(trace.L + 1):
                per_layer[layer] = share if per_layer[layer] is None else per_layer[layer] + share
        else:
            layer = int(key)
            if not 0 <= layer <= trace.L:
                raise ShapeError(f"layer {layer} outside 0..{trace.L}")
            per_layer[layer] = g if per_layer[layer] is None else per_layer[layer] + g
    acc = per_layer[trace.L]
    for layer in range(trace.L - 1, -1, -1):
        if acc is not None:
            acc = multiply(adj, acc)
        g = per_layer[layer]
        if g is not None:
            acc = g.copy() if acc is None else acc + g
    return np.zeros((n, d)) if acc is None else acc
