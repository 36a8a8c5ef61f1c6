"""Symmetric degree-normalized adjacency of the user-item bipartite graph.

Users occupy node indices ``0..num_users-1`` and items the remaining
``num_users..n-1``.  Edge (u, i) carries weight ``1/sqrt(deg(u) * deg(i))``
in both directions; there are no self-loops and no degree smoothing, so
zero-degree nodes simply have empty rows.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .dataset import InteractionDataset
from .errors import DataError, ShapeError


@dataclass
class NormalizedAdjacency:
    """CSR storage of the normalized adjacency over ``num_users + num_items`` nodes."""

    num_users: int
    num_items: int
    indptr: np.ndarray
    indices: np.ndarray
    weights: np.ndarray
    _csr: sp.csr_matrix | None = field(default=None, repr=False, compare=False)

    @property
    def n(self) -> int:
        return self.num_users + self.num_items

    @property
    def nnz(self) -> int:
        return self.indices.shape[0]

    def matrix(self) -> sp.csr_matrix:
        """SciPy view of the stored CSR arrays (shared buffers)."""
        if self._csr is None:
            self._csr = sp.csr_matrix(
                (self.weights, self.indices, self.indptr), shape=(self.n, self.n)
            )
        return self._csr


def build_adjacency(train: InteractionDataset) -> NormalizedAdjacency:
    """Build the symmetric normalized adjacency from train edges only."""
    if train.num_edges == 0:
        raise DataError("cannot build adjacency from an empty dataset")
    n_users = train.num_users
    n = n_users + train.num_items
    udeg = train.user_degrees().astype(np.float64)
    ideg = train.item_degrees().astype(np.float64)
    u = train.edges[:, 0]
    i = train.edges[:, 1]
    w = 1.0 / np.sqrt(udeg[u] * ideg[i])
    rows = np.concatenate((u, n_users + i))
    cols = np.concatenate((n_users + i, u))
    vals = np.concatenate((w, w))
    order = np.lexsort((cols, rows))
    rows, cols, vals = rows[order], cols[order], vals[order]
    indptr = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(np.bincount(rows, minlength=n), out=indptr[1:])
    return NormalizedAdjacency(n_users, train.num_items, indptr, cols, vals)


def multiply(adj: NormalizedAdjacency, x: np.ndarray) -> np.ndarray:
    """Return the sparse product ``A @ x`` for an ``(n, d)`` dense matrix."""
    x = np.asarray(x)
    if x.ndim != 2 or x.shape[0] != adj.n:
        raise ShapeError(f"expected ({adj.n}, d) matrix, got {x.shape}")
    return adj.matrix() @ x
