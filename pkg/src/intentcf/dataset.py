"""Interaction data loading, k-core filtering, and train/val/test splitting.

Input files are plain text.  Two layouts are supported:

* ``tsv``: ``user<TAB>item[<TAB>rating[<TAB>timestamp]]``, UTF-8, lines
  starting with ``#`` are skipped.
* ``movielens``: ``user::item::rating::timestamp``.

Any retained interaction is an implicit positive; a rating column, when
present, can be thresholded away at load time.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DataError, ParseError

FORMATS = ("tsv", "movielens")


@dataclass(frozen=True)
class RawInteraction:
    """One parsed input line, before dedup or filtering."""

    user_token: str
    item_token: str
    rating: float | None = None
    timestamp: int | None = None


@dataclass
class IdMap:
    """Bijection between raw tokens and contiguous indices.

    Indices are assigned in first-appearance order over the retained
    interactions, so loading the same file twice yields the same map.
    """

    user_index: dict[str, int]
    item_index: dict[str, int]
    user_tokens: list[str] = field(repr=False, default_factory=list)
    item_tokens: list[str] = field(repr=False, default_factory=list)

    @property
    def num_users(self) -> int:
        return len(self.user_index)

    @property
    def num_items(self) -> int:
        return len(self.item_index)


class InteractionDataset:
    """Deduplicated user-item edges with per-user positive lists.

    Users occupy indices ``0..num_users-1`` and items ``0..num_items-1``;
    ``edges`` is an ``(E, 2)`` int64 array of (user, item) pairs.
    """

    def __init__(self, num_users: int, num_items: int, edges: np.ndarray):
        self.num_users = int(num_users)
        self.num_items = int(num_items)
        self.edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
        self._positives: list[np.ndarray] | None = None
        self._positive_sets: list[set[int]] | None = None

    @property
    def num_edges(self) -> int:
        return self.edges.shape[0]

    @property
    def user_positives(self) -> list[np.ndarray]:
        """Per-user item indices, sorted ascending."""
        if self._positives is None:
            buckets: list[list[int]] = [[] for _ in range(self.num_users)]
            for u, i in self.edges:
                buckets[u].append(int(i))
            self._positives = [np.array(sorted(b), dtype=np.int64) for b in buckets]
        return self._positives

    @property
    def positive_sets(self) -> list[set[int]]:
        if self._positive_sets is None:
            self._positive_sets = [set(p.tolist()) for p in self.user_positives]
        return self._positive_sets

    def user_degrees(self) -> np.ndarray:
        return np.bincount(self.edges[:, 0], minlength=self.num_users)

    def item_degrees(self) -> np.ndarray:
        return np.bincount(self.edges[:, 1], minlength=self.num_items)


@dataclass
class DatasetSplit:
    """Disjoint train/val/test partition of a dataset's edges.

    ``train`` keeps the full id space of the input dataset; ``val`` and
    ``test`` are ``(E, 2)`` edge arrays in the same id space.
    """

    train: InteractionDataset
    val: np.ndarray
    test: np.ndarray
    seed: int

    def edges_by_user(self, phase: str) -> dict[int, np.ndarray]:
        """Group val or test edges by user; users without edges are absent."""
        if phase not in ("val", "test"):
            raise ConfigError(f"unknown split phase {phase!r}")
        edges = self.val if phase == "val" else self.test
        out: dict[int, list[int]] = {}
        for u, i in edges:
            out.setdefault(int(u), []).append(int(i))
        return {u: np.array(sorted(v), dtype=np.int64) for u, v in out.items()}


def _parse_line(line: str, fmt: str, where: str) -> RawInteraction:
    if fmt == "tsv":
        parts = line.split("\t")
        if not 2 <= len(parts) <= 4:
            raise ParseError(f"{where}: expected 2-4 tab-separated fields, got {len(parts)}")
    else:
        parts = line.split("::")
        if len(parts) != 4:
            raise ParseError(f"{where}: expected user::item::rating::timestamp")
    user, item = parts[0].strip(), parts[1].strip()
    if not user or not item:
        raise ParseError(f"{where}: empty user or item token")
    rating = None
    timestamp = None
    try:
        if len(parts) >= 3 and parts[2].strip():
            rating = float(parts[2])
        if len(parts) >= 4 and parts[3].strip():
            timestamp = int(float(parts[3]))
    except ValueError as exc:
        raise ParseError(f"{where}: {exc}") from None
    return RawInteraction(user, item, rating, timestamp)


def load_interactions(
    path: str,
    fmt: str = "tsv",
    rating_threshold: float = 0.0,
) -> tuple[list[RawInteraction], IdMap, InteractionDataset]:
    """Parse an interaction file into a deduplicated dataset.

    Interactions whose rating is below ``rating_threshold`` are dropped
    (unrated lines always pass); duplicate (user, item) pairs collapse to
    one edge; ids are remapped contiguously in first-appearance order.
    """
    if fmt not in FORMATS:
        raise ConfigError(f"unknown format {fmt!r}; expected one of {FORMATS}")
    raw: list[RawInteraction] = []
    user_index: dict[str, int] = {}
    item_index: dict[str, int] = {}
    user_tokens: list[str] = []
    item_tokens: list[str] = []
    edges: list[tuple[int, int]] = []
    seen: set[tuple[int, int]] = set()
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n").rstrip("\r")
            if not line.strip():
                continue
            if fmt == "tsv" and line.lstrip().startswith("#"):
                continue
            rec = _parse_line(line, fmt, f"{path}:{lineno}")
            raw.append(rec)
            if rec.rating is not None and rec.rating < rating_threshold:
                continue
            u = user_index.setdefault(rec.user_token, len(user_index))
            if u == len(user_tokens):
                user_tokens.append(rec.user_token)
            i = item_index.setdefault(rec.item_token, len(item_index))
            if i == len(item_tokens):
                item_tokens.append(rec.item_token)
            if (u, i) not in seen:
                seen.add((u, i))
                edges.append((u, i))
    idmap = IdMap(user_index, item_index, user_tokens, item_tokens)
    data = InteractionDataset(
        idmap.num_users,
        idmap.num_items,
        np.array(edges, dtype=np.int64).reshape(-1, 2),
    )
    return raw, idmap, data


def kcore_filter(dataset: InteractionDataset, min_degree: int) -> InteractionDataset:
    """Iteratively drop users/items with degree < ``min_degree`` until stable.

    Surviving ids are re-compacted in ascending order of their old index.
    """
    if min_degree < 0:
        raise ConfigError("min_degree must be >= 0")
    if min_degree == 0:
        return InteractionDataset(dataset.num_users, dataset.num_items, dataset.edges.copy())
    edges = dataset.edges
    while True:
        udeg = np.bincount(edges[:, 0], minlength=dataset.num_users)
        ideg = np.bincount(edges[:, 1], minlength=dataset.num_items)
        keep_u = udeg >= min_degree
        keep_i = ideg >= min_degree
        mask = keep_u[edges[:, 0]] & keep_i[edges[:, 1]]
        if mask.all():
            break
        edges = edges[mask]
        if edges.shape[0] == 0:
            raise DataError(f"empty after filtering (min_degree={min_degree})")
    kept_users = np.unique(edges[:, 0])
    kept_items = np.unique(edges[:, 1])
    if kept_users.size == 0 or kept_items.size == 0:
        raise DataError(f"empty after filtering (min_degree={min_degree})")
    user_map = np.full(dataset.num_users, -1, dtype=np.int64)
    user_map[kept_users] = np.arange(kept_users.size)
    item_map = np.full(dataset.num_items, -1, dtype=np.int64)
    item_map[kept_items] = np.arange(kept_items.size)
    remapped = np.column_stack((user_map[edges[:, 0]], item_map[edges[:, 1]]))
    return InteractionDataset(kept_users.size, kept_items.size, remapped)


def split_dataset(
    dataset: InteractionDataset,
    ratios: tuple[float, float, float] = (0.8, 0.1, 0.1),
    seed: int = 0,
) -> DatasetSplit:
    """Per-user random split into train/val/test.

    For each user the positives are shuffled with the seeded generator and
    ``floor(ratio * degree)`` items go to val and to test; the remainder
    stays in train.  Users with fewer than 3 interactions keep everything
    in train so they remain trainable.
    """
    if any(r <= 0 for r in ratios):
        raise ConfigError(f"ratios must be positive, got {ratios}")
    if not math.isclose(sum(ratios), 1.0, abs_tol=1e-9):
        raise ConfigError(f"ratios must sum to 1, got {sum(ratios)}")
    rng = np.random.default_rng(seed)
    train_edges: list[np.ndarray] = []
    val_edges: list[np.ndarray] = []
    test_edges: list[np.ndarray] = []
    for u, pos in enumerate(dataset.user_positives):
        deg = pos.size
        if deg == 0:
            continue
        if deg < 3:
            train_edges.append(np.column_stack((np.full(deg, u), pos)))
            continue
        perm = rng.permutation(deg)
        n_val = int(ratios[1] * deg)
        n_test = int(ratios[2] * deg)
        val_items = pos[perm[:n_val]]
        test_items = pos[perm[n_val:n_val + n_test]]
        train_items = np.sort(pos[perm[n_val + n_test:]])
        if val_items.size:
            val_edges.append(np.column_stack((np.full(val_items.size, u), np.sort(val_items))))
        if test_items.size:
            test_edges.append(np.column_stack((np.full(test_items.size, u), np.sort(test_items))))
        train_edges.append(np.column_stack((np.full(train_items.size, u), train_items)))

    def _stack(parts: list[np.ndarray]) -> np.ndarray:
        if not parts:
            return np.empty((0, 2), dtype=np.int64)
        return np.concatenate(parts).astype(np.int64)

    train = InteractionDataset(dataset.num_users, dataset.num_items, _stack(train_edges))
    return DatasetSplit(train=train, val=_stack(val_edges), test=_stack(test_edges), seed=seed)
