"""Shared fixtures and helpers for the test suite.

MovieLens-dependent tests look for the raw files under ``data/`` at the
repository root (or ``$MOVIELENS_DIR``) and skip with instructions when
they are absent; everything else runs on synthetic data.
"""

import os

import numpy as np
import pytest

from intentcf import InteractionDataset

REPO_ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
MOVIELENS_DIR = os.environ.get("MOVIELENS_DIR", os.path.join(REPO_ROOT, "data"))

ML100K_FILE = os.path.join(MOVIELENS_DIR, "ml-100k", "u.data")
ML1M_FILE = os.path.join(MOVIELENS_DIR, "ml-1m", "ratings.dat")


def require_dataset(path: str) -> str:
    if not os.path.exists(path):
        pytest.skip(
            f"dataset file {path} not found; place the MovieLens files under "
            f"{MOVIELENS_DIR} (or set MOVIELENS_DIR) to run this test"
        )
    return path


@pytest.fixture
def ml100k_path() -> str:
    return require_dataset(ML100K_FILE)


@pytest.fixture
def ml1m_path() -> str:
    return require_dataset(ML1M_FILE)


def random_dataset(
    rng: np.random.Generator,
    num_users: int,
    num_items: int,
    num_edges: int,
) -> InteractionDataset:
    """Random bipartite dataset without duplicate edges."""
    edges = set()
    while len(edges) < num_edges:
        u = int(rng.integers(num_users))
        i = int(rng.integers(num_items))
        edges.add((u, i))
    return InteractionDataset(num_users, num_items, np.array(sorted(edges), dtype=np.int64))


def blocky_dataset(
    rng: np.random.Generator,
    users_per_block: int = 20,
    items_per_block: int = 15,
    blocks: int = 3,
    in_block: int = 10,
    cross_block: int = 2,
) -> InteractionDataset:
    """Synthetic dataset with planted user/item group structure.

    Each user interacts mostly with items of its own block plus a few
    random cross-block items, giving clustering something to find.
    """
    num_users = users_per_block * blocks
    num_items = items_per_block * blocks
    edges = set()
    for u in range(num_users):
        block = u // users_per_block
        own = rng.choice(items_per_block, size=min(in_block, items_per_block), replace=False)
        for i in own:
            edges.add((u, block * items_per_block + int(i)))
        for i in rng.integers(0, num_items, size=cross_block):
            edges.add((u, int(i)))
    return InteractionDataset(num_users, num_items, np.array(sorted(edges), dtype=np.int64))


def write_tsv(path, dataset: InteractionDataset) -> str:
    with open(path, "w", encoding="utf-8") as fh:
        for u, i in dataset.edges:
            fh.write(f"u{u}\ti{i}\n")
    return str(path)
