"""Binary checkpoint serialization.

Layout (all little-endian): magic ``UC2I``, u32 version, six u64 dims
(num_users, num_items, d, L, user target count, item target count), the
float64 row-major arrays (embedding table, user targets, item targets),
u64 best epoch, f64 best metric, u64 seed, and a trailing CRC32 (u32)
over everything before it.  Round-trips are byte-exact.
"""

from __future__ import annotations

import struct
import zlib
from dataclasses import dataclass

import numpy as np

from .errors import CheckpointError

MAGIC = b"UC2I"
VERSION = 1


@dataclass
class Checkpoint:
    """Trained state: dims, embedding table, target sets, best-epoch metadata."""

    num_users: int
    num_items: int
    d: int
    L: int
    table: np.ndarray
    user_targets: np.ndarray
    item_targets: np.ndarray
    best_epoch: int
    best_metric: float
    seed: int


def _pack(ckpt: Checkpoint) -> bytes:
    parts = [
        MAGIC,
        struct.pack("<I", VERSION),
        struct.pack(
            "<6Q",
            ckpt.num_users,
            ckpt.num_items,
            ckpt.d,
            ckpt.L,
            ckpt.user_targets.shape[0],
            ckpt.item_targets.shape[0],
        ),
        np.ascontiguousarray(ckpt.table, dtype="<f8").tobytes(),
        np.ascontiguousarray(ckpt.user_targets, dtype="<f8").tobytes(),
        np.ascontiguousarray(ckpt.item_targets, dtype="<f8").tobytes(),
        struct.pack("<Q", ckpt.best_epoch),
        struct.pack("<d", ckpt.best_metric),
        struct.pack("<Q", ckpt.seed),
    ]
    body = b"".join(parts)
    return body + struct.pack("<I", zlib.crc32(body) & 0xFFFFFFFF)


def save_checkpoint(ckpt: Checkpoint, path: str) -> None:
    with open(path, "wb") as fh:
        fh.write(_pack(ckpt))


def load_checkpoint(path: str) -> Checkpoint:
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < 4 + 4 + 48 + 8 + 8 + 8 + 4:
        raise CheckpointError(f"{path}: truncated checkpoint")
    if blob[:4] != MAGIC:
        raise CheckpointError(f"{path}: bad magic {blob[:4]!r}")
    (version,) = struct.unpack_from("<I", blob, 4)
    if version != VERSION:
        raise CheckpointError(f"{path}: unsupported version {version}")
    (stored_crc,) = struct.unpack_from("<I", blob, len(blob) - 4)
    if zlib.crc32(blob[:-4]) & 0xFFFFFFFF != stored_crc:
        raise CheckpointError(f"{path}: CRC mismatch")
    dims = struct.unpack_from("<6Q", blob, 8)
    num_users, num_items, d, layers, n_ut, n_it = (int(v) for v in dims)
    offset = 8 + 48
    n = num_users + num_items
    expected = offset + 8 * d * (n + n_ut + n_it) + 24 + 4
    if len(blob) != expected:
        raise CheckpointError(f"{path}: size {len(blob)} does not match header ({expected})")

    def take(rows: int) -> np.ndarray:
        nonlocal offset
        count = rows * d
        arr = np.frombuffer(blob, dtype="<f8", count=count, offset=offset).reshape(rows, d)
        offset += 8 * count
        return arr.astype(np.float64)

    table = take(n)
    user_targets = take(n_ut)
    item_targets = take(n_it)
    best_epoch, = struct.unpack_from("<Q", blob, offset)
    best_metric, = struct.unpack_from("<d", blob, offset + 8)
    seed, = struct.unpack_from("<Q", blob, offset + 16)
    return Checkpoint(
        num_users=num_users,
        num_items=num_items,
        d=d,
        L=layers,
        table=table,
        user_targets=user_targets,
        item_targets=item_targets,
        best_epoch=int(best_epoch),
        best_metric=float(best_metric),
        seed=int(seed),
    )
