import numpy as np
import pytest

from intentcf import Checkpoint, load_checkpoint, save_checkpoint
from intentcf.errors import CheckpointError


def _ckpt(seed=0):
    rng = np.random.default_rng(seed)
    return Checkpoint(
        num_users=4,
        num_items=3,
        d=5,
        L=2,
        table=rng.standard_normal((7, 5)),
        user_targets=rng.standard_normal((3, 5)),
        item_targets=rng.standard_normal((2, 5)),
        best_epoch=11,
        best_metric=0.625,
        seed=42,
    )


class TestRoundTrip:
    def test_save_load_save_byte_identical(self, tmp_path):
        a = tmp_path / "a.ckpt"
        b = tmp_path / "b.ckpt"
        ckpt = _ckpt()
        save_checkpoint(ckpt, str(a))
        loaded = load_checkpoint(str(a))
        save_checkpoint(loaded, str(b))
        assert a.read_bytes() == b.read_bytes()

    def test_fields_preserved(self, tmp_path):
        path = str(tmp_path / "c.ckpt")
        ckpt = _ckpt(3)
        save_checkpoint(ckpt, path)
        loaded = load_checkpoint(path)
        np.testing.assert_array_equal(loaded.table, ckpt.table)
        np.testing.assert_array_equal(loaded.user_targets, ckpt.user_targets)
        np.testing.assert_array_equal(loaded.item_targets, ckpt.item_targets)
        assert (loaded.best_epoch, loaded.best_metric, loaded.seed) == (11, 0.625, 42)
        assert (loaded.num_users, loaded.num_items, loaded.d, loaded.L) == (4, 3, 5, 2)

    def test_magic_bytes(self, tmp_path):
        path = tmp_path / "m.ckpt"
        save_checkpoint(_ckpt(), str(path))
        assert path.read_bytes()[:4] == b"UC2I"


class TestCorruption:
    def test_truncated(self, tmp_path):
        path = tmp_path / "t.ckpt"
        save_checkpoint(_ckpt(), str(path))
        blob = path.read_bytes()
        path.write_bytes(blob[: len(blob) // 2])
        with pytest.raises(CheckpointError):
            load_checkpoint(str(path))

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "b.ckpt"
        save_checkpoint(_ckpt(), str(path))
        blob = bytearray(path.read_bytes())
        blob[:4] = b"XXXX"
        path.write_bytes(bytes(blob))
        with pytest.raises(CheckpointError, match="magic"):
            load_checkpoint(str(path))

    def test_bad_version(self, tmp_path):
        path = tmp_path / "v.ckpt"
        save_checkpoint(_ckpt(), str(path))
        blob = bytearray(path.read_bytes())
        blob[4] = 99
        path.write_bytes(bytes(blob))
        with pytest.raises(CheckpointError, match="version"):
            load_checkpoint(str(path))

    def test_flipped_payload_fails_crc(self, tmp_path):
        path = tmp_path / "c.ckpt"
        save_checkpoint(_ckpt(), str(path))
        blob = bytearray(path.read_bytes())
        blob[100] ^= 0xFF
        path.write_bytes(bytes(blob))
        with pytest.raises(CheckpointError, match="CRC"):
            load_checkpoint(str(path))

    def test_tiny_file(self, tmp_path):
        path = tmp_path / "tiny.ckpt"
        path.write_bytes(b"UC2I")
        with pytest.raises(CheckpointError):
            load_checkpoint(str(path))
