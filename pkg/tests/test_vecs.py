import numpy as np
import pytest

from aisaq.vecs import format_of, read_vecs, write_vecs


def test_fvecs_bytes(tmp_path):
    p = tmp_path / "a.fvecs"
    write_vecs(p, np.array([[1.0, -2.0]], dtype=np.float32))
    # dim=2 then two little-endian float32
    assert p.read_bytes() == bytes.fromhex("02000000" "0000803f" "000000c0")


@pytest.mark.parametrize("fmt,dtype", [("fvecs", np.float32), ("bvecs", np.uint8), ("ivecs", np.int32)])
def test_round_trip(tmp_path, fmt, dtype):
    rng = np.random.default_rng(0)
    x = (rng.integers(0, 255, size=(17, 5))).astype(dtype)
    p = tmp_path / f"x.{fmt}"
    write_vecs(p, x)
    y = read_vecs(p)
    assert y.dtype == dtype and np.array_equal(x, y)
    assert np.array_equal(read_vecs(p, count=3), x[:3])


def test_format_of():
    assert format_of("/a/b/base.BVECS") == "bvecs"
    with pytest.raises(ValueError):
        format_of("base.npy")


def test_empty_and_truncated(tmp_path):
    p = tmp_path / "e.fvecs"
    p.write_bytes(b"")
    with pytest.raises(ValueError, match="empty"):
        read_vecs(p)
    write_vecs(p, np.ones((3, 4), dtype=np.float32))
    p.write_bytes(p.read_bytes()[:-1])
    with pytest.raises(ValueError, match="multiple of record size"):
        read_vecs(p)


def test_non_uniform_dim(tmp_path):
    p = tmp_path / "n.ivecs"
    write_vecs(p, np.ones((3, 2), dtype=np.int32))
    raw = bytearray(p.read_bytes())
    raw[12:16] = (5).to_bytes(4, "little")  # second record header
    p.write_bytes(bytes(raw))
    with pytest.raises(ValueError, match="record 1"):
        read_vecs(p)
