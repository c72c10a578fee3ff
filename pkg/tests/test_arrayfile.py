import numpy as np
import pytest

from tweenkit.arrayfile import ContainerError, load_arrays, save_arrays


def test_round_trip(tmp_path):
    path = tmp_path / "x.bin"
    arrays = {
        "floats": np.arange(12, dtype=np.float64).reshape(3, 4),
        "ints": np.array([1, -2, 3], dtype=np.int64),
        "flags": np.array([1, 0, 1], dtype=np.uint8),
    }
    save_arrays(path, arrays, {"hello": "world", "n": 3})
    out, meta = load_arrays(path)
    assert meta == {"hello": "world", "n": 3}
    assert out["floats"].dtype == np.dtype("<f4")
    assert np.allclose(out["floats"], arrays["floats"])
    assert np.array_equal(out["ints"], arrays["ints"])
    assert np.array_equal(out["flags"], arrays["flags"])


def test_deterministic_bytes(tmp_path):
    a = {"b": np.ones((2, 2)), "a": np.zeros(3)}
    p1, p2 = tmp_path / "1.bin", tmp_path / "2.bin"
    save_arrays(p1, a, {"k": 1})
    save_arrays(p2, dict(reversed(list(a.items()))), {"k": 1})
    assert p1.read_bytes() == p2.read_bytes()


def test_bad_magic(tmp_path):
    p = tmp_path / "bad.bin"
    p.write_bytes(b"NOPE" + b"\x00" * 32)
    with pytest.raises(ContainerError):
        load_arrays(p)


def test_scalar_and_empty_arrays(tmp_path):
    p = tmp_path / "s.bin"
    save_arrays(p, {"empty": np.zeros((0, 2)), "one": np.array([3.5])})
    out, _ = load_arrays(p)
    assert out["empty"].shape == (0, 2)
    assert out["one"][0] == pytest.approx(3.5)
