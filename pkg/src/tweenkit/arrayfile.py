"""Versioned binary container of named, shape-tagged arrays.

Used for clip caches, model weights and gallery files. Layout (all
integers little-endian):

    magic    4 bytes  b"TWK1"
    version  uint32
    meta_len uint32, then meta_len bytes of UTF-8 JSON metadata
    count    uint32
    per array:
        name_len uint32, name bytes (UTF-8)
        dtype    4 bytes, one of b"<f4 ", b"<i8 ", b"<u1 "
        ndim     uint32, then ndim uint64 dims
        payload  little-endian array data, C order

Numeric payloads are stored as little-endian float32 unless an integer
array is written explicitly. Metadata JSON is serialized with sorted
keys so identical content produces identical bytes.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

MAGIC = b"TWK1"
FORMAT_VERSION = 1

_TAG_DTYPES = {
    b"<f4 ": np.dtype("<f4"),
    b"<i8 ": np.dtype("<i8"),
    b"<u1 ": np.dtype("u1"),
}


class ContainerError(ValueError):
    """Malformed or incompatible container file."""


def _canonical(arr: np.ndarray) -> np.ndarray:
    arr = np.asarray(arr)
    if arr.dtype.kind == "f":
        return np.ascontiguousarray(arr, dtype="<f4")
    if arr.dtype.kind in "iu":
        if arr.dtype == np.uint8:
            return np.ascontiguousarray(arr)
        return np.ascontiguousarray(arr, dtype="<i8")
    if arr.dtype.kind == "b":
        return np.ascontiguousarray(arr, dtype="u1")
    raise ContainerError(f"unsupported array dtype {arr.dtype}")


def save_arrays(path: str | Path, arrays: dict[str, np.ndarray],
                metadata: dict | None = None) -> None:
    """Write arrays + metadata to path, deterministically."""
    meta_bytes = json.dumps(metadata or {}, sort_keys=True,
                            separators=(",", ":")).encode("utf-8")
    chunks = [MAGIC, struct.pack("<I", FORMAT_VERSION),
              struct.pack("<I", len(meta_bytes)), meta_bytes,
              struct.pack("<I", len(arrays))]
    for name in sorted(arrays):
        arr = _canonical(arrays[name])
        name_b = name.encode("utf-8")
        if arr.dtype.kind == "f":
            tag = b"<f4 "
        elif arr.dtype == np.uint8:
            tag = b"<u1 "
        else:
            tag = b"<i8 "
        chunks.append(struct.pack("<I", len(name_b)))
        chunks.append(name_b)
        chunks.append(tag)
        chunks.append(struct.pack("<I", arr.ndim))
        chunks.append(struct.pack(f"<{arr.ndim}Q", *arr.shape))
        chunks.append(arr.tobytes(order="C"))
    Path(path).write_bytes(b"".join(chunks))


def load_arrays(path: str | Path) -> tuple[dict[str, np.ndarray], dict]:
    """Read back (arrays, metadata). Raises ContainerError on bad files."""
    buf = Path(path).read_bytes()
    if buf[:4] != MAGIC:
        raise ContainerError(f"{path}: bad magic, not a tweenkit container")
    off = 4
    (version,) = struct.unpack_from("<I", buf, off)
    off += 4
    if version > FORMAT_VERSION:
        raise ContainerError(f"{path}: unsupported container version {version}")
    (meta_len,) = struct.unpack_from("<I", buf, off)
    off += 4
    metadata = json.loads(buf[off:off + meta_len].decode("utf-8")) if meta_len else {}
    off += meta_len
    (count,) = struct.unpack_from("<I", buf, off)
    off += 4
    arrays: dict[str, np.ndarray] = {}
    for _ in range(count):
        (name_len,) = struct.unpack_from("<I", buf, off)
        off += 4
        name = buf[off:off + name_len].decode("utf-8")
        off += name_len
        tag = buf[off:off + 4]
        off += 4
        if tag not in _TAG_DTYPES:
            raise ContainerError(f"{path}: unknown dtype tag {tag!r}")
        dtype = _TAG_DTYPES[tag]
        (ndim,) = struct.unpack_from("<I", buf, off)
        off += 4
        shape = struct.unpack_from(f"<{ndim}Q", buf, off)
        off += 8 * ndim
        n_items = int(np.prod(shape, dtype=np.int64)) if ndim else 1
        n_bytes = n_items * dtype.itemsize
        arr = np.frombuffer(buf, dtype=dtype, count=n_items, offset=off).reshape(shape)
        off += n_bytes
        arrays[name] = arr.copy()
    return arrays, metadata
