"""Primitives for the little-endian binary container used by checkpoints and
cached sample sets. Numeric payloads are raw '<f4'/'<i4'/'u1' bytes, so a
write/read cycle is bit-exact."""

from __future__ import annotations

import struct
from typing import BinaryIO

import numpy as np

_DTYPE_TAGS = {"<f4": 0, "<i4": 1, "|u1": 2}
_TAG_DTYPES = {v: k for k, v in _DTYPE_TAGS.items()}


class ContainerError(ValueError):
    """Malformed or truncated container file."""


def write_u8(f: BinaryIO, v: int) -> None:
    f.write(struct.pack("<B", v))


def write_u32(f: BinaryIO, v: int) -> None:
    f.write(struct.pack("<I", v))


def write_str(f: BinaryIO, s: str) -> None:
    raw = s.encode("utf-8")
    if len(raw) > 0xFFFF:
        raise ValueError("string too long for container")
    f.write(struct.pack("<H", len(raw)))
    f.write(raw)


def write_array(f: BinaryIO, arr: np.ndarray) -> None:
    arr = np.asarray(arr)
    if arr.dtype == np.float32:
        dt = "<f4"
    elif arr.dtype in (np.int32, np.int64):
        arr = arr.astype(np.int32)
        dt = "<i4"
    elif arr.dtype == np.uint8:
        dt = "|u1"
    else:
        raise ValueError(f"unsupported container dtype {arr.dtype}")
    write_u8(f, _DTYPE_TAGS[dt])
    write_u8(f, arr.ndim)
    for dim in arr.shape:
        write_u32(f, dim)
    f.write(arr.astype(dt).tobytes())


def _read(f: BinaryIO, n: int) -> bytes:
    raw = f.read(n)
    if len(raw) != n:
        raise ContainerError("truncated container file")
    return raw


def read_u8(f: BinaryIO) -> int:
    return struct.unpack("<B", _read(f, 1))[0]


def read_u32(f: BinaryIO) -> int:
    return struct.unpack("<I", _read(f, 4))[0]


def read_str(f: BinaryIO) -> str:
    n = struct.unpack("<H", _read(f, 2))[0]
    return _read(f, n).decode("utf-8")


def read_array(f: BinaryIO) -> np.ndarray:
    tag = read_u8(f)
    if tag not in _TAG_DTYPES:
        raise ContainerError(f"unknown dtype tag {tag}")
    dt = np.dtype(_TAG_DTYPES[tag])
    ndim = read_u8(f)
    shape = tuple(read_u32(f) for _ in range(ndim))
    count = int(np.prod(shape)) if shape else 1
    raw = _read(f, count * dt.itemsize)
    return np.frombuffer(raw, dtype=dt).reshape(shape).copy()


def expect_magic(f: BinaryIO, magic: bytes) -> None:
    got = _read(f, len(magic))
    if got != magic:
        raise ContainerError(f"bad magic {got!r}, expected {magic!r}")
