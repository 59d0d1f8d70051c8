"""Binary tensor serialization (magic "IIRT", float32 little-endian)."""
from __future__ import annotations

import struct
from typing import BinaryIO

import numpy as np

MAGIC = b"IIRT"
VERSION = 1


class TensorFormatError(ValueError):
    pass


def write_tensor_stream(f: BinaryIO, tensor: np.ndarray) -> None:
    if np.ndim(tensor) == 0:
        raise TensorFormatError("zero-dimensional tensors are not supported")
    arr = np.ascontiguousarray(tensor, dtype="<f4")
    f.write(MAGIC)
    f.write(struct.pack("<II", VERSION, arr.ndim))
    f.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
    f.write(arr.tobytes())


def read_tensor_stream(f: BinaryIO) -> np.ndarray:
    magic = f.read(4)
    if magic != MAGIC:
        raise TensorFormatError(f"bad magic {magic!r}, expected {MAGIC!r}")
    version, ndim = struct.unpack("<II", _read_exact(f, 8))
    if version != VERSION:
        raise TensorFormatError(f"unsupported tensor format version {version}")
    if ndim == 0:
        raise TensorFormatError("zero-dimensional tensors are not supported")
    dims = struct.unpack(f"<{ndim}I", _read_exact(f, 4 * ndim))
    count = int(np.prod(dims))
    payload = _read_exact(f, 4 * count)
    return np.frombuffer(payload, dtype="<f4").reshape(dims).copy()


def write_tensor(path, tensor: np.ndarray) -> None:
    with open(path, "wb") as f:
        write_tensor_stream(f, tensor)


def read_tensor(path) -> np.ndarray:
    with open(path, "rb") as f:
        return read_tensor_stream(f)


def _read_exact(f: BinaryIO, n: int) -> bytes:
    data = f.read(n)
    if len(data) != n:
        raise TensorFormatError(f"truncated payload: wanted {n} bytes, got {len(data)}")
    return data
