"""EMBX: a minimal little-endian container for one dense matrix.

Layout (17-byte header, then payload)::

    offset  size  field
    0       4     magic b"EMBX"
    4       4     version, uint32 = 1
    8       4     rows, uint32
    12      4     cols, uint32
    16      1     dtype, 0 = float32, 1 = float64
    17      ...   rows * cols scalars, row-major

The payload length must match exactly; trailing bytes are rejected.
"""

from __future__ import annotations

import os
import struct
from dataclasses import dataclass

import numpy as np

from .errors import BadDtype, BadMagic, BadVersion, NonFiniteError, TruncatedPayload
from .numerics import as_matrix

MAGIC = b"EMBX"
VERSION = 1
F32, F64 = 0, 1
_HEADER = struct.Struct("<4sIIIB")
_DTYPES = {F32: np.dtype("<f4"), F64: np.dtype("<f8")}


@dataclass(frozen=True)
class EmbxFile:
    matrix: np.ndarray  # float64
    dtype: int


def encode_embx(m, dtype: int = F64) -> bytes:
    if dtype not in _DTYPES:
        raise BadDtype(f"dtype must be 0 (f32) or 1 (f64), got {dtype!r}")
    m = as_matrix(m)
    rows, cols = m.shape
    payload = np.ascontiguousarray(m, dtype=_DTYPES[dtype]).tobytes()
    return _HEADER.pack(MAGIC, VERSION, rows, cols, dtype) + payload


write_embx = encode_embx


def decode_embx(data: bytes) -> EmbxFile:
    data = bytes(data)
    if len(data) < 4 or data[:4] != MAGIC:
        raise BadMagic(f"bad magic {data[:4]!r}")
    if len(data) < _HEADER.size:
        raise TruncatedPayload(f"header needs {_HEADER.size} bytes, got {len(data)}")
    _, version, rows, cols, dtype = _HEADER.unpack_from(data)
    if version != VERSION:
        raise BadVersion(f"unsupported version {version}")
    if dtype not in _DTYPES:
        raise BadDtype(f"unknown dtype code {dtype}")
    expected = rows * cols * _DTYPES[dtype].itemsize
    got = len(data) - _HEADER.size
    if got != expected:
        raise TruncatedPayload(f"payload is {got} bytes, header implies {expected}")
    arr = np.frombuffer(data, dtype=_DTYPES[dtype], offset=_HEADER.size).reshape(rows, cols)
    arr = arr.astype(np.float64)
    if not np.all(np.isfinite(arr)):
        raise NonFiniteError("EMBX payload contains NaN or Inf")
    return EmbxFile(arr, dtype)


def read_embx(data: bytes) -> np.ndarray:
    return decode_embx(data).matrix


def load_embx(path: str | os.PathLike) -> EmbxFile:
    with open(path, "rb") as f:
        return decode_embx(f.read())


def save_embx(path: str | os.PathLike, m, dtype: int = F64) -> None:
    with open(path, "wb") as f:
        f.write(encode_embx(m, dtype))
