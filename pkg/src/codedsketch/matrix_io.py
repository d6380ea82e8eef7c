"""Matrix files: a small binary container and plain CSV.

Binary layout (little-endian): 8 magic bytes ``CSKMAT01``, rows and cols as
unsigned 64-bit integers, then ``rows * cols`` float64 values in row-major
order.
"""

from __future__ import annotations

import csv
import struct
from pathlib import Path

import numpy as np

from .errors import ParameterError

MAGIC = b"CSKMAT01"
_HEADER = struct.Struct("<8sQQ")


def write_matrix(path, M) -> None:
    M = np.asarray(M, dtype="<f8")
    if M.ndim != 2:
        raise ParameterError(f"expected a matrix, got shape {M.shape}")
    path = Path(path)
    if path.suffix.lower() == ".csv":
        with open(path, "w", newline="") as fh:
            csv.writer(fh).writerows([repr(float(v)) for v in row] for row in M)
        return
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, *M.shape))
        fh.write(np.ascontiguousarray(M).tobytes())


def read_matrix(path) -> np.ndarray:
    path = Path(path)
    if path.suffix.lower() == ".csv":
        M = np.loadtxt(path, delimiter=",", ndmin=2)
        return M.astype(float)
    raw = path.read_bytes()
    if len(raw) < _HEADER.size:
        raise ParameterError(f"{path}: truncated header")
    magic, rows, cols = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise ParameterError(f"{path}: bad magic {magic!r}")
    body = raw[_HEADER.size:]
    if len(body) != 8 * rows * cols:
        raise ParameterError(f"{path}: expected {rows}x{cols} float64 values, got {len(body)} bytes")
    return np.frombuffer(body, dtype="<f8").reshape(rows, cols).astype(float)
