"""Binary embedding-matrix container used by the CLI for all matrix I/O.

Layout: magic "NCEG", version u16, n u64, d u64, flags u16 (bit 0 set if
rows are unit-normalized), then n*d row-major little-endian float64
values.  Round-trips are bit-exact.
"""

import struct

import numpy as np

MAGIC = b"NCEG"
VERSION = 1
FLAG_NORMALIZED = 0x1
_HEADER = struct.Struct("<4sHQQH")


class FormatError(ValueError):
    """Malformed embedding file."""


def write_embeddings(path, matrix: np.ndarray, normalized: bool = False) -> None:
    matrix = np.asarray(matrix, dtype=np.float64)
    if matrix.ndim != 2:
        raise ValueError("matrix must be 2-d")
    n, d = matrix.shape
    flags = FLAG_NORMALIZED if normalized else 0
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, VERSION, n, d, flags))
        fh.write(np.ascontiguousarray(matrix, dtype="<f8").tobytes())


def read_embeddings(path):
    """Returns (matrix, normalized_flag)."""
    with open(path, "rb") as fh:
        head = fh.read(_HEADER.size)
        if len(head) < _HEADER.size:
            raise FormatError(f"{path}: truncated header")
        magic, version, n, d, flags = _HEADER.unpack(head)
        if magic != MAGIC:
            raise FormatError(f"{path}: bad magic {magic!r}")
        if version != VERSION:
            raise FormatError(f"{path}: unsupported version {version}")
        payload = fh.read(n * d * 8)
        if len(payload) != n * d * 8:
            raise FormatError(f"{path}: payload length mismatch")
        if fh.read(1):
            raise FormatError(f"{path}: trailing bytes")
    matrix = np.frombuffer(payload, dtype="<f8").reshape(n, d).copy()
    return matrix, bool(flags & FLAG_NORMALIZED)
