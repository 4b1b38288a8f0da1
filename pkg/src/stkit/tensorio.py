"""STT1 tensor file format.

Layout, all little-endian:

    8 bytes   magic "STTENS01"
    u32       rank (>= 1)
    rank*u64  extents (each >= 1)
    payload   row-major float64 values
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .errors import ParseError, ShapeError

MAGIC = b"STTENS01"
_MAX_RANK = 32


def save_tensor(path: str | Path, arr: np.ndarray) -> None:
    arr = np.ascontiguousarray(arr, dtype=np.float64)
    if arr.ndim < 1:
        raise ShapeError("STT1 tensors must have rank >= 1")
    if arr.size == 0:
        raise ShapeError("STT1 tensors must have positive extents")
    header = MAGIC + struct.pack("<I", arr.ndim)
    header += struct.pack(f"<{arr.ndim}Q", *arr.shape)
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(arr.astype("<f8", copy=False).tobytes())


def load_tensor(path: str | Path) -> np.ndarray:
    blob = Path(path).read_bytes()
    if blob[:8] != MAGIC:
        raise ParseError(f"{path}: not an STT1 tensor file (bad magic)")
    if len(blob) < 12:
        raise ParseError(f"{path}: truncated header")
    (rank,) = struct.unpack_from("<I", blob, 8)
    if not 1 <= rank <= _MAX_RANK:
        raise ParseError(f"{path}: implausible rank {rank}")
    extents_end = 12 + 8 * rank
    if len(blob) < extents_end:
        raise ParseError(f"{path}: truncated extents")
    shape = struct.unpack_from(f"<{rank}Q", blob, 12)
    if any(d < 1 for d in shape):
        raise ParseError(f"{path}: zero extent in {shape}")
    count = 1
    for d in shape:
        count *= d
    expected = extents_end + 8 * count
    if len(blob) != expected:
        raise ParseError(
            f"{path}: payload length {len(blob) - extents_end} does not match "
            f"extents {shape} ({8 * count} bytes expected)"
        )
    data = np.frombuffer(blob, dtype="<f8", count=count, offset=extents_end)
    return data.astype(np.float64).reshape(shape)
