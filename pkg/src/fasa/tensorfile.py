"""Minimal binary tensor container ("FAST1").

Layout, all little-endian:

    magic    5 bytes  b"FAST1"
    dtype    1 byte   0 = 32-bit float
    rank     1 byte   1..4
    dims     rank x uint64
    payload  row-major float32 elements

Every dimension must be >= 1 and the payload length must equal the element
count times four. Writes are atomic (temp file + rename) and round-trip
bit-exactly.
"""

from __future__ import annotations

import os
import struct
import tempfile

import numpy as np

MAGIC = b"FAST1"
DTYPE_F32 = 0
MAX_RANK = 4


class TensorFormatError(ValueError):
    """A tensor file violates the format; the message names the bad field."""


def write_tensor(path, array) -> None:
    """Write an array as float32 in FAST1 format, atomically."""
    arr = np.ascontiguousarray(array, dtype=np.float32)
    if not 1 <= arr.ndim <= MAX_RANK:
        raise TensorFormatError(f"rank: must be 1..{MAX_RANK}, got {arr.ndim}")
    if any(dim < 1 for dim in arr.shape):
        raise TensorFormatError(f"dims: all must be >= 1, got {arr.shape}")
    header = MAGIC + struct.pack("<BB", DTYPE_F32, arr.ndim)
    header += struct.pack(f"<{arr.ndim}Q", *arr.shape)
    path = os.fspath(path)
    fd, tmp = tempfile.mkstemp(dir=os.path.dirname(path) or ".", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(header)
            f.write(arr.tobytes(order="C"))
        os.chmod(tmp, 0o644)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def read_tensor(path) -> np.ndarray:
    """Read a FAST1 file back into a float32 array, validating the header."""
    with open(path, "rb") as f:
        data = f.read()
    if len(data) < 7:
        raise TensorFormatError(f"magic: file too short ({len(data)} bytes)")
    if data[:5] != MAGIC:
        raise TensorFormatError(f"magic: bad magic {data[:5]!r}, expected {MAGIC!r}")
    dtype, rank = data[5], data[6]
    if dtype != DTYPE_F32:
        raise TensorFormatError(f"dtype: unsupported dtype code {dtype}")
    if not 1 <= rank <= MAX_RANK:
        raise TensorFormatError(f"rank: must be 1..{MAX_RANK}, got {rank}")
    header_len = 7 + 8 * rank
    if len(data) < header_len:
        raise TensorFormatError(f"dims: header truncated at {len(data)} bytes")
    dims = struct.unpack(f"<{rank}Q", data[7:header_len])
    if any(dim < 1 for dim in dims):
        raise TensorFormatError(f"dims: all must be >= 1, got {dims}")
    count = 1
    for dim in dims:
        count *= dim
    expected = header_len + 4 * count
    if len(data) != expected:
        raise TensorFormatError(
            f"payload: expected {expected - header_len} bytes, got {len(data) - header_len}"
        )
    flat = np.frombuffer(data[header_len:], dtype="<f4")
    return flat.reshape(dims).astype(np.float32, copy=True)


def half_split_to_paired(arr: np.ndarray) -> np.ndarray:
    """Permute a half-split last axis into paired-adjacent chunk layout.

    Half-split stores all chunk x-coordinates first, then the matching
    y-coordinates: (x0 .. x_{d/2-1}, y0 .. y_{d/2-1}). The paired layout
    interleaves them as (x0, y0, x1, y1, ...).
    """
    arr = np.asarray(arr)
    d = arr.shape[-1]
    if d % 2 != 0:
        raise ValueError(f"last axis must be even, got {d}")
    out = np.empty_like(arr)
    out[..., 0::2] = arr[..., : d // 2]
    out[..., 1::2] = arr[..., d // 2 :]
    return out
