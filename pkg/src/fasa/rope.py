"""Rotary position embedding as explicit 2D rotations over frequency chunks.

A head vector of even dimension d splits into d/2 adjacent coordinate pairs
("frequency chunks"): chunk i occupies coordinates (2i, 2i+1) and rotates at
angular frequency theta(i) = base^(-2i/d), so chunk 0 is the fastest.
Encoding a token at position m rotates chunk i by m * theta(i).

Inputs are stored as 32-bit floats; all trigonometry and accumulation happen
in 64-bit so tolerances are deterministic across platforms.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np


@dataclass(frozen=True)
class RopeConfig:
    """Head dimension and frequency base defining the chunk frequencies.

    Args:
        head_dim: per-head vector dimension d; must be even and >= 2
        base: frequency base; must be > 1 (default 10000)
    """

    head_dim: int
    base: float = 10000.0

    def __post_init__(self):
        if self.head_dim < 2 or self.head_dim % 2 != 0:
            raise ValueError(f"head_dim must be even and >= 2, got {self.head_dim}")
        if not self.base > 1.0:
            raise ValueError(f"base must be > 1, got {self.base}")

    @property
    def num_chunks(self) -> int:
        return self.head_dim // 2

    @cached_property
    def thetas(self) -> np.ndarray:
        """Angular frequency of every chunk, shape (d/2,), strictly decreasing."""
        i = np.arange(self.num_chunks, dtype=np.float64)
        return np.asarray(self.base ** (-2.0 * i / self.head_dim), dtype=np.float64)


def theta(chunk: int, cfg: RopeConfig) -> float:
    """Angular frequency of one chunk: base^(-2*chunk/d); theta(0) == 1."""
    if not 0 <= chunk < cfg.num_chunks:
        raise ValueError(f"chunk index {chunk} out of range [0, {cfg.num_chunks})")
    return float(cfg.thetas[chunk])


def rotate_chunk(chunk, angle: float) -> np.ndarray:
    """Rotate a 2-vector by `angle` radians (counter-clockwise).

    Returns (x*cos - y*sin, x*sin + y*cos) in float64; preserves the
    Euclidean norm.
    """
    v = np.asarray(chunk, dtype=np.float64)
    if v.shape != (2,):
        raise ValueError(f"expected a 2-vector, got shape {v.shape}")
    c, s = np.cos(angle), np.sin(angle)
    return np.array([v[0] * c - v[1] * s, v[0] * s + v[1] * c])


def check_position(pos: int) -> int:
    """Validate a token position (non-negative integer)."""
    m = int(pos)
    if m != pos or m < 0:
        raise ValueError(f"position must be a non-negative integer, got {pos!r}")
    return m


def apply_rope(v, pos: int, cfg: RopeConfig) -> np.ndarray:
    """Rotate every chunk of a d-vector for a token at position `pos`.

    Chunk i (coordinates 2i, 2i+1) is rotated by pos * theta(i). Returns a
    float64 vector with the same Euclidean norm; position 0 is the identity.
    """
    m = check_position(pos)
    v = np.asarray(v, dtype=np.float64)
    if v.shape != (cfg.head_dim,):
        raise ValueError(f"expected shape ({cfg.head_dim},), got {v.shape}")
    ang = m * cfg.thetas
    c, s = np.cos(ang), np.sin(ang)
    x, y = v[0::2], v[1::2]
    out = np.empty_like(v)
    out[0::2] = x * c - y * s
    out[1::2] = x * s + y * c
    return out


def rotate_rows(mat, positions, cfg: RopeConfig) -> np.ndarray:
    """Apply rope to each row of a (t, d) matrix at its own position.

    Row j is rotated as a token at positions[j]. Returns float64.
    """
    mat = np.asarray(mat, dtype=np.float64)
    positions = np.asarray(positions, dtype=np.float64)
    if mat.ndim != 2 or mat.shape[1] != cfg.head_dim:
        raise ValueError(f"expected shape (t, {cfg.head_dim}), got {mat.shape}")
    if positions.shape != (mat.shape[0],):
        raise ValueError(
            f"positions shape {positions.shape} does not match {mat.shape[0]} rows"
        )
    ang = positions[:, None] * cfg.thetas[None, :]  # (t, d/2)
    c, s = np.cos(ang), np.sin(ang)
    x, y = mat[:, 0::2], mat[:, 1::2]
    out = np.empty_like(mat)
    out[:, 0::2] = x * c - y * s
    out[:, 1::2] = x * s + y * c
    return out
