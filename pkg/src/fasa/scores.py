"""Attention score vectors: full-head, single-chunk, chunk-subset, and the
reference softmax attention kernel.

Raw score vectors are unscaled rotated dot products (no 1/sqrt(d) factor);
scaling is monotone and cannot change any top-k set, so it is applied only
inside `attend`, which produces actual attention outputs.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .rope import RopeConfig, apply_rope, check_position, rotate_rows


@dataclass
class HeadSample:
    """One observation for a single attention head.

    Args:
        q: pre-rotation query vector, shape (d,)
        q_pos: absolute position of the query token
        keys: pre-rotation key matrix, shape (t, d), row j at position j
        values: optional value matrix, shape (t, d)

    Arrays are stored as float32; score computations upcast to float64.
    Causality requires q_pos >= t - 1.
    """

    q: np.ndarray
    q_pos: int
    keys: np.ndarray
    values: np.ndarray | None = field(default=None)

    def __post_init__(self):
        self.q = np.asarray(self.q, dtype=np.float32)
        self.keys = np.asarray(self.keys, dtype=np.float32)
        if self.q.ndim != 1:
            raise ValueError(f"q must be 1-D, got shape {self.q.shape}")
        if self.keys.ndim != 2 or self.keys.shape[1] != self.q.shape[0]:
            raise ValueError(
                f"keys shape {self.keys.shape} does not match q dimension {self.q.shape[0]}"
            )
        if self.keys.shape[0] < 1:
            raise ValueError("keys must contain at least one row")
        self.q_pos = check_position(self.q_pos)
        if self.q_pos < self.keys.shape[0] - 1:
            raise ValueError(
                f"q_pos {self.q_pos} violates causality for {self.keys.shape[0]} keys"
            )
        if self.values is not None:
            self.values = np.asarray(self.values, dtype=np.float32)
            if self.values.shape != self.keys.shape:
                raise ValueError(
                    f"values shape {self.values.shape} != keys shape {self.keys.shape}"
                )

    @property
    def context_len(self) -> int:
        return self.keys.shape[0]

    def check_config(self, cfg: RopeConfig) -> None:
        if self.q.shape[0] != cfg.head_dim:
            raise ValueError(
                f"sample dimension {self.q.shape[0]} != config head_dim {cfg.head_dim}"
            )


def raw_scores(q, q_pos: int, keys, positions, cfg: RopeConfig) -> np.ndarray:
    """Unscaled logits of a rotated query against rotated keys.

    Entry j is <rope(q, q_pos), rope(keys[j], positions[j])>, computed in
    float64. This is the dense scoring primitive shared by full-head scores
    and the attention kernel.
    """
    q_rot = apply_rope(q, q_pos, cfg)
    k_rot = rotate_rows(keys, positions, cfg)
    return k_rot @ q_rot


def full_scores(sample: HeadSample, cfg: RopeConfig) -> np.ndarray:
    """Full-head raw logits over the sample context, shape (t,)."""
    sample.check_config(cfg)
    t = sample.context_len
    return raw_scores(sample.q, sample.q_pos, sample.keys, np.arange(t), cfg)


def chunk_pair_scores(
    qx, qy, kx, ky, thetas_sel, q_pos: int, positions
) -> np.ndarray:
    """Sum of per-chunk rotated dot products over a set of chunk columns.

    Args:
        qx, qy: query chunk coordinates, shape (m,)
        kx, ky: key chunk coordinate columns, shape (t, m)
        thetas_sel: angular frequency per selected chunk, shape (m,)
        q_pos: query position
        positions: key positions, shape (t,)

    Only the selected coordinate columns are touched; nothing full-width is
    materialized.
    """
    ang_q = q_pos * thetas_sel
    cq, sq = np.cos(ang_q), np.sin(ang_q)
    qxr = qx * cq - qy * sq
    qyr = qx * sq + qy * cq
    ang_k = np.asarray(positions, dtype=np.float64)[:, None] * thetas_sel[None, :]
    ck, sk = np.cos(ang_k), np.sin(ang_k)
    kxr = kx * ck - ky * sk
    kyr = kx * sk + ky * ck
    return kxr @ qxr + kyr @ qyr


def fc_scores(sample: HeadSample, chunk: int, cfg: RopeConfig) -> np.ndarray:
    """Raw logits from a single frequency chunk, shape (t,).

    Entry j is the rotated dot product of query chunk `chunk` against key
    chunk `chunk` of row j, both rotated at that chunk's frequency.
    """
    sample.check_config(cfg)
    if not 0 <= chunk < cfg.num_chunks:
        raise ValueError(f"chunk index {chunk} out of range [0, {cfg.num_chunks})")
    th = cfg.thetas[chunk]
    q = np.asarray(sample.q, dtype=np.float64)
    keys = np.asarray(sample.keys, dtype=np.float64)
    t = sample.context_len
    ang_q = sample.q_pos * th
    qx = q[2 * chunk] * np.cos(ang_q) - q[2 * chunk + 1] * np.sin(ang_q)
    qy = q[2 * chunk] * np.sin(ang_q) + q[2 * chunk + 1] * np.cos(ang_q)
    ang_k = np.arange(t, dtype=np.float64) * th
    ck, sk = np.cos(ang_k), np.sin(ang_k)
    kx = keys[:, 2 * chunk] * ck - keys[:, 2 * chunk + 1] * sk
    ky = keys[:, 2 * chunk] * sk + keys[:, 2 * chunk + 1] * ck
    return kx * qx + ky * qy


def subset_scores(sample: HeadSample, chunks, cfg: RopeConfig) -> np.ndarray:
    """Raw logits summed over a set of chunks, in one pass over their columns.

    Equals the elementwise sum of fc_scores over `chunks`; with all chunks
    selected it recovers the full-head scores.
    """
    sample.check_config(cfg)
    idx = sorted(set(int(i) for i in chunks))
    if not idx:
        raise ValueError("chunk subset must be nonempty")
    if idx[0] < 0 or idx[-1] >= cfg.num_chunks:
        raise ValueError(f"chunk indices {idx} out of range [0, {cfg.num_chunks})")
    idx = np.asarray(idx, dtype=np.intp)
    q = np.asarray(sample.q, dtype=np.float64)
    keys = np.asarray(sample.keys, dtype=np.float64)
    t = sample.context_len
    return chunk_pair_scores(
        q[2 * idx],
        q[2 * idx + 1],
        keys[:, 2 * idx],
        keys[:, 2 * idx + 1],
        cfg.thetas[idx],
        sample.q_pos,
        np.arange(t),
    )


def softmax(logits: np.ndarray) -> np.ndarray:
    """Numerically stable softmax: subtracts the max before exponentiating."""
    z = np.asarray(logits, dtype=np.float64)
    z = z - z.max()
    e = np.exp(z)
    return e / e.sum()


def attend(q, q_pos: int, keys, values, positions, cfg: RopeConfig) -> np.ndarray:
    """Softmax attention of one query over selected rows at original positions.

    Args:
        q: pre-rotation query, shape (d,)
        q_pos: query position
        keys: pre-rotation keys of the selected rows, shape (n, d)
        values: values of the selected rows, shape (n, d)
        positions: strictly increasing absolute positions, all <= q_pos

    Logits are rotated dot products scaled by 1/sqrt(d); rotation uses each
    token's original absolute position (no re-indexing). Returns the
    weighted value sum, shape (d,), float64.
    """
    keys = np.asarray(keys, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    positions = np.asarray(positions)
    if keys.ndim != 2 or keys.shape[0] < 1:
        raise ValueError(f"selection must be a nonempty (n, d) matrix, got {keys.shape}")
    if values.shape != keys.shape:
        raise ValueError(f"values shape {values.shape} != keys shape {keys.shape}")
    if positions.shape != (keys.shape[0],):
        raise ValueError("positions must match the number of selected rows")
    if np.any(np.diff(positions) <= 0):
        raise ValueError("positions must be strictly increasing")
    q_pos = check_position(q_pos)
    if positions[-1] > q_pos:
        raise ValueError(f"position {positions[-1]} exceeds query position {q_pos}")
    logits = raw_scores(q, q_pos, keys, positions, cfg) / np.sqrt(cfg.head_dim)
    weights = softmax(logits)
    return weights @ values
