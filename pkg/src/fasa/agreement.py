"""Contextual agreement: top-K overlap between score vectors.

The agreement of a proxy score vector with the full-head scores is the size
of the intersection of their top-K token index sets, normalized by the
window. Windows larger than the context clamp to the context length so the
value stays in [0, 1]. Ties always break toward the smaller token index,
which keeps every selection deterministic.
"""

from __future__ import annotations

import math

import numpy as np

from .rope import RopeConfig
from .scores import HeadSample, fc_scores, full_scores, subset_scores

# Default top-K comparison width; heatmaps and calibration use this unless
# overridden (smaller windows often sharpen the separation).
DEFAULT_WINDOW = 256


def topk_indices(scores, k: int) -> np.ndarray:
    """Indices of the min(k, t) largest entries, ascending.

    Ties break toward the smaller index; the result is deterministic and
    bit-stable for identical input.
    """
    s = np.asarray(scores, dtype=np.float64)
    if s.ndim != 1 or s.size == 0:
        raise ValueError(f"scores must be a nonempty vector, got shape {s.shape}")
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    kk = min(k, s.size)
    # stable sort on descending value keeps ascending index order within ties
    top = np.argsort(-s, kind="stable")[:kk]
    return np.sort(top).astype(np.int64)


def ca(full, proxy, k: int) -> float:
    """Normalized top-k overlap of two score vectors over the same context.

    Returns |topk(full) cap topk(proxy)| / min(k, t), in [0, 1]. Symmetric
    in its arguments and invariant to strictly monotone transforms of either.
    """
    full = np.asarray(full, dtype=np.float64)
    proxy = np.asarray(proxy, dtype=np.float64)
    if full.shape != proxy.shape:
        raise ValueError(f"score shapes differ: {full.shape} vs {proxy.shape}")
    kk = min(k, full.size)
    inter = np.intersect1d(topk_indices(full, k), topk_indices(proxy, k))
    return inter.size / kk


def mean_ca(samples, chunk: int, k: int, cfg: RopeConfig) -> float:
    """Mean agreement of one chunk's scores with the full head over samples.

    The window clamps to each sample's context length. Summation uses exact
    accumulation (math.fsum) so the mean is order-independent.
    """
    samples = list(samples)
    if not samples:
        raise ValueError("samples must be nonempty")
    vals = [ca(full_scores(s, cfg), fc_scores(s, chunk, cfg), k) for s in samples]
    return math.fsum(vals) / len(vals)


def compound_ca(samples, chunks, k: int, cfg: RopeConfig) -> float:
    """Mean agreement of a chunk subset's summed scores with the full head."""
    samples = list(samples)
    if not samples:
        raise ValueError("samples must be nonempty")
    vals = [ca(full_scores(s, cfg), subset_scores(s, chunks, cfg), k) for s in samples]
    return math.fsum(vals) / len(vals)
