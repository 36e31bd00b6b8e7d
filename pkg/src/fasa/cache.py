"""Tiered KV-cache model with exact byte accounting, plus closed-form
footprint, speedup, and traffic models.

The cache splits each key row into a hot tier (the dominant chunk
coordinates, in calibrated order) and a cold tier (the remaining key
coordinates plus the whole value row). Tiers are logical stores with byte
counters, not actual device placement: read_bytes counts fast-tier reads,
transfer_bytes counts bytes moved cold -> hot. Counters model half-precision
storage (bytes_per_elem, default 2) while the in-memory arrays stay float32
for numeric fidelity.

Accounting conventions:
  * append/extend never touch the counters (writes are not reads);
  * an importance scan reads the whole hot key store: t * d_dom bytes;
  * fetching n selected rows moves their cold parts across the tier
    boundary, n * (d_nondom + d) bytes, and re-reads their hot key parts
    from the fast tier, n * d_dom bytes, so a fetched row costs the full
    2d key+value bytes that a dense step would pay for it.

No transfer caching or prefetch is modeled; two identical fetches cost twice.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class CacheGeometry:
    """Shape parameters of a tiered cache deployment.

    dom_dims is the number of key coordinates in the hot tier (two per
    dominant chunk); nondom_dims is the remainder.
    """

    n_layers: int
    seq_len: int
    budget: int
    head_dim: int
    dom_dims: int
    bytes_per_elem: int = 2

    def __post_init__(self):
        if min(self.n_layers, self.seq_len, self.budget, self.head_dim) < 1:
            raise ValueError("all geometry fields must be positive")
        if self.bytes_per_elem < 1:
            raise ValueError(f"bytes_per_elem must be >= 1, got {self.bytes_per_elem}")
        if not 0 < self.dom_dims <= self.head_dim:
            raise ValueError(
                f"dom_dims {self.dom_dims} out of range (0, {self.head_dim}]"
            )
        if self.dom_dims % 2 != 0:
            raise ValueError(f"dom_dims must be even (whole chunks), got {self.dom_dims}")
        if self.budget > self.seq_len:
            raise ValueError(f"budget {self.budget} exceeds seq_len {self.seq_len}")

    @property
    def nondom_dims(self) -> int:
        return self.head_dim - self.dom_dims


def footprint_fasa_m(g: CacheGeometry) -> int:
    """Fast-tier bytes of the memory-optimized layout.

    All dominant key coordinates stay resident for the full sequence; only a
    budget's worth of non-dominant key coordinates and value rows do.
    """
    elems = (
        g.seq_len * g.dom_dims + g.budget * g.nondom_dims + g.budget * g.head_dim
    )
    return g.n_layers * elems * g.bytes_per_elem


def footprint_full(g: CacheGeometry) -> int:
    """Bytes of a conventional full-resident KV cache (keys + values)."""
    return g.n_layers * g.seq_len * 2 * g.head_dim * g.bytes_per_elem


def _check_model_args(t: int, d: int, n_tip: int, n_fac: int) -> None:
    if min(t, d, n_tip, n_fac) < 1:
        raise ValueError("t, d, n_tip, n_fac must all be positive")


def speedup_model(t: int, d: int, n_tip: int, n_fac: int) -> float:
    """Decode-step speedup over dense attention: 1 / (n_tip/d + n_fac/t).

    n_tip counts dominant chunks, d counts head dimensions. Strictly
    increasing in t, strictly decreasing in n_tip and n_fac; approaches
    d/n_tip as n_fac/t -> 0. Degenerates below 1 when the selection stops
    being sparse.
    """
    _check_model_args(t, d, n_tip, n_fac)
    if 2 * n_tip > d:
        raise ValueError(f"n_tip {n_tip} exceeds the chunk count {d // 2}")
    return 1.0 / (n_tip / d + n_fac / t)


def speedup_asymptote(d: int, n_tip: int) -> float:
    """Large-context limit of the speedup model: d / n_tip."""
    if min(d, n_tip) < 1 or 2 * n_tip > d:
        raise ValueError(f"need 1 <= n_tip <= d/2, got n_tip={n_tip}, d={d}")
    return d / n_tip


def traffic_fraction(t: int, d: int, n_tip: int, n_fac: int) -> float:
    """Fraction of dense KV traffic a sparse decode step must load.

    The importance scan reads the dominant key coordinates of every token
    (n_tip/d of dense traffic) and the focused pass loads full keys and
    values for n_fac tokens (n_fac/t of dense traffic). Clamped at 1.0:
    degenerate settings cannot "load" more than the dense baseline in this
    model, although an instrumented run can exceed it through reconstruction
    overhead.
    """
    _check_model_args(t, d, n_tip, n_fac)
    return min(1.0, n_tip / d + n_fac / t)


class _GrowBuffer:
    """Append-only (t, width) float32 buffer with amortized doubling."""

    def __init__(self, width: int):
        self.width = width
        self._buf = np.empty((16, width), dtype=np.float32)
        self._len = 0

    def __len__(self) -> int:
        return self._len

    def _reserve(self, extra: int) -> None:
        need = self._len + extra
        if need > self._buf.shape[0]:
            cap = max(need, 2 * self._buf.shape[0])
            buf = np.empty((cap, self.width), dtype=np.float32)
            buf[: self._len] = self._buf[: self._len]
            self._buf = buf

    def append(self, row: np.ndarray) -> None:
        self._reserve(1)
        self._buf[self._len] = row
        self._len += 1

    def extend(self, rows: np.ndarray) -> None:
        self._reserve(rows.shape[0])
        self._buf[self._len : self._len + rows.shape[0]] = rows
        self._len += rows.shape[0]

    def view(self) -> np.ndarray:
        return self._buf[: self._len]


class TieredCache:
    """Per-head KV store split into hot key coordinates and a cold remainder.

    Args:
        head_dim: key/value dimension d
        dom_chunks: dominant chunk indices in calibrated order; their
            coordinate pairs (2i, 2i+1) form the hot tier columns in that
            order. May be empty, which models a cache with no hot tier
            (every read is a transfer).
        bytes_per_elem: storage bytes per element for the counters
    """

    def __init__(self, head_dim: int, dom_chunks=(), bytes_per_elem: int = 2):
        if head_dim < 2 or head_dim % 2 != 0:
            raise ValueError(f"head_dim must be even and >= 2, got {head_dim}")
        if bytes_per_elem < 1:
            raise ValueError(f"bytes_per_elem must be >= 1, got {bytes_per_elem}")
        dom = tuple(int(c) for c in dom_chunks)
        if len(set(dom)) != len(dom):
            raise ValueError(f"dominant chunks contain duplicates: {dom}")
        if dom and not all(0 <= c < head_dim // 2 for c in dom):
            raise ValueError(f"dominant chunks {dom} out of range [0, {head_dim // 2})")
        self.head_dim = head_dim
        self.dom_chunks = dom
        self.bytes_per_elem = bytes_per_elem
        hot = []
        for c in dom:
            hot.extend((2 * c, 2 * c + 1))
        self.hot_cols = np.asarray(hot, dtype=np.intp)
        self.cold_cols = np.asarray(
            sorted(set(range(head_dim)) - set(hot)), dtype=np.intp
        )
        self.dom_dims = len(hot)
        self.nondom_dims = head_dim - self.dom_dims
        self._hot_keys = _GrowBuffer(self.dom_dims)
        self._cold_keys = _GrowBuffer(self.nondom_dims)
        self._cold_values = _GrowBuffer(head_dim)
        self._read_bytes = 0
        self._transfer_bytes = 0

    def __len__(self) -> int:
        return len(self._cold_values)

    @property
    def read_bytes(self) -> int:
        """Cumulative fast-tier bytes read; monotone non-decreasing."""
        return self._read_bytes

    @property
    def transfer_bytes(self) -> int:
        """Cumulative bytes moved cold -> hot; monotone non-decreasing."""
        return self._transfer_bytes

    def counters(self) -> tuple[int, int]:
        return self._read_bytes, self._transfer_bytes

    def _split(self, k: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        return k[self.hot_cols], k[self.cold_cols]

    def append(self, k, v) -> None:
        """Store one token: key split across tiers, value in the cold tier."""
        k = np.asarray(k, dtype=np.float32)
        v = np.asarray(v, dtype=np.float32)
        if k.shape != (self.head_dim,) or v.shape != (self.head_dim,):
            raise ValueError(
                f"expected ({self.head_dim},) vectors, got k {k.shape}, v {v.shape}"
            )
        hot, cold = self._split(k)
        self._hot_keys.append(hot)
        self._cold_keys.append(cold)
        self._cold_values.append(v)

    def extend(self, keys, values) -> None:
        """Bulk-store a prefix of tokens (prefill); counters untouched."""
        keys = np.asarray(keys, dtype=np.float32)
        values = np.asarray(values, dtype=np.float32)
        if (
            keys.ndim != 2
            or keys.shape[1] != self.head_dim
            or values.shape != keys.shape
        ):
            raise ValueError(
                f"expected matching (n, {self.head_dim}) matrices, "
                f"got keys {keys.shape}, values {values.shape}"
            )
        self._hot_keys.extend(keys[:, self.hot_cols])
        self._cold_keys.extend(keys[:, self.cold_cols])
        self._cold_values.extend(values)

    def read_hot(self) -> np.ndarray:
        """Hot key store, shape (t, d_dom); charges a full fast-tier scan."""
        self._read_bytes += len(self) * self.dom_dims * self.bytes_per_elem
        return self._hot_keys.view()

    def _check_selection(self, indices: np.ndarray) -> np.ndarray:
        idx = np.asarray(indices, dtype=np.int64)
        if idx.ndim != 1 or idx.size == 0:
            raise ValueError("selection must be a nonempty index vector")
        if idx.min() < 0 or idx.max() >= len(self):
            raise ValueError(
                f"selection {idx.min()}..{idx.max()} out of range [0, {len(self)})"
            )
        return idx

    def _reconstruct_keys(self, idx: np.ndarray) -> np.ndarray:
        out = np.empty((idx.size, self.head_dim), dtype=np.float32)
        out[:, self.hot_cols] = self._hot_keys.view()[idx]
        out[:, self.cold_cols] = self._cold_keys.view()[idx]
        return out

    def fetch_selected(self, indices) -> tuple[np.ndarray, np.ndarray]:
        """Reconstruct full keys and values for selected rows, with accounting.

        Charges n * (d_nondom + d) transfer bytes (cold key parts plus
        values) and n * d_dom read bytes (hot key parts re-read in place).
        Reconstruction is lossless: hot and cold coordinates are reassembled
        bit-exactly.
        """
        idx = self._check_selection(indices)
        n = idx.size
        self._transfer_bytes += n * (self.nondom_dims + self.head_dim) * self.bytes_per_elem
        self._read_bytes += n * self.dom_dims * self.bytes_per_elem
        return self._reconstruct_keys(idx), self._cold_values.view()[idx].copy()

    def fetch_all(self) -> tuple[np.ndarray, np.ndarray]:
        """Fetch every stored row (the dense access pattern)."""
        return self.fetch_selected(np.arange(len(self)))

    def peek_keys(self) -> np.ndarray:
        """Reconstructed key matrix without accounting (for oracles/tests)."""
        return self._reconstruct_keys(np.arange(len(self)))

    def peek_values(self) -> np.ndarray:
        """Value matrix without accounting (for oracles/tests)."""
        return self._cold_values.view().copy()
