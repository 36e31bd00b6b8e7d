"""Two-stage decode path: importance prediction over dominant chunks,
token selection, gather, and focused attention at original positions.

Each decode step appends the incoming token to the cache first, so the
current token is always in the candidate pool, then runs one of three modes:

    dense  - attend over the entire context;
    oracle - select top-n_fac by full-head scores, then focused attention;
    fasa   - score tokens from the hot (dominant-chunk) key store only,
             select top-n_fac, fetch those rows, focused attention.

Importance scores are only ever used to rank tokens; the focused pass always
recomputes full-dimension logits on the gathered rows. States for distinct
heads are independent; a single head's steps are strictly sequential.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .agreement import topk_indices
from .cache import TieredCache
from .rope import RopeConfig
from .scores import attend, chunk_pair_scores, raw_scores

MODES = ("dense", "fasa", "oracle")


@dataclass(frozen=True)
class BudgetConfig:
    """Selection budgets: dominant chunks per head and tokens per step.

    pin_first / pin_last optionally force the leading and trailing tokens
    into every selection (off by default); pins count toward the budget.
    """

    n_tip: int
    n_fac: int
    pin_first: int = 0
    pin_last: int = 0

    def __post_init__(self):
        if self.n_tip < 1:
            raise ValueError(f"n_tip must be >= 1, got {self.n_tip}")
        if self.n_fac < 1:
            raise ValueError(f"n_fac must be >= 1, got {self.n_fac}")
        if self.pin_first < 0 or self.pin_last < 0:
            raise ValueError("pin_first and pin_last must be >= 0")


@dataclass
class TokenSelection:
    """Selected token positions (strictly ascending) with their raw scores."""

    indices: np.ndarray
    scores: np.ndarray

    def __post_init__(self):
        self.indices = np.asarray(self.indices, dtype=np.int64)
        self.scores = np.asarray(self.scores, dtype=np.float64)
        if self.indices.ndim != 1 or self.scores.shape != self.indices.shape:
            raise ValueError("indices and scores must be matching vectors")
        if self.indices.size and np.any(np.diff(self.indices) <= 0):
            raise ValueError("selection indices must be strictly ascending")

    def __len__(self) -> int:
        return self.indices.size


@dataclass
class DecodeOutcome:
    """Result of one decode step: output vector, the selection that produced
    it, and the step's byte traffic (fast-tier reads + tier transfers)."""

    output: np.ndarray
    selection: TokenSelection
    read_bytes: int
    transfer_bytes: int

    @property
    def total_bytes(self) -> int:
        return self.read_bytes + self.transfer_bytes


def tip(q, q_pos: int, hot_keys, dom_chunks, cfg: RopeConfig) -> np.ndarray:
    """Importance scores from the hot key store only.

    hot_keys holds the dominant coordinate pairs of every key in calibrated
    order, shape (t, 2*len(dom_chunks)); only those stored coordinates are
    read. Numerically matches summing the same chunks over full keys.
    """
    dom = tuple(int(c) for c in dom_chunks)
    if not dom:
        raise ValueError("dominant chunk set must be nonempty")
    if len(set(dom)) != len(dom) or not all(0 <= c < cfg.num_chunks for c in dom):
        raise ValueError(f"invalid dominant chunk set {dom}")
    hot = np.asarray(hot_keys, dtype=np.float64)
    if hot.ndim != 2 or hot.shape[1] != 2 * len(dom):
        raise ValueError(
            f"hot store shape {hot.shape} does not match {len(dom)} chunks"
        )
    q = np.asarray(q, dtype=np.float64)
    if q.shape != (cfg.head_dim,):
        raise ValueError(f"expected query shape ({cfg.head_dim},), got {q.shape}")
    # accumulate in ascending chunk order regardless of calibrated order
    order = np.argsort(dom, kind="stable")
    chunks = np.asarray(dom, dtype=np.intp)[order]
    cols = np.asarray([2 * k for k in order], dtype=np.intp)
    t = hot.shape[0]
    return chunk_pair_scores(
        q[2 * chunks],
        q[2 * chunks + 1],
        hot[:, cols],
        hot[:, cols + 1],
        cfg.thetas[chunks],
        q_pos,
        np.arange(t),
    )


def select(
    scores, n_fac: int, pin_first: int = 0, pin_last: int = 0
) -> TokenSelection:
    """Top-n_fac token positions by score, ascending, with scores attached.

    Ties break toward the smaller position. The selection size is always
    min(n_fac, t). Pinned leading/trailing tokens are force-included and
    consume budget; lower positions win if the pins alone exceed it.
    """
    s = np.asarray(scores, dtype=np.float64)
    if s.ndim != 1 or s.size == 0:
        raise ValueError(f"scores must be a nonempty vector, got shape {s.shape}")
    t = s.size
    size = min(n_fac, t)
    if pin_first or pin_last:
        pinned = np.unique(
            np.concatenate(
                [np.arange(min(pin_first, t)), np.arange(max(t - pin_last, 0), t)]
            )
        )[:size]
        free = size - pinned.size
        if free > 0:
            mask = np.ones(t, dtype=bool)
            mask[pinned] = False
            candidates = np.flatnonzero(mask)
            top = candidates[topk_indices(s[candidates], free)]
            idx = np.sort(np.concatenate([pinned, top]))
        else:
            idx = pinned
    else:
        idx = topk_indices(s, size)
    return TokenSelection(indices=idx, scores=s[idx])


def gather(keys, values, sel: TokenSelection) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Extract the selected rows and carry their original positions along.

    Rows come back in ascending position order, bit-exact copies of the
    source rows; positions are never re-indexed.
    """
    keys = np.asarray(keys)
    values = np.asarray(values)
    if keys.ndim != 2 or values.shape != keys.shape:
        raise ValueError(
            f"expected matching (t, d) matrices, got {keys.shape} and {values.shape}"
        )
    idx = sel.indices
    if idx.size == 0:
        raise ValueError("selection must be nonempty")
    if idx.min() < 0 or idx.max() >= keys.shape[0]:
        raise ValueError(
            f"selection {idx.min()}..{idx.max()} out of range [0, {keys.shape[0]})"
        )
    return keys[idx], values[idx], idx.copy()


def fac(q, q_pos: int, keys, values, positions, cfg: RopeConfig) -> np.ndarray:
    """Focused attention: full-dimension scaled softmax over gathered rows.

    Recomputes exact logits for the selected rows at their original
    positions; importance scores play no part here.
    """
    return attend(q, q_pos, keys, values, positions, cfg)


class HeadState:
    """Mutable per-head decode state: the tiered cache plus its layout.

    dom_chunks is the calibrated dominant chunk order for this head, or None
    for a state that only serves dense/oracle decoding.
    """

    def __init__(
        self,
        cfg: RopeConfig,
        dom_chunks=None,
        bytes_per_elem: int = 2,
    ):
        self.cfg = cfg
        self.dom_chunks = None if dom_chunks is None else tuple(int(c) for c in dom_chunks)
        if self.dom_chunks is not None and not self.dom_chunks:
            raise ValueError("dom_chunks must be nonempty when given")
        self.cache = TieredCache(
            cfg.head_dim,
            self.dom_chunks if self.dom_chunks is not None else (),
            bytes_per_elem,
        )

    def __len__(self) -> int:
        return len(self.cache)

    def prefill(self, keys, values) -> None:
        """Load a context prefix without decoding (no byte accounting)."""
        self.cache.extend(keys, values)


def decode_step(
    state: HeadState, q_t, k_t, v_t, mode: str, budget: BudgetConfig
) -> DecodeOutcome:
    """Run one decode step for one head and return output plus accounting.

    The incoming (k_t, v_t) is appended before any selection, so position
    t-1 (the current token) is always selectable. Oracle-mode scoring is an
    idealized look-ahead and is not charged to the counters; its fetch of
    the selected rows is.
    """
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}, expected one of {MODES}")
    if mode == "fasa" and state.dom_chunks is None:
        raise ValueError("fasa mode requires a state built with dominant chunks")
    cfg = state.cfg
    cache = state.cache
    cache.append(k_t, v_t)
    t = len(cache)
    q_pos = t - 1
    read0, transfer0 = cache.counters()

    if mode == "fasa":
        if 2 * budget.n_tip != cache.dom_dims:
            raise ValueError(
                f"budget n_tip {budget.n_tip} does not match the cache's "
                f"{cache.dom_dims // 2} dominant chunks"
            )
        hot = cache.read_hot()
        token_scores = tip(q_t, q_pos, hot, state.dom_chunks, cfg)
        sel = select(token_scores, budget.n_fac, budget.pin_first, budget.pin_last)
    else:
        full = raw_scores(q_t, q_pos, cache.peek_keys(), np.arange(t), cfg)
        if mode == "oracle":
            sel = select(full, budget.n_fac, budget.pin_first, budget.pin_last)
        else:
            sel = TokenSelection(indices=np.arange(t), scores=full)

    keys_sel, values_sel = cache.fetch_selected(sel.indices)
    output = fac(q_t, q_pos, keys_sel, values_sel, sel.indices, cfg)

    read1, transfer1 = cache.counters()
    return DecodeOutcome(
        output=output,
        selection=sel,
        read_bytes=read1 - read0,
        transfer_bytes=transfer1 - transfer0,
    )
