"""Offline identification of dominant frequency chunks per attention head.

Calibration scores every chunk of a head by its mean contextual agreement
over a sample corpus and keeps the best n_tip chunks. Heads are independent:
the result for one head never depends on another head's samples. The whole
procedure is a pure function of the corpus bytes and parameters (no RNG), so
repeated runs produce identical artifacts.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

from .agreement import mean_ca
from .rope import RopeConfig
from .scores import HeadSample


class HeadId(NamedTuple):
    layer: int
    head: int

    def label(self) -> str:
        return f"{self.layer}.{self.head}"

    @classmethod
    def parse(cls, label: str) -> "HeadId":
        try:
            layer, head = label.split(".")
            out = cls(int(layer), int(head))
        except ValueError:
            raise ValueError(f"bad head label {label!r}, expected '<layer>.<head>'")
        if out.layer < 0 or out.head < 0:
            raise ValueError(f"head label {label!r} has negative components")
        return out


@dataclass
class CalibrationCorpus:
    """Samples grouped by head, all conforming to one rope configuration."""

    cfg: RopeConfig
    samples: dict[HeadId, list[HeadSample]]
    provenance: str = ""

    def __post_init__(self):
        if not self.samples:
            raise ValueError("corpus must contain at least one head")
        for head, samples in self.samples.items():
            if not samples:
                raise ValueError(f"head {head.label()} has no samples")
            for s in samples:
                s.check_config(self.cfg)

    @property
    def heads(self) -> list[HeadId]:
        return sorted(self.samples)


@dataclass
class DominantSet:
    """Calibrated dominant chunks per head, with their mean agreement scores.

    entries maps each head to exactly n_tip (chunk, mean_ca) pairs sorted by
    score descending, ties by ascending chunk index.
    """

    cfg: RopeConfig
    n_tip: int
    window: int
    entries: dict[HeadId, tuple[tuple[int, float], ...]] = field(default_factory=dict)
    provenance: str = ""

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if not 1 <= self.n_tip <= self.cfg.num_chunks:
            raise ValueError(
                f"n_tip {self.n_tip} out of range [1, {self.cfg.num_chunks}]"
            )
        if self.window < 1:
            raise ValueError(f"window must be >= 1, got {self.window}")
        for head, pairs in self.entries.items():
            if len(pairs) != self.n_tip:
                raise ValueError(
                    f"head {head.label()} has {len(pairs)} entries, expected {self.n_tip}"
                )
            chunks = [c for c, _ in pairs]
            if len(set(chunks)) != len(chunks):
                raise ValueError(f"head {head.label()} has duplicate chunk indices")
            for c, v in pairs:
                if not 0 <= c < self.cfg.num_chunks:
                    raise ValueError(
                        f"head {head.label()} chunk {c} out of range [0, {self.cfg.num_chunks})"
                    )
                if not 0.0 <= v <= 1.0:
                    raise ValueError(f"head {head.label()} mean CA {v} outside [0, 1]")
            keys = [(-v, c) for c, v in pairs]
            if keys != sorted(keys):
                raise ValueError(
                    f"head {head.label()} entries not sorted by score desc, chunk asc"
                )

    def chunks(self, head: HeadId) -> tuple[int, ...]:
        """Dominant chunk indices of a head in calibrated order."""
        return tuple(c for c, _ in self.entries[head])


def calibrate_head(
    samples: list[HeadSample], n_tip: int, window: int, cfg: RopeConfig
) -> list[tuple[int, float]]:
    """Rank all chunks of one head by mean agreement and keep the top n_tip.

    Returns (chunk, mean_ca) pairs sorted by score descending, ties broken
    toward the smaller chunk index. This is an independent per-chunk ranking,
    not a search over chunk subsets.
    """
    if not samples:
        raise ValueError("samples must be nonempty")
    if not 1 <= n_tip <= cfg.num_chunks:
        raise ValueError(f"n_tip {n_tip} out of range [1, {cfg.num_chunks}]")
    means = [mean_ca(samples, i, window, cfg) for i in range(cfg.num_chunks)]
    order = sorted(range(cfg.num_chunks), key=lambda i: (-means[i], i))
    return [(i, means[i]) for i in order[:n_tip]]


def calibrate(corpus: CalibrationCorpus, n_tip: int, window: int) -> DominantSet:
    """Calibrate every head of a corpus independently.

    Deterministic given the corpus content; per-head failures are re-raised
    with the head identity attached.
    """
    entries: dict[HeadId, tuple[tuple[int, float], ...]] = {}
    for head in corpus.heads:
        try:
            pairs = calibrate_head(corpus.samples[head], n_tip, window, corpus.cfg)
        except ValueError as e:
            raise ValueError(f"head {head.label()}: {e}") from e
        entries[head] = tuple(pairs)
    return DominantSet(
        cfg=corpus.cfg,
        n_tip=n_tip,
        window=window,
        entries=entries,
        provenance=corpus.provenance,
    )
