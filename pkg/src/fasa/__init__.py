"""Frequency-aware sparse attention over a pruned KV cache.

Attention heads under rotary position embedding decompose into independent
2D frequency chunks; a small calibrated subset of chunks ranks context
tokens almost as well as the full head. This package provides the chunk
arithmetic, the agreement metric and offline calibration that find those
chunks, a two-stage decode engine (cheap token ranking over dominant chunks,
then exact attention on the selected tokens), a tiered cache model with byte
accounting and closed-form cost models, a planted-signal verification
harness, and file formats plus a CLI tying them together.
"""

from .agreement import DEFAULT_WINDOW, ca, compound_ca, mean_ca, topk_indices
from .cache import (
    CacheGeometry,
    TieredCache,
    footprint_fasa_m,
    footprint_full,
    speedup_asymptote,
    speedup_model,
    traffic_fraction,
)
from .calibration import (
    CalibrationCorpus,
    DominantSet,
    HeadId,
    calibrate,
    calibrate_head,
)
from .engine import (
    BudgetConfig,
    DecodeOutcome,
    HeadState,
    TokenSelection,
    decode_step,
    fac,
    gather,
    select,
    tip,
)
from .harness import (
    ExperimentReport,
    PlantedSpec,
    compound_ca_table,
    run_cost_validation,
    run_equivalence,
    run_recovery,
    synth_planted,
)
from .rng import SplitMix64, fold_seed
from .rope import RopeConfig, apply_rope, rotate_chunk, theta
from .scores import HeadSample, attend, fc_scores, full_scores, subset_scores

__version__ = "0.1.0"

__all__ = [
    "BudgetConfig",
    "CacheGeometry",
    "CalibrationCorpus",
    "DecodeOutcome",
    "DEFAULT_WINDOW",
    "DominantSet",
    "ExperimentReport",
    "HeadId",
    "HeadSample",
    "HeadState",
    "PlantedSpec",
    "RopeConfig",
    "SplitMix64",
    "TieredCache",
    "TokenSelection",
    "apply_rope",
    "attend",
    "ca",
    "calibrate",
    "calibrate_head",
    "compound_ca",
    "compound_ca_table",
    "decode_step",
    "fac",
    "fc_scores",
    "fold_seed",
    "footprint_fasa_m",
    "footprint_full",
    "full_scores",
    "gather",
    "mean_ca",
    "run_cost_validation",
    "run_equivalence",
    "run_recovery",
    "select",
    "speedup_asymptote",
    "speedup_model",
    "subset_scores",
    "synth_planted",
    "theta",
    "tip",
    "topk_indices",
    "traffic_fraction",
    "rotate_chunk",
]
