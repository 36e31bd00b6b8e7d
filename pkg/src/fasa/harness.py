"""Synthetic workloads with planted dominant chunks, and the end-to-end
experiment runners built on them.

The generator plants a known signal: a chosen set of chunks carries, at a
chosen set of "important" token positions, a key chunk constructed by
counter-rotating the query chunk so the rotated per-chunk score at those
positions is exactly the signal amplitude. Everything else is i.i.d.
Gaussian noise. With a healthy amplitude/noise ratio the full head and every
planted chunk rank the important tokens on top, so calibration has an exact
ground truth to recover.

All randomness comes from seeded splitmix64 streams; identical specs produce
byte-identical corpora and reports.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .agreement import compound_ca, mean_ca
from .cache import CacheGeometry, traffic_fraction
from .calibration import CalibrationCorpus, HeadId, calibrate_head
from .engine import BudgetConfig, HeadState, decode_step
from .rng import SplitMix64, fold_seed
from .rope import RopeConfig, rotate_chunk, theta
from .scores import HeadSample


@dataclass(frozen=True)
class PlantedSpec:
    """Recipe for one head's planted corpus.

    Args:
        head_dim: head dimension d
        context_len: tokens per sample context
        planted: chunk indices carrying the signal
        important: token positions where the signal is planted
        amplitude: exact per-chunk score at (planted chunk, important token)
        sigma: std of the Gaussian noise filling everything else
        seed: stream seed; the corpus is a pure function of the spec
        n_samples: samples generated for the head
        base: rope frequency base
    """

    head_dim: int
    context_len: int
    planted: tuple[int, ...]
    important: tuple[int, ...]
    amplitude: float
    sigma: float
    seed: int
    n_samples: int = 2
    base: float = 10000.0

    def __post_init__(self):
        object.__setattr__(self, "planted", tuple(int(c) for c in self.planted))
        object.__setattr__(self, "important", tuple(int(m) for m in self.important))
        cfg = self.rope_config()  # validates head_dim/base
        if not self.planted:
            raise ValueError("planted chunk set must be nonempty")
        if len(set(self.planted)) != len(self.planted):
            raise ValueError(f"planted chunks contain duplicates: {self.planted}")
        if not all(0 <= c < cfg.num_chunks for c in self.planted):
            raise ValueError(f"planted chunks {self.planted} out of range")
        if self.context_len < 1:
            raise ValueError(f"context_len must be >= 1, got {self.context_len}")
        if not self.important:
            raise ValueError("important token set must be nonempty")
        if len(set(self.important)) != len(self.important):
            raise ValueError(f"important tokens contain duplicates: {self.important}")
        if len(self.important) > self.context_len:
            raise ValueError(
                f"{len(self.important)} important tokens exceed context {self.context_len}"
            )
        if not all(0 <= m < self.context_len for m in self.important):
            raise ValueError(f"important tokens {self.important} out of range")
        if not self.amplitude > 0:
            raise ValueError(f"amplitude must be > 0, got {self.amplitude}")
        if not self.sigma > 0:
            raise ValueError(f"sigma must be > 0, got {self.sigma}")
        if self.n_samples < 1:
            raise ValueError(f"n_samples must be >= 1, got {self.n_samples}")

    def rope_config(self) -> RopeConfig:
        return RopeConfig(head_dim=self.head_dim, base=self.base)


def _planted_sample(spec: PlantedSpec, head: HeadId, index: int) -> HeadSample:
    """Generate one sample; draw order is fixed (query, keys, values)."""
    cfg = spec.rope_config()
    d, t = spec.head_dim, spec.context_len
    rng = SplitMix64(fold_seed(spec.seed, head.layer, head.head, index))
    q_pos = t - 1

    # unit-norm random direction per query chunk
    psi = rng.uniforms(cfg.num_chunks) * (2.0 * np.pi)
    q = np.empty(d, dtype=np.float64)
    q[0::2] = np.cos(psi)
    q[1::2] = np.sin(psi)

    keys = rng.gaussians(t * d, sigma=spec.sigma).reshape(t, d)
    for c in sorted(spec.planted):
        th = theta(c, cfg)
        q_chunk = q[2 * c : 2 * c + 2]
        for m in sorted(spec.important):
            # counter-rotation: the rotated per-chunk score at (c, m) is
            # exactly the amplitude
            keys[m, 2 * c : 2 * c + 2] = spec.amplitude * rotate_chunk(
                q_chunk, (q_pos - m) * th
            )

    values = rng.gaussians(t * d).reshape(t, d)
    return HeadSample(q=q, q_pos=q_pos, keys=keys, values=values)


def synth_planted(
    specs: dict[HeadId, PlantedSpec] | PlantedSpec,
) -> tuple[CalibrationCorpus, dict[HeadId, PlantedSpec]]:
    """Build a planted corpus; a bare spec means a single head (0, 0).

    Returns the corpus together with the ground truth (the specs themselves).
    Deterministic: each (head, sample) draws from its own derived stream, so
    neither head order nor parallel generation can change the bytes.
    """
    if isinstance(specs, PlantedSpec):
        specs = {HeadId(0, 0): specs}
    if not specs:
        raise ValueError("at least one head spec is required")
    cfgs = {(s.head_dim, s.base) for s in specs.values()}
    if len(cfgs) != 1:
        raise ValueError(f"head specs disagree on head_dim/base: {sorted(cfgs)}")
    cfg = next(iter(specs.values())).rope_config()
    samples = {
        head: [_planted_sample(spec, head, i) for i in range(spec.n_samples)]
        for head, spec in sorted(specs.items())
    }
    corpus = CalibrationCorpus(cfg=cfg, samples=samples, provenance="synthetic planted")
    return corpus, dict(specs)


def random_chunk_subset(
    rng: SplitMix64, num_chunks: int, size: int, exclude=()
) -> tuple[int, ...]:
    """Uniform random chunk subset of a given size, avoiding `exclude`."""
    pool = [c for c in range(num_chunks) if c not in set(exclude)]
    if size > len(pool):
        raise ValueError(f"cannot draw {size} chunks from a pool of {len(pool)}")
    picks = rng.sample_indices(len(pool), size)
    return tuple(pool[i] for i in picks)


@dataclass
class ExperimentReport:
    """Named grid of result rows with the parameters that produced them."""

    name: str
    params: dict
    rows: list[dict] = field(default_factory=list)

    def __post_init__(self):
        for row in self.rows:
            for key, val in row.items():
                if isinstance(val, float) and not math.isfinite(val):
                    raise ValueError(f"non-finite metric {key}={val} in {self.name}")

    def to_json_dict(self) -> dict:
        return {"name": self.name, "params": self.params, "rows": self.rows}

    def format_table(self) -> str:
        if not self.rows:
            return f"{self.name}: no rows"
        cols = list(self.rows[0])
        cells = [[_fmt_cell(row.get(c, "")) for c in cols] for row in self.rows]
        widths = [
            max(len(c), *(len(r[i]) for r in cells)) for i, c in enumerate(cols)
        ]
        lines = [
            "  ".join(c.ljust(w) for c, w in zip(cols, widths)),
            "  ".join("-" * w for w in widths),
        ]
        lines += ["  ".join(v.rjust(w) for v, w in zip(r, widths)) for r in cells]
        return "\n".join(lines)


def _fmt_cell(v) -> str:
    if isinstance(v, float):
        return f"{v:.6g}"
    if isinstance(v, (list, tuple)):
        return ",".join(str(x) for x in v)
    return str(v)


def run_recovery(
    corpus: CalibrationCorpus,
    truth: dict[HeadId, PlantedSpec],
    n_tip: int,
    window: int,
) -> ExperimentReport:
    """Calibrate each head and score recovery against the planted truth.

    Reports, per head, the fraction of planted chunks recovered plus the
    mean agreement of planted versus non-planted chunks.
    """
    if set(truth) != set(corpus.samples):
        raise ValueError(
            f"truth heads {sorted(truth)} do not match corpus heads {corpus.heads}"
        )
    rows = []
    for head in corpus.heads:
        spec = truth[head]
        samples = corpus.samples[head]
        pairs = calibrate_head(samples, n_tip, window, corpus.cfg)
        recovered = {c for c, _ in pairs}
        planted = set(spec.planted)
        others = [c for c in range(corpus.cfg.num_chunks) if c not in planted]
        ca_planted = [mean_ca(samples, c, window, corpus.cfg) for c in sorted(planted)]
        ca_other = [mean_ca(samples, c, window, corpus.cfg) for c in others]
        rows.append(
            {
                "layer": head.layer,
                "head": head.head,
                "overlap": len(recovered & planted) / len(planted),
                "mean_ca_planted": math.fsum(ca_planted) / len(ca_planted),
                "mean_ca_nonplanted": (
                    math.fsum(ca_other) / len(ca_other) if ca_other else 0.0
                ),
                "recovered": sorted(recovered),
            }
        )
    return ExperimentReport(
        name="recovery",
        params={"n_tip": n_tip, "window": window, "heads": len(rows)},
        rows=rows,
    )


def _replay_states(corpus, sample, dom_chunks):
    """Fresh decode states for one sample, prefilled with all but the last token."""
    if sample.values is None:
        raise ValueError("sample has no values; decoding needs them")
    state = HeadState(corpus.cfg, dom_chunks)
    if sample.context_len > 1:
        state.prefill(sample.keys[:-1], sample.values[:-1])
    return state


def _replay_step(corpus, sample, dom_chunks, mode, budget):
    """Decode the final token of a sample in the given mode."""
    if sample.q_pos != sample.context_len - 1:
        raise ValueError(
            f"replay needs q_pos == t-1, got q_pos={sample.q_pos}, t={sample.context_len}"
        )
    state = _replay_states(corpus, sample, dom_chunks)
    return decode_step(
        state, sample.q, sample.keys[-1], sample.values[-1], mode, budget
    )


def run_equivalence(
    corpus: CalibrationCorpus, budgets: list[BudgetConfig], window: int
) -> ExperimentReport:
    """Compare sparse decoding against dense and oracle selection per budget.

    For every budget: the max absolute output error versus dense, the mean
    selection overlap with oracle-mode top-k, and, when the budget covers
    the whole context, whether the outputs agree to 1e-5.
    """
    doms = {}  # n_tip -> per-head calibrated chunks
    rows = []
    for budget in budgets:
        if budget.n_tip not in doms:
            doms[budget.n_tip] = {
                head: tuple(
                    c
                    for c, _ in calibrate_head(
                        corpus.samples[head], budget.n_tip, window, corpus.cfg
                    )
                )
                for head in corpus.heads
            }
        dom_by_head = doms[budget.n_tip]
        max_err = 0.0
        agreements = []
        full_budget = True
        full_budget_ok = True
        for head in corpus.heads:
            for sample in corpus.samples[head]:
                dense = _replay_step(corpus, sample, None, "dense", budget)
                fasa = _replay_step(corpus, sample, dom_by_head[head], "fasa", budget)
                oracle = _replay_step(corpus, sample, None, "oracle", budget)
                err = float(np.max(np.abs(fasa.output - dense.output)))
                max_err = max(max_err, err)
                overlap = np.intersect1d(
                    fasa.selection.indices, oracle.selection.indices
                ).size / len(fasa.selection)
                agreements.append(overlap)
                if budget.n_fac < sample.context_len:
                    full_budget = False
                elif err > 1e-5:
                    full_budget_ok = False
        rows.append(
            {
                "n_tip": budget.n_tip,
                "n_fac": budget.n_fac,
                "max_abs_err_vs_dense": max_err,
                "selection_agreement_oracle": math.fsum(agreements) / len(agreements),
                "full_budget": full_budget,
                "full_budget_ok": full_budget_ok,
            }
        )
    return ExperimentReport(
        name="equivalence",
        params={"window": window, "budgets": [(b.n_tip, b.n_fac) for b in budgets]},
        rows=rows,
    )


def compound_ca_table(
    corpus: CalibrationCorpus,
    dom_sizes: list[int],
    windows: list[int],
    budgets: list[int],
    n_random: int = 1,
    baseline_seed: int = 0,
) -> ExperimentReport:
    """Compound agreement grid: calibrated chunk sets versus random ones.

    Rows are (calibration window, set size F); columns are evaluation
    budgets K. Each cell holds the head-averaged compound agreement of the
    calibrated top-F set and of `n_random` uniform random F-sets. Every
    requested cell is present.
    """
    if not dom_sizes or not windows or not budgets:
        raise ValueError("dom_sizes, windows, and budgets must all be nonempty")
    max_f = max(dom_sizes)
    rows = []
    for window in windows:
        ranked = {
            head: [
                c
                for c, _ in calibrate_head(
                    corpus.samples[head], max_f, window, corpus.cfg
                )
            ]
            for head in corpus.heads
        }
        for f in dom_sizes:
            for k in budgets:
                cal_vals = []
                rand_vals = []
                for head in corpus.heads:
                    samples = corpus.samples[head]
                    cal_vals.append(
                        compound_ca(samples, ranked[head][:f], k, corpus.cfg)
                    )
                    rng = SplitMix64(
                        fold_seed(baseline_seed, window, f, k, head.layer, head.head)
                    )
                    for _ in range(n_random):
                        subset = random_chunk_subset(rng, corpus.cfg.num_chunks, f)
                        rand_vals.append(compound_ca(samples, subset, k, corpus.cfg))
                rows.append(
                    {
                        "window": window,
                        "dom_size": f,
                        "budget": k,
                        "calibrated": math.fsum(cal_vals) / len(cal_vals),
                        "random": math.fsum(rand_vals) / len(rand_vals),
                    }
                )
    return ExperimentReport(
        name="compound_ca",
        params={
            "dom_sizes": dom_sizes,
            "windows": windows,
            "budgets": budgets,
            "n_random": n_random,
            "baseline_seed": baseline_seed,
        },
        rows=rows,
    )


def measure_step_traffic(
    t: int,
    cfg: RopeConfig,
    budget: BudgetConfig,
    mode: str,
    seed: int = 0,
    bytes_per_elem: int = 2,
) -> tuple[int, int]:
    """Byte traffic (read, transfer) of one decode step at context length t.

    Prefills t-1 random tokens, decodes one step, and returns that step's
    counter deltas. The dominant set is the first n_tip chunks; traffic does
    not depend on which chunks are dominant, only on how many.
    """
    if t < 1:
        raise ValueError(f"t must be >= 1, got {t}")
    rng = SplitMix64(fold_seed(seed, t))
    d = cfg.head_dim
    keys = rng.gaussians(t * d).reshape(t, d).astype(np.float32)
    values = rng.gaussians(t * d).reshape(t, d).astype(np.float32)
    q = rng.gaussians(d).astype(np.float32)
    dom = tuple(range(budget.n_tip)) if mode == "fasa" else None
    state = HeadState(cfg, dom, bytes_per_elem=bytes_per_elem)
    if t > 1:
        state.prefill(keys[:-1], values[:-1])
    outcome = decode_step(state, q, keys[-1], values[-1], mode, budget)
    return outcome.read_bytes, outcome.transfer_bytes


def run_cost_validation(
    t_values: list[int],
    geometry: CacheGeometry,
    budget: BudgetConfig,
    seed: int = 0,
) -> ExperimentReport:
    """Validate the closed-form traffic model against instrumented decodes.

    For each context length, one sparse decode step and one dense decode
    step run on the same random context; the measured fraction is their
    byte ratio, compared against the per-step closed form.
    """
    if 2 * budget.n_tip != geometry.dom_dims:
        raise ValueError(
            f"budget n_tip {budget.n_tip} does not match geometry dom_dims "
            f"{geometry.dom_dims}"
        )
    cfg = RopeConfig(head_dim=geometry.head_dim)
    bpe = geometry.bytes_per_elem
    rows = []
    for t in t_values:
        read_f, transfer_f = measure_step_traffic(
            t, cfg, budget, "fasa", seed, bytes_per_elem=bpe
        )
        read_d, transfer_d = measure_step_traffic(
            t, cfg, budget, "dense", seed, bytes_per_elem=bpe
        )
        measured = (read_f + transfer_f) / (read_d + transfer_d)
        model = traffic_fraction(t, geometry.head_dim, budget.n_tip, budget.n_fac)
        rows.append(
            {
                "t": t,
                "read_bytes": read_f,
                "transfer_bytes": transfer_f,
                "dense_bytes": read_d + transfer_d,
                "measured_fraction": measured,
                "model_fraction": model,
                "deviation": measured / model - 1.0,
            }
        )
    return ExperimentReport(
        name="cost_validation",
        params={
            "n_tip": budget.n_tip,
            "n_fac": budget.n_fac,
            "head_dim": geometry.head_dim,
            "bytes_per_elem": geometry.bytes_per_elem,
            "seed": seed,
        },
        rows=rows,
    )
