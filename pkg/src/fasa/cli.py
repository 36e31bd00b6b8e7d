"""Command-line interface: synth / calibrate / agreement / decode / bench.

Exit codes: 0 success, 1 usage error, 2 data or validation error. Every
numeric artifact a command writes is also printed as a table on stdout, and
report-producing commands render a PNG figure next to their CSV/JSON output.
Validation failures leave no partial output files behind.
"""

from __future__ import annotations

import argparse
import os
import sys

from . import artifacts, plots
from .artifacts import ValidationError
from .tensorfile import TensorFormatError
from .cache import speedup_asymptote, speedup_model, traffic_fraction
from .calibration import calibrate
from .engine import BudgetConfig, HeadState, decode_step
from .harness import (
    ExperimentReport,
    PlantedSpec,
    measure_step_traffic,
    synth_planted,
)
from .rng import SplitMix64, fold_seed
from .rope import RopeConfig


class _Parser(argparse.ArgumentParser):
    """argparse parser that exits 1 (not 2) on usage errors."""

    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"{self.prog}: error: {message}\n")
        raise SystemExit(1)


def _parse_int_list(text: str) -> tuple[int, ...]:
    try:
        items = tuple(int(x) for x in text.split(",") if x.strip() != "")
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")
    if not items:
        raise argparse.ArgumentTypeError("list must not be empty")
    return items


def build_parser() -> _Parser:
    parser = _Parser(prog="fasa", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a planted synthetic corpus")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--d", type=int, required=True, help="head dimension")
    p.add_argument("--t", type=int, required=True, help="context length")
    p.add_argument("--planted", type=_parse_int_list, required=True,
                   help="comma-separated planted chunk indices")
    p.add_argument("--important", type=int, required=True,
                   help="number of planted important tokens")
    p.add_argument("--amp", type=float, required=True, help="signal amplitude")
    p.add_argument("--sigma", type=float, required=True, help="noise std")
    p.add_argument("--out", required=True, help="output corpus directory")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("calibrate", help="identify dominant chunks per head")
    p.add_argument("--corpus", required=True, help="corpus directory")
    p.add_argument("--n-tip", type=int, required=True, help="chunks to keep per head")
    p.add_argument("--window", type=int, default=256, help="agreement top-K window")
    p.add_argument("--out", required=True, help="output dominant-set JSON")
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("agreement", help="per-chunk mean agreement heatmap")
    p.add_argument("--corpus", required=True, help="corpus directory")
    p.add_argument("--window", type=int, default=256, help="agreement top-K window")
    p.add_argument("--heatmap", required=True, help="output CSV (PNG written alongside)")
    p.set_defaults(func=cmd_agreement)

    p = sub.add_parser("decode", help="replay corpus samples through a decode step")
    p.add_argument("--corpus", required=True, help="corpus directory")
    p.add_argument("--dom", help="dominant-set JSON (required for --mode fasa)")
    p.add_argument("--n-fac", type=int, required=True, help="token budget")
    p.add_argument("--mode", choices=("dense", "fasa", "oracle"), required=True)
    p.add_argument("--metrics", required=True, help="output metrics JSON")
    p.set_defaults(func=cmd_decode)

    p = sub.add_parser("bench", help="cost models plus instrumented validation")
    p.add_argument("--d", type=int, required=True, help="head dimension")
    p.add_argument("--n-tip", type=int, required=True, help="dominant chunks")
    p.add_argument("--n-fac", type=int, required=True, help="token budget")
    p.add_argument("--t-max", type=int, required=True, help="largest context length")
    p.add_argument("--out", required=True, help="output JSON (PNG written alongside)")
    p.set_defaults(func=cmd_bench)

    return parser


def _figure_path(report_path: str) -> str:
    return os.path.splitext(report_path)[0] + ".png"


def cmd_synth(args) -> int:
    rng = SplitMix64(fold_seed(args.seed, 0xA11CE))
    important = rng.sample_indices(args.t, args.important)
    spec = PlantedSpec(
        head_dim=args.d,
        context_len=args.t,
        planted=args.planted,
        important=important,
        amplitude=args.amp,
        sigma=args.sigma,
        seed=args.seed,
    )
    corpus, truth = synth_planted(spec)
    artifacts.save_corpus(args.out, corpus, truth)
    n_files = len([n for n in os.listdir(args.out) if n.endswith(".fast")])
    report = ExperimentReport(
        name="synth",
        params={"out": args.out},
        rows=[
            {
                "d": args.d,
                "t": args.t,
                "planted": list(args.planted),
                "n_important": args.important,
                "amplitude": args.amp,
                "sigma": args.sigma,
                "seed": args.seed,
                "samples": spec.n_samples,
                "tensor_files": n_files,
            }
        ],
    )
    print(report.format_table())
    print(f"wrote corpus to {args.out}")
    return 0


def cmd_calibrate(args) -> int:
    corpus, _ = artifacts.load_corpus(args.corpus)
    ds = calibrate(corpus, args.n_tip, args.window)
    artifacts.save_dominant(args.out, ds)
    rows = [
        {
            "head": head.label(),
            "chunks": [c for c, _ in pairs],
            "mean_ca": [round(v, 4) for _, v in pairs],
        }
        for head, pairs in ds.entries.items()
    ]
    report = ExperimentReport(
        name="calibrate",
        params={"n_tip": args.n_tip, "window": args.window},
        rows=rows,
    )
    print(report.format_table())
    print(f"wrote dominant set to {args.out}")
    return 0


def cmd_agreement(args) -> int:
    corpus, _ = artifacts.load_corpus(args.corpus)
    labels, matrix = artifacts.heatmap_rows(corpus, args.window)
    artifacts.write_heatmap_csv(args.heatmap, labels, matrix)
    fig_path = _figure_path(args.heatmap)
    plots.render_heatmap(fig_path, labels, matrix)
    header = "head  " + " ".join(f"{c:>6d}" for c in range(matrix.shape[1]))
    print(header)
    for label, row in zip(labels, matrix):
        print(f"{label:<5} " + " ".join(f"{v:.4f}" for v in row))
    print(f"wrote heatmap CSV to {args.heatmap} and figure to {fig_path}")
    return 0


def cmd_decode(args) -> int:
    if args.mode == "fasa" and not args.dom:
        args.parser.error("--dom is required when --mode fasa")
    corpus, _ = artifacts.load_corpus(args.corpus)
    dom = None
    if args.dom:
        dom = artifacts.load_dominant(args.dom)
        if dom.cfg != corpus.cfg:
            raise ValidationError(
                "config", f"dominant set {dom.cfg} does not match corpus {corpus.cfg}"
            )
    n_tip = dom.n_tip if dom is not None else 1
    budget = BudgetConfig(n_tip=n_tip, n_fac=args.n_fac)
    d = corpus.cfg.head_dim
    bytes_per_elem = 2
    records = []
    for head in corpus.heads:
        if args.mode == "fasa" and head not in dom.entries:
            raise ValidationError(
                f"heads.{head.label()}", "corpus head missing from dominant set"
            )
        for i, sample in enumerate(corpus.samples[head]):
            if sample.values is None:
                raise ValidationError(
                    f"samples.{head.label()}[{i}]", "decoding needs value tensors"
                )
            if sample.q_pos != sample.context_len - 1:
                raise ValidationError(
                    f"samples.{head.label()}[{i}]",
                    f"replay needs q_pos == t-1, got {sample.q_pos}",
                )
            chunks = dom.chunks(head) if args.mode == "fasa" else None
            state = HeadState(corpus.cfg, chunks, bytes_per_elem=bytes_per_elem)
            if sample.context_len > 1:
                state.prefill(sample.keys[:-1], sample.values[:-1])
            outcome = decode_step(
                state, sample.q, sample.keys[-1], sample.values[-1], args.mode, budget
            )
            t = sample.context_len
            dense_bytes = t * 2 * d * bytes_per_elem  # dense step loads all keys+values
            if args.mode == "dense":
                model = 1.0
            elif args.mode == "oracle":
                model = min(1.0, args.n_fac / t)
            else:
                model = traffic_fraction(t, d, n_tip, args.n_fac)
            records.append(
                {
                    "layer": head.layer,
                    "head": head.head,
                    "sample": i,
                    "mode": args.mode,
                    "t": t,
                    "read_bytes": outcome.read_bytes,
                    "transfer_bytes": outcome.transfer_bytes,
                    "measured_fraction": outcome.total_bytes / dense_bytes,
                    "model_fraction": model,
                }
            )
    doc = {
        "params": {
            "mode": args.mode,
            "n_fac": args.n_fac,
            "n_tip": n_tip if args.mode == "fasa" else None,
            "d": d,
            "bytes_per_elem": bytes_per_elem,
        },
        "records": records,
    }
    artifacts.write_json(args.metrics, doc)
    report = ExperimentReport(name="decode", params=doc["params"], rows=records)
    print(report.format_table())
    print(f"wrote metrics to {args.metrics}")
    return 0


def cmd_bench(args) -> int:
    if args.t_max < 1:
        raise ValueError(f"--t-max must be >= 1, got {args.t_max}")
    cfg = RopeConfig(head_dim=args.d)
    budget = BudgetConfig(n_tip=args.n_tip, n_fac=args.n_fac)
    t_values = []
    t = 64
    while t < args.t_max:
        t_values.append(t)
        t *= 2
    t_values.append(args.t_max)
    rows = []
    for t in t_values:
        read_f, transfer_f = measure_step_traffic(t, cfg, budget, "fasa")
        read_d, transfer_d = measure_step_traffic(t, cfg, budget, "dense")
        rows.append(
            {
                "t": t,
                "model_speedup": speedup_model(t, args.d, args.n_tip, args.n_fac),
                "model_fraction": traffic_fraction(t, args.d, args.n_tip, args.n_fac),
                "measured_fraction": (read_f + transfer_f) / (read_d + transfer_d),
                "read_bytes": read_f,
                "transfer_bytes": transfer_f,
            }
        )
    asymptote = speedup_asymptote(args.d, args.n_tip)
    doc = {
        "params": {"d": args.d, "n_tip": args.n_tip, "n_fac": args.n_fac,
                   "t_max": args.t_max},
        "model_asymptote": asymptote,
        "rows": rows,
    }
    artifacts.write_json(args.out, doc)
    fig_path = _figure_path(args.out)
    plots.render_bench(fig_path, rows, asymptote)
    report = ExperimentReport(name="bench", params=doc["params"], rows=rows)
    print(report.format_table())
    print(f"model asymptote: {asymptote:g}")
    print(f"wrote results to {args.out} and figure to {fig_path}")
    return 0


def cli(argv=None) -> int:
    """Run one command; returns the process exit code instead of raising."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        args.parser = parser
        return args.func(args)
    except SystemExit as e:
        code = e.code
        return code if isinstance(code, int) else 0 if code is None else 1
    except (ValidationError, TensorFormatError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except (ValueError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(cli(sys.argv[1:]))


if __name__ == "__main__":
    main()
