"""Command-line front end.

Subcommands mirror the pipeline stages: ``trace`` writes the kernel trace,
``classify`` adds model and oracle cache classifications, ``synth`` fabricates
a timing table from a machine model, ``predict`` blends a timing table into
per-invocation runtime predictions, and ``report`` turns a prediction file
into per-kernel series plus rendered figures.

Exit codes: 0 success, 1 usage error (bad flags or sizes), 2 data error
(missing, malformed, or inconsistent files).
"""

from __future__ import annotations

import argparse
import csv
import io
import math
import os
import sys
from dataclasses import dataclass
from pathlib import Path

from . import fileio
from .cachemodel import CacheConfig, SplitPolicy, classify_trace, lru_oracle
from .predictor import MODES, PredictionError, SmoothingParams, predict
from .timings import (MachineModel, TimingError, blend_in_algorithm,
                      evaluate, load_timings, save_timings, synth_timings)
from .trace import ALGORITHMS, Trace, TraceError, generate_trace


@dataclass
class RunConfig:
    algorithm: str = "geqrf"
    n: int = 1568
    b: int = 32
    cache_capacity: int = 6 * 2**20
    line_size: int = 64
    alpha: float = 4.0
    beta: float = 2.0
    mode: str = "tanh"
    split: bool = True
    dedup: bool = True
    split_threshold: float = 0.1
    history: int | None = None
    gemm_nt_operand: str = "w2"
    timings_path: Path | None = None
    out_dir: Path = Path(".")


class _Parser(argparse.ArgumentParser):
    """argparse exits with 2 on usage errors; this tool reserves 2 for data errors."""

    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(1)


def _fmt(x: float) -> str:
    if isinstance(x, float) and math.isinf(x):
        return "inf"
    return f"{x:.6g}"


def build_parser() -> _Parser:
    parser = _Parser(prog="cachepred", description="Cache-aware runtime prediction for blocked DLA kernel sequences")
    sub = parser.add_subparsers(dest="command", required=True)

    problem = argparse.ArgumentParser(add_help=False)
    problem.add_argument("--alg", choices=ALGORITHMS, default="geqrf", help="traced algorithm")
    problem.add_argument("--n", type=int, default=1568, help="matrix dimension")
    problem.add_argument("--b", type=int, default=32, help="block size")
    problem.add_argument("--gemm-nt-operand", choices=("w2", "a12"), default="w2",
                         help="which block the second gemm reads")
    problem.add_argument("--out", type=Path, default=Path("."), help="output directory")

    model = argparse.ArgumentParser(add_help=False)
    model.add_argument("--cache", type=int, default=6 * 2**20, metavar="BYTES", help="cache capacity")
    model.add_argument("--line", type=int, default=64, metavar="BYTES", help="cache line size")
    model.add_argument("--alpha", type=float, default=4.0, help="smoothing slope for r >= 0")
    model.add_argument("--beta", type=float, default=2.0, help="smoothing slope for r < 0")
    model.add_argument("--mode", choices=MODES, default="tanh", help="smoothing mode")
    model.add_argument("--split", action=argparse.BooleanOptionalAction, default=True,
                       help="push small written operands as their own record")
    model.add_argument("--dedup", action=argparse.BooleanOptionalAction, default=True,
                       help="count distinct lines in distances (--no-dedup: raw sums)")
    model.add_argument("--split-threshold", type=float, default=0.1, help="output/input size ratio for splitting")
    model.add_argument("--history", type=int, default=None, help="access records to retain (default: auto)")

    sub.add_parser("trace", parents=[problem], help="generate the kernel trace")
    sub.add_parser("classify", parents=[problem, model], help="model and oracle cache classification")

    synth = sub.add_parser("synth", parents=[problem, model], help="synthesize a timing table")
    synth.add_argument("--peak", type=float, default=16.0, help="flops per cycle")
    synth.add_argument("--cache-bw", type=float, default=64.0, help="cache bytes per cycle")
    synth.add_argument("--mem-bw", type=float, default=2.0, help="memory bytes per cycle")
    synth.add_argument("--overhead", type=float, default=100.0, help="per-kernel overhead cycles")
    synth.add_argument("--with-alg", action="store_true",
                       help="also fill t_alg by blending with exact LRU hit fractions")

    pred = sub.add_parser("predict", parents=[problem, model], help="predict per-invocation runtimes")
    pred.add_argument("--timings", type=Path, required=True, metavar="PATH", help="timing table CSV")

    rep = sub.add_parser("report", help="per-kernel series and figures from a prediction file")
    rep.add_argument("--predictions", type=Path, required=True, metavar="PATH", help="prediction CSV")
    rep.add_argument("--out", type=Path, default=Path("."), help="output directory")
    return parser


def _run_config(args) -> RunConfig:
    return RunConfig(
        algorithm=args.alg, n=args.n, b=args.b,
        cache_capacity=getattr(args, "cache", 6 * 2**20),
        line_size=getattr(args, "line", 64),
        alpha=getattr(args, "alpha", 4.0), beta=getattr(args, "beta", 2.0),
        mode=getattr(args, "mode", "tanh"),
        split=getattr(args, "split", True), dedup=getattr(args, "dedup", True),
        split_threshold=getattr(args, "split_threshold", 0.1),
        history=getattr(args, "history", None),
        gemm_nt_operand=args.gemm_nt_operand,
        timings_path=getattr(args, "timings", None),
        out_dir=args.out,
    )


def _cache_config(cfg: RunConfig) -> CacheConfig:
    return CacheConfig(capacity=cfg.cache_capacity, line_size=cfg.line_size,
                       history_limit=cfg.history, dedup=cfg.dedup)


def _trace(cfg: RunConfig) -> Trace:
    return generate_trace(cfg.algorithm, cfg.n, cfg.b, gemm_nt_input=cfg.gemm_nt_operand)


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    return buf.getvalue()


def cmd_trace(cfg: RunConfig) -> int:
    trace = _trace(cfg)
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    fileio.atomic_write_text(cfg.out_dir / "trace.json", trace.to_json())
    fileio.atomic_write_text(cfg.out_dir / "trace.csv", trace.to_csv())
    copies = trace.kind_counts().get("copy", 0)
    print(f"invocations={len(trace.invocations)} copy={copies}")
    print(" ".join(f"{key}={count}" for key, count in trace.kernel_counts().items()))
    print(f"wrote {cfg.out_dir / 'trace.json'} and {cfg.out_dir / 'trace.csv'}")
    return 0


def cmd_classify(cfg: RunConfig) -> int:
    trace = _trace(cfg)
    config = _cache_config(cfg)
    policy = SplitPolicy(cfg.split, cfg.split_threshold)
    classification = classify_trace(trace, config, policy)
    fractions = lru_oracle(trace, config)
    rows = []
    in_cache = 0
    total = 0
    for inv, ops, fracs in zip(trace.invocations, classification, fractions):
        for ordinal, (op, oc, frac) in enumerate(zip(inv.operands, ops, fracs)):
            rows.append([
                inv.index, inv.kernel_key(), ordinal, op.role, oc.lines,
                "inf" if math.isinf(oc.distance) else int(oc.distance),
                _fmt(oc.r), _fmt(frac),
            ])
            total += 1
            in_cache += oc.r >= 0
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    path = cfg.out_dir / "classification.csv"
    fileio.atomic_write_text(path, _csv_text(
        ["invocation_index", "kernel", "operand_ordinal", "role", "lines",
         "distance_lines", "r", "oracle_hit_fraction"], rows))
    print(f"operands={total} in_cache={in_cache} out_of_cache={total - in_cache}")
    print(f"wrote {path}")
    return 0


def cmd_synth(cfg: RunConfig, args) -> int:
    trace = _trace(cfg)
    machine = MachineModel(args.peak, args.cache_bw, args.mem_bw, args.overhead)
    table = synth_timings(trace, machine)
    if args.with_alg:
        fractions = lru_oracle(trace, _cache_config(cfg))
        table = blend_in_algorithm(table, trace, fractions, cfg.line_size)
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    path = cfg.out_dir / "timings.csv"
    save_timings(table, path)
    print(f"rows={len(table.rows)} t_alg={'yes' if table.has_alg else 'no'}")
    print(f"wrote {path}")
    return 0


def cmd_predict(cfg: RunConfig) -> int:
    trace = _trace(cfg)
    table = load_timings(cfg.timings_path)
    config = _cache_config(cfg)
    policy = SplitPolicy(cfg.split, cfg.split_threshold)
    params = SmoothingParams(cfg.alpha, cfg.beta, cfg.mode)
    classification = classify_trace(trace, config, policy)
    preds = predict(trace, classification, table, params)

    header = ["invocation_index", "kernel", "variant", "w", "t_ic", "t_ooc", "t_pred"]
    if table.has_alg:
        header += ["t_ref", "rel_err"]
    rows = []
    for pred in preds:
        row = table.rows[pred.invocation_index]
        cells = [pred.invocation_index, row.kernel, row.variant,
                 _fmt(pred.w), _fmt(row.t_ic), _fmt(row.t_ooc), _fmt(pred.t_pred)]
        if table.has_alg:
            cells += [_fmt(row.t_alg), _fmt((pred.t_pred - row.t_alg) / row.t_alg)]
        rows.append(cells)
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    path = cfg.out_dir / "predictions.csv"
    fileio.atomic_write_text(path, _csv_text(header, rows))
    print(f"predictions={len(preds)}")
    print(f"wrote {path}")
    if table.has_alg:
        report = evaluate(preds, table)
        fileio.atomic_write_text(cfg.out_dir / "error_report.json", report.to_json() + "\n")
        print(f"mean_abs_rel_error={report.mean_abs_rel_error:.6g} over n={report.n_used} "
              f"invocations (excluded: {','.join(report.excluded)})")
        print(f"wrote {cfg.out_dir / 'error_report.json'}")
    return 0


def _render_figures(series: dict, errors: dict, out_dir: Path) -> list:
    import matplotlib
    matplotlib.use("Agg", force=True)
    import matplotlib.pyplot as plt

    written = []

    def scatter(data: dict, ylabel: str, fname: str):
        fig, ax = plt.subplots(figsize=(8.0, 4.5))
        for key, points in data.items():
            xs = [p[0] for p in points]
            ys = [p[1] for p in points]
            ax.plot(xs, ys, ".", markersize=3, label=key)
        ax.set_xlabel("invocation index")
        ax.set_ylabel(ylabel)
        ax.legend(fontsize="small", markerscale=2, ncols=2)
        ax.grid(True, alpha=0.3)
        fig.tight_layout()
        tmp = out_dir / (fname + ".tmp")
        fig.savefig(tmp, format="png", dpi=150)
        plt.close(fig)
        fileio.atomic_replace(tmp, out_dir / fname)
        written.append(out_dir / fname)

    scatter(series, "predicted time [cycles]", "predictions.png")
    if errors:
        scatter(errors, "relative error", "relative_error.png")
    return written


def cmd_report(args) -> int:
    with open(args.predictions, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        data = list(reader)
    if not data:
        raise TimingError(f"{args.predictions}: no predictions")
    needed = {"invocation_index", "kernel", "variant", "t_pred"}
    if not needed.issubset(reader.fieldnames or ()):
        raise TimingError(f"{args.predictions}: missing columns {sorted(needed - set(reader.fieldnames or ()))}")
    has_err = "rel_err" in (reader.fieldnames or ())

    series: dict[str, list] = {}
    errors: dict[str, list] = {}
    for row in data:
        key = f"{row['kernel']}_{row['variant']}" if row["variant"] else row["kernel"]
        idx = int(row["invocation_index"])
        series.setdefault(key, []).append((idx, float(row["t_pred"])))
        if has_err:
            errors.setdefault(key, []).append((idx, float(row["rel_err"])))

    out_dir = args.out / "report"
    out_dir.mkdir(parents=True, exist_ok=True)
    for key, points in series.items():
        fileio.atomic_write_text(out_dir / f"series_{key}.csv",
                                 _csv_text(["invocation_index", "value"],
                                           [[i, _fmt(v)] for i, v in points]))
    for key, points in errors.items():
        fileio.atomic_write_text(out_dir / f"relerr_{key}.csv",
                                 _csv_text(["invocation_index", "value"],
                                           [[i, _fmt(v)] for i, v in points]))
    figures = _render_figures(series, errors, out_dir)
    made = len(series) + len(errors) + len(figures)
    print(f"kernels={len(series)} files={made}")
    print(f"wrote {out_dir}/series_*.csv" + (" relerr_*.csv" if errors else "")
          + " " + " ".join(str(p.name) for p in figures))
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        if args.command == "report":
            return cmd_report(args)
        cfg = _run_config(args)
        if args.command == "trace":
            return cmd_trace(cfg)
        if args.command == "classify":
            return cmd_classify(cfg)
        if args.command == "synth":
            return cmd_synth(cfg, args)
        if args.command == "predict":
            return cmd_predict(cfg)
        parser.error(f"unknown command {args.command!r}")
    except (TraceError, ValueError) as exc:
        if isinstance(exc, (TimingError, PredictionError)):
            print(f"cachepred: data error: {exc}", file=sys.stderr)
            return 2
        print(f"cachepred: error: {exc}", file=sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print(f"cachepred: data error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
