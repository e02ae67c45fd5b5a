"""Timing tables: ingestion, synthesis, and the prediction error metric.

A table holds, per invocation, the kernel's runtime with all operands cached
(t_ic), with none cached (t_ooc), and optionally the reference runtime
observed inside the algorithm (t_alg).  Tables can be measured externally and
loaded from CSV, or synthesized from a roofline-style machine model so the
whole pipeline is testable without hardware.
"""

from __future__ import annotations

import csv
import json
import math
import warnings
from dataclasses import dataclass, field, replace

from . import fileio
from .trace import Trace, region_to_cache_lines

TIMING_FIELDS = ["invocation_index", "kernel", "variant", "t_ic", "t_ooc"]


class TimingError(ValueError):
    """Malformed or inconsistent timing data."""


@dataclass
class TimingRow:
    kernel: str
    variant: str
    t_ic: float
    t_ooc: float
    t_alg: float | None = None


@dataclass
class TimingTable:
    rows: list = field(default_factory=list)

    @property
    def has_alg(self) -> bool:
        return bool(self.rows) and all(r.t_alg is not None for r in self.rows)


def load_timings(path) -> TimingTable:
    """Read a timing CSV; indices must be gap-free starting at 0."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header not in (TIMING_FIELDS, TIMING_FIELDS + ["t_alg"]):
            raise TimingError(f"{path}: bad header {header}; expected {','.join(TIMING_FIELDS)}[,t_alg]")
        with_alg = len(header) == 6
        by_index: dict[int, TimingRow] = {}
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise TimingError(f"{path}: row {lineno} has {len(row)} fields, expected {len(header)}")
            try:
                idx = int(row[0])
            except ValueError:
                raise TimingError(f"{path}: non-numeric invocation_index in row {lineno}: {row[0]!r}") from None
            if idx in by_index:
                raise TimingError(f"{path}: duplicate invocation_index {idx} in row {lineno}")
            try:
                t_ic = float(row[3])
                t_ooc = float(row[4])
                t_alg = float(row[5]) if with_alg and row[5] != "" else None
            except ValueError:
                raise TimingError(f"{path}: non-numeric cycles in row {lineno}") from None
            for label, value in (("t_ic", t_ic), ("t_ooc", t_ooc), ("t_alg", t_alg)):
                if value is not None and (not math.isfinite(value) or value <= 0):
                    raise TimingError(f"{path}: {label} must be a positive finite cycle count in row {lineno}")
            if t_ic > t_ooc:
                warnings.warn(f"{path}: t_ic > t_ooc for invocation {idx}", stacklevel=2)
            by_index[idx] = TimingRow(row[1], row[2], t_ic, t_ooc, t_alg)
    for i in range(len(by_index)):
        if i not in by_index:
            raise TimingError(f"{path}: missing invocation_index {i} (indices must be gap-free from 0)")
    return TimingTable([by_index[i] for i in range(len(by_index))])


def save_timings(table: TimingTable, path) -> None:
    """Write a timing CSV; floats keep full precision so load(save(t)) == t."""
    with_alg = any(r.t_alg is not None for r in table.rows)
    header = TIMING_FIELDS + (["t_alg"] if with_alg else [])
    lines = [",".join(header)]
    for i, r in enumerate(table.rows):
        cells = [str(i), r.kernel, r.variant, repr(r.t_ic), repr(r.t_ooc)]
        if with_alg:
            cells.append("" if r.t_alg is None else repr(r.t_alg))
        lines.append(",".join(cells))
    fileio.atomic_write_text(path, "\n".join(lines) + "\n")


@dataclass(frozen=True)
class MachineModel:
    """Roofline-style synthetic machine: a kernel costs its overhead plus the
    larger of compute time and data-movement time at the relevant bandwidth."""

    peak_flops_per_cycle: float = 16.0
    cache_bw_bytes_per_cycle: float = 64.0
    mem_bw_bytes_per_cycle: float = 2.0
    kernel_overhead_cycles: float = 100.0

    def __post_init__(self):
        if min(self.peak_flops_per_cycle, self.cache_bw_bytes_per_cycle, self.mem_bw_bytes_per_cycle) <= 0:
            raise ValueError("machine rates must be positive")
        if self.kernel_overhead_cycles < 0:
            raise ValueError("kernel overhead cannot be negative")
        if self.mem_bw_bytes_per_cycle >= self.cache_bw_bytes_per_cycle:
            raise ValueError("memory bandwidth must be below cache bandwidth")


def invocation_flops(inv) -> float:
    """Nominal flop count from dims.  Constants only matter through the
    compute/traffic balance, so the classical leading terms are enough."""
    m, n, k = inv.dims
    if inv.kind == "gemm":
        return 2.0 * m * n * k
    if inv.kind in ("trmm", "trsm"):
        k_tri = m if inv.variant[:1] == "L" else n
        return float(m * n * k_tri)
    if inv.kind == "geqr2":
        return 2.0 * m * n * n - (2.0 / 3.0) * n**3
    if inv.kind == "larft":
        return float(m * n * n)
    if inv.kind == "syrk":
        return float(m * n * k)
    if inv.kind in ("potf2", "trti2"):
        return m**3 / 3.0
    if inv.kind == "copy":
        return 0.0
    raise TimingError(f"no flop formula for kernel kind {inv.kind!r}")


def invocation_bytes(inv) -> float:
    """Bytes moved if every operand element is transferred once."""
    return float(sum(op.region.element_count() * op.region.layout.element_size for op in inv.operands))


def synth_timings(trace: Trace, machine: MachineModel = MachineModel()) -> TimingTable:
    rows = []
    for inv in trace.invocations:
        flops = invocation_flops(inv)
        nbytes = invocation_bytes(inv)
        compute = flops / machine.peak_flops_per_cycle
        t_ic = machine.kernel_overhead_cycles + max(compute, nbytes / machine.cache_bw_bytes_per_cycle)
        t_ooc = machine.kernel_overhead_cycles + max(compute, nbytes / machine.mem_bw_bytes_per_cycle)
        rows.append(TimingRow(inv.kind, inv.variant, t_ic, t_ooc))
    return TimingTable(rows)


def blend_in_algorithm(table: TimingTable, trace: Trace, hit_fractions: list, line_size: int = 64) -> TimingTable:
    """Fill t_alg by blending each row with line-weighted oracle hit fractions.

    This builds a self-consistent reference table for end-to-end tests: the
    resulting t_alg is exactly what a predictor fed perfect per-operand
    residency would produce.
    """
    if len(table.rows) != len(trace.invocations):
        raise TimingError(f"table has {len(table.rows)} rows for {len(trace.invocations)} invocations")
    rows = []
    for inv, row, fractions in zip(trace.invocations, table.rows, hit_fractions):
        lines = [region_to_cache_lines(op.region, line_size).size for op in inv.operands]
        total = sum(lines)
        w = 1.0 if total == 0 else sum(l * f for l, f in zip(lines, fractions)) / total
        rows.append(replace(row, t_alg=w * row.t_ic + (1.0 - w) * row.t_ooc))
    return TimingTable(rows)


@dataclass
class ErrorReport:
    mean_abs_rel_error: float
    n_used: int
    excluded: list
    per_kernel: dict

    def to_json(self) -> str:
        def g6(x: float) -> float:
            return float(f"{x:.6g}")

        doc = {
            "mean_abs_rel_error": g6(self.mean_abs_rel_error),
            "n_used": self.n_used,
            "excluded": list(self.excluded),
            "per_kernel": {k: g6(v) for k, v in self.per_kernel.items()},
        }
        return json.dumps(doc, indent=2)


def evaluate(predictions: list, reference: TimingTable, exclude_kinds=("copy",)) -> ErrorReport:
    """Mean |t_pred - t_alg| / t_alg over non-excluded invocations.

    Every invocation weighs the same regardless of its absolute runtime.
    Kinds in exclude_kinds (negligible-runtime kernels such as copies) are
    skipped entirely, including in the per-kind breakdown.
    """
    excluded = sorted(set(exclude_kinds))
    errors: list[float] = []
    per_kind: dict[str, list] = {}
    for pred in predictions:
        idx = pred.invocation_index
        if idx >= len(reference.rows):
            raise TimingError(f"reference table has no row for invocation {idx}")
        row = reference.rows[idx]
        if row.kernel in excluded:
            continue
        if row.t_alg is None:
            raise TimingError(f"reference row {idx} has no in-algorithm timing (t_alg column required)")
        err = abs(pred.t_pred - row.t_alg) / row.t_alg
        errors.append(err)
        per_kind.setdefault(row.kernel, []).append(err)
    if not errors:
        raise TimingError("no invocations left to evaluate after exclusion")
    return ErrorReport(
        mean_abs_rel_error=sum(errors) / len(errors),
        n_used=len(errors),
        excluded=excluded,
        per_kernel={k: sum(v) / len(v) for k, v in sorted(per_kind.items())},
    )
