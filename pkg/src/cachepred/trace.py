"""Kernel-invocation traces for blocked dense linear algebra algorithms.

A trace records, for one run of a blocked factorization (QR, Cholesky, or
lower-triangular inversion), the ordered sequence of BLAS/LAPACK-style kernel
calls together with the byte-precise memory window every operand touches.
Matrices live in one flat byte address space as column-major layouts; an
operand is a rectangular (or triangular) sub-block of a layout plus an access
role.  Traces carry no floating-point data at all: they only describe which
memory each kernel reads and writes, which is all the cache model needs.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass
from typing import Optional

import numpy as np

SHAPE_FULL = "full"
SHAPE_LOWER = "lower_triangular"
SHAPE_UPPER = "upper_triangular"
SHAPES = (SHAPE_FULL, SHAPE_LOWER, SHAPE_UPPER)

ROLE_INPUT = "input"
ROLE_OUTPUT = "output"
ROLE_INOUT = "inout"
ROLES = (ROLE_INPUT, ROLE_OUTPUT, ROLE_INOUT)

ALGORITHMS = ("geqrf", "potrf", "trtri")


class TraceError(ValueError):
    """Invalid trace parameters or malformed trace data."""


@dataclass(frozen=True)
class MatrixLayout:
    """Column-major matrix in a flat byte address space.

    Element (i, j) lives at base_address + (j*leading_dimension + i)*element_size.
    """

    name: str
    base_address: int
    rows: int
    cols: int
    leading_dimension: int
    element_size: int = 8

    def __post_init__(self):
        if self.element_size <= 0:
            raise TraceError(f"layout {self.name}: element_size must be positive")
        if self.base_address < 0:
            raise TraceError(f"layout {self.name}: base_address must be >= 0")
        if self.rows < 0 or self.cols < 0:
            raise TraceError(f"layout {self.name}: negative dimensions")
        if self.leading_dimension < max(self.rows, 1):
            raise TraceError(f"layout {self.name}: leading_dimension smaller than rows")

    def byte_span(self) -> int:
        """Bytes from the first to one past the last addressable element."""
        if self.rows == 0 or self.cols == 0:
            return 0
        return ((self.cols - 1) * self.leading_dimension + self.rows) * self.element_size


@dataclass(frozen=True)
class Region:
    """Sub-block of a layout; triangular shapes cover only the stored triangle.

    The diagonal always belongs to the stored triangle, also for kernels that
    assume a unit diagonal (the bytes sit inside the accessed columns either
    way).
    """

    layout: MatrixLayout
    row_offset: int
    col_offset: int
    rows: int
    cols: int
    shape: str = SHAPE_FULL

    def __post_init__(self):
        if self.shape not in SHAPES:
            raise TraceError(f"unknown region shape {self.shape!r}")
        if self.row_offset < 0 or self.col_offset < 0 or self.rows < 0 or self.cols < 0:
            raise TraceError("region offsets and dimensions must be >= 0")
        if self.row_offset + self.rows > self.layout.rows:
            raise TraceError(f"region exceeds rows of layout {self.layout.name}")
        if self.col_offset + self.cols > self.layout.cols:
            raise TraceError(f"region exceeds cols of layout {self.layout.name}")

    def element_count(self) -> int:
        """Number of stored elements (triangles count only their own half)."""
        if self.shape == SHAPE_FULL:
            return self.rows * self.cols
        if self.shape == SHAPE_LOWER:
            return sum(self.rows - c for c in range(self.cols) if c < self.rows)
        return sum(min(c + 1, self.rows) for c in range(self.cols))

    def column_byte_runs(self):
        """Yield one half-open byte interval per non-empty column."""
        lay = self.layout
        es = lay.element_size
        for c in range(self.cols):
            if self.shape == SHAPE_LOWER:
                r0 = min(c, self.rows)
                height = self.rows - r0
            elif self.shape == SHAPE_UPPER:
                r0 = 0
                height = min(c + 1, self.rows)
            else:
                r0 = 0
                height = self.rows
            if height == 0:
                continue
            start = lay.base_address + ((self.col_offset + c) * lay.leading_dimension + self.row_offset + r0) * es
            yield start, start + height * es

    def byte_intervals(self) -> list:
        """Disjoint byte intervals; adjacent columns merge when contiguous."""
        merged: list[list[int]] = []
        for start, stop in self.column_byte_runs():
            if merged and merged[-1][1] == start:
                merged[-1][1] = stop
            else:
                merged.append([start, stop])
        return [(a, b) for a, b in merged]


def region_to_cache_lines(region: Region, line_size: int) -> np.ndarray:
    """Sorted distinct cache-line indices touched by any byte of the region.

    Line index is floor(byte_address / line_size) in the flat address space,
    so lines are shared across layouts, columns, and neighbouring regions
    whenever their bytes land on the same line.
    """
    if line_size <= 0 or line_size & (line_size - 1):
        raise ValueError("line_size must be a positive power of two")
    if region.rows == 0 or region.cols == 0:
        return np.empty(0, dtype=np.int64)
    lay = region.layout
    es = lay.element_size
    c = np.arange(region.cols, dtype=np.int64)
    if region.shape == SHAPE_LOWER:
        r0 = np.minimum(c, region.rows)
        height = region.rows - r0
    elif region.shape == SHAPE_UPPER:
        r0 = np.zeros_like(c)
        height = np.minimum(c + 1, region.rows)
    else:
        r0 = np.zeros_like(c)
        height = np.full_like(c, region.rows)
    keep = height > 0
    c, r0, height = c[keep], r0[keep], height[keep]
    if c.size == 0:
        return np.empty(0, dtype=np.int64)
    start = lay.base_address + ((region.col_offset + c) * lay.leading_dimension + region.row_offset + r0) * es
    first = start // line_size
    last = (start + height * es - 1) // line_size
    counts = last - first + 1
    width = int(counts.max())
    grid = first[:, None] + np.arange(width, dtype=np.int64)[None, :]
    inside = np.arange(width, dtype=np.int64)[None, :] < counts[:, None]
    return np.unique(grid[inside])


@dataclass(frozen=True)
class Operand:
    region: Region
    role: str

    def __post_init__(self):
        if self.role not in ROLES:
            raise TraceError(f"unknown operand role {self.role!r}")


@dataclass(frozen=True)
class KernelInvocation:
    """One kernel call: position in the trace, kind, flag variant, dims, operands."""

    index: int
    step: int
    kind: str
    variant: str
    dims: tuple  # (m, n, k); k is None for two-dimensional kernels
    operands: tuple

    def kernel_key(self) -> str:
        """Kind plus flag variant, e.g. 'trmm_RLNU'; bare kind when no flags."""
        return f"{self.kind}_{self.variant}" if self.variant else self.kind


@dataclass(frozen=True)
class Trace:
    algorithm: str
    n: int
    b: int
    layouts: tuple
    invocations: tuple

    def kind_counts(self) -> dict:
        counts: dict[str, int] = {}
        for inv in self.invocations:
            counts[inv.kind] = counts.get(inv.kind, 0) + 1
        return counts

    def kernel_counts(self) -> dict:
        """Counts keyed by kind_variant, in order of first appearance."""
        counts: dict[str, int] = {}
        for inv in self.invocations:
            key = inv.kernel_key()
            counts[key] = counts.get(key, 0) + 1
        return counts

    def to_json(self) -> str:
        doc = {
            "algorithm": self.algorithm,
            "n": self.n,
            "b": self.b,
            "layouts": [
                {
                    "name": lay.name,
                    "base": lay.base_address,
                    "rows": lay.rows,
                    "cols": lay.cols,
                    "ld": lay.leading_dimension,
                    "elem": lay.element_size,
                }
                for lay in self.layouts
            ],
            "invocations": [
                {
                    "index": inv.index,
                    "step": inv.step,
                    "kind": inv.kind,
                    "variant": inv.variant,
                    "m": inv.dims[0],
                    "n": inv.dims[1],
                    "k": inv.dims[2],
                    "operands": [
                        {
                            "layout": op.region.layout.name,
                            "row_off": op.region.row_offset,
                            "col_off": op.region.col_offset,
                            "rows": op.region.rows,
                            "cols": op.region.cols,
                            "shape": op.region.shape,
                            "role": op.role,
                        }
                        for op in inv.operands
                    ],
                }
                for inv in self.invocations
            ],
        }
        return json.dumps(doc, indent=2)

    @staticmethod
    def from_json(text: str) -> "Trace":
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise TraceError(f"malformed trace JSON: {exc}") from exc
        try:
            layouts = tuple(
                MatrixLayout(d["name"], d["base"], d["rows"], d["cols"], d["ld"], d["elem"])
                for d in doc["layouts"]
            )
            by_name = {lay.name: lay for lay in layouts}
            invocations = []
            for d in doc["invocations"]:
                operands = tuple(
                    Operand(
                        Region(by_name[o["layout"]], o["row_off"], o["col_off"], o["rows"], o["cols"], o["shape"]),
                        o["role"],
                    )
                    for o in d["operands"]
                )
                invocations.append(
                    KernelInvocation(d["index"], d["step"], d["kind"], d["variant"], (d["m"], d["n"], d["k"]), operands)
                )
            return Trace(doc["algorithm"], doc["n"], doc["b"], layouts, tuple(invocations))
        except (KeyError, TypeError) as exc:
            raise TraceError(f"malformed trace JSON: missing field {exc}") from exc

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["index", "step", "kind", "variant", "m", "n", "k"])
        for inv in self.invocations:
            m, n, k = inv.dims
            writer.writerow([inv.index, inv.step, inv.kind, inv.variant, m, n, "" if k is None else k])
        return buf.getvalue()


def _align_up(x: int, alignment: int) -> int:
    return (x + alignment - 1) // alignment * alignment


def default_address_map(algorithm: str, n: int, b: int, element_size: int = 8, alignment: int = 64) -> dict:
    """Place the working matrices at consecutive aligned offsets in one flat space."""
    a = MatrixLayout("A", 0, n, n, n, element_size)
    if algorithm != "geqrf":
        return {"A": a}
    tau_base = _align_up(a.byte_span(), alignment)
    tau = MatrixLayout("tau", tau_base, n, 1, n, element_size)
    w_base = _align_up(tau_base + tau.byte_span(), alignment)
    w = MatrixLayout("W", w_base, n, b, n, element_size)
    return {"A": a, "tau": tau, "W": w}


def _check_problem(n: int, b: int):
    if n <= 0:
        raise TraceError(f"n must be positive, got {n}")
    if b <= 0:
        raise TraceError(f"b must be positive, got {b}")
    if b > n:
        raise TraceError(f"block size b={b} exceeds n={n}")


def _check_address_map(address_map: dict, required: dict):
    for name, (rows, cols) in required.items():
        if name not in address_map:
            raise TraceError(f"address map is missing layout {name!r}")
        lay = address_map[name]
        if lay.rows != rows or lay.cols != cols:
            raise TraceError(f"layout {name} must be {rows}x{cols}, got {lay.rows}x{lay.cols}")
    lays = sorted((address_map[name] for name in required), key=lambda l: l.base_address)
    for a, b_ in zip(lays, lays[1:]):
        if a.base_address + a.byte_span() > b_.base_address:
            raise TraceError(f"overlapping layouts {a.name} and {b_.name}")


def generate_geqrf_trace(n: int, b: int, address_map: Optional[dict] = None, gemm_nt_input: str = "w2") -> Trace:
    """Kernel sequence of a blocked Householder QR factorization of an n x n matrix.

    Per full step (panel of width b at diagonal offset j, trailing dimension
    m = n - j - b):

      geqr2       factor the panel (A11; A21) in place, writing tau1
      larft       form the triangular block factor T from the panel, into W1
      b x copy    transpose A12 into W2 one row at a time
      trmm_RLNU   W2 updated with the unit lower triangle of A11
      gemm_TN     W2 += A22^T A21
      trmm_RUNN   W2 updated with the upper triangle of W1
      gemm_NT     A22 -= A21 W2^T
      trmm_RLTU   W2 updated with the unit lower triangle of A11

    A final geqr2 factors the trailing panel once n - j <= b.  The second gemm
    reads W2 by default; gemm_nt_input="a12" substitutes the A12 block of equal
    element count, which changes footprints only, never dims.
    """
    _check_problem(n, b)
    if gemm_nt_input not in ("w2", "a12"):
        raise TraceError(f"gemm_nt_input must be 'w2' or 'a12', got {gemm_nt_input!r}")
    if address_map is None:
        address_map = default_address_map("geqrf", n, b)
    _check_address_map(address_map, {"A": (n, n), "tau": (n, 1), "W": (n, b)})
    A, tau, W = address_map["A"], address_map["tau"], address_map["W"]

    invs = []
    idx = 0
    step = 0
    j = 0
    while n - j > b:
        m = n - j - b
        panel = Region(A, j, j, n - j, b)
        tau1 = Region(tau, j, 0, b, 1)
        a11_lower = Region(A, j, j, b, b, SHAPE_LOWER)
        a12 = Region(A, j, j + b, b, m)
        a21 = Region(A, j + b, j, m, b)
        a22 = Region(A, j + b, j + b, m, m)
        w1_upper = Region(W, 0, 0, b, b, SHAPE_UPPER)
        w2 = Region(W, b, 0, m, b)

        invs.append(KernelInvocation(idx, step, "geqr2", "", (n - j, b, None),
                                     (Operand(panel, ROLE_INOUT), Operand(tau1, ROLE_OUTPUT))))
        idx += 1
        invs.append(KernelInvocation(idx, step, "larft", "", (n - j, b, None),
                                     (Operand(panel, ROLE_INPUT), Operand(tau1, ROLE_INPUT),
                                      Operand(w1_upper, ROLE_OUTPUT))))
        idx += 1
        for i in range(b):
            row = Region(A, j + i, j + b, 1, m)
            col = Region(W, b, i, m, 1)
            invs.append(KernelInvocation(idx, step, "copy", "", (m, 1, None),
                                         (Operand(row, ROLE_INPUT), Operand(col, ROLE_OUTPUT))))
            idx += 1
        invs.append(KernelInvocation(idx, step, "trmm", "RLNU", (m, b, None),
                                     (Operand(a11_lower, ROLE_INPUT), Operand(w2, ROLE_INOUT))))
        idx += 1
        invs.append(KernelInvocation(idx, step, "gemm", "TN", (m, b, m),
                                     (Operand(a22, ROLE_INPUT), Operand(a21, ROLE_INPUT),
                                      Operand(w2, ROLE_INOUT))))
        idx += 1
        invs.append(KernelInvocation(idx, step, "trmm", "RUNN", (m, b, None),
                                     (Operand(w1_upper, ROLE_INPUT), Operand(w2, ROLE_INOUT))))
        idx += 1
        nt_b = w2 if gemm_nt_input == "w2" else a12
        invs.append(KernelInvocation(idx, step, "gemm", "NT", (m, m, b),
                                     (Operand(a21, ROLE_INPUT), Operand(nt_b, ROLE_INPUT),
                                      Operand(a22, ROLE_INOUT))))
        idx += 1
        invs.append(KernelInvocation(idx, step, "trmm", "RLTU", (m, b, None),
                                     (Operand(a11_lower, ROLE_INPUT), Operand(w2, ROLE_INOUT))))
        idx += 1
        j += b
        step += 1

    w = n - j  # 0 < w <= b: trailing panel, unblocked QR only
    panel = Region(A, j, j, w, w)
    tau1 = Region(tau, j, 0, w, 1)
    invs.append(KernelInvocation(idx, step, "geqr2", "", (w, w, None),
                                 (Operand(panel, ROLE_INOUT), Operand(tau1, ROLE_OUTPUT))))
    return Trace("geqrf", n, b, (A, tau, W), tuple(invs))


def generate_potrf_trace(n: int, b: int, address_map: Optional[dict] = None) -> Trace:
    """Kernel sequence of a blocked right-looking Cholesky factorization (upper)."""
    _check_problem(n, b)
    if address_map is None:
        address_map = default_address_map("potrf", n, b)
    _check_address_map(address_map, {"A": (n, n)})
    A = address_map["A"]

    invs = []
    idx = 0
    step = 0
    j = 0
    while n - j > b:
        m = n - j - b
        a11_upper = Region(A, j, j, b, b, SHAPE_UPPER)
        a12 = Region(A, j, j + b, b, m)
        a22_upper = Region(A, j + b, j + b, m, m, SHAPE_UPPER)
        invs.append(KernelInvocation(idx, step, "potf2", "U", (b, b, None),
                                     (Operand(a11_upper, ROLE_INOUT),)))
        idx += 1
        invs.append(KernelInvocation(idx, step, "trsm", "LUTN", (b, m, None),
                                     (Operand(a11_upper, ROLE_INPUT), Operand(a12, ROLE_INOUT))))
        idx += 1
        invs.append(KernelInvocation(idx, step, "syrk", "UT", (m, m, b),
                                     (Operand(a12, ROLE_INPUT), Operand(a22_upper, ROLE_INOUT))))
        idx += 1
        j += b
        step += 1

    w = n - j
    a11_upper = Region(A, j, j, w, w, SHAPE_UPPER)
    invs.append(KernelInvocation(idx, step, "potf2", "U", (w, w, None),
                                 (Operand(a11_upper, ROLE_INOUT),)))
    return Trace("potrf", n, b, (A,), tuple(invs))


def generate_trtri_trace(n: int, b: int, address_map: Optional[dict] = None) -> Trace:
    """Kernel sequence of a blocked lower-triangular in-place inversion.

    The first diagonal block needs no panel update, so step one emits trti2
    only; every later step updates its panel against the already inverted
    leading block before inverting its own diagonal block.
    """
    _check_problem(n, b)
    if address_map is None:
        address_map = default_address_map("trtri", n, b)
    _check_address_map(address_map, {"A": (n, n)})
    A = address_map["A"]

    invs = []
    idx = 0
    step = 0
    j = 0
    while j < n:
        w = min(b, n - j)
        a11_lower = Region(A, j, j, w, w, SHAPE_LOWER)
        if j > 0:
            leading = Region(A, 0, 0, j, j, SHAPE_LOWER)
            panel = Region(A, j, 0, w, j)
            invs.append(KernelInvocation(idx, step, "trmm", "RLNN", (w, j, None),
                                         (Operand(leading, ROLE_INPUT), Operand(panel, ROLE_INOUT))))
            idx += 1
            invs.append(KernelInvocation(idx, step, "trsm", "LLNN", (w, j, None),
                                         (Operand(a11_lower, ROLE_INPUT), Operand(panel, ROLE_INOUT))))
            idx += 1
        invs.append(KernelInvocation(idx, step, "trti2", "LN", (w, w, None),
                                     (Operand(a11_lower, ROLE_INOUT),)))
        idx += 1
        j += w
        step += 1
    return Trace("trtri", n, b, (A,), tuple(invs))


def generate_trace(algorithm: str, n: int, b: int, address_map: Optional[dict] = None,
                   gemm_nt_input: str = "w2") -> Trace:
    if algorithm == "geqrf":
        return generate_geqrf_trace(n, b, address_map, gemm_nt_input)
    if algorithm == "potrf":
        return generate_potrf_trace(n, b, address_map)
    if algorithm == "trtri":
        return generate_trtri_trace(n, b, address_map)
    raise TraceError(f"unknown algorithm {algorithm!r}; expected one of {ALGORITHMS}")
