"""Access-distance cache model and an exact LRU reference simulator.

The model walks a trace in order while keeping a bounded history of access
records, one or two per past invocation.  An operand's access distance is the
number of distinct other cache lines touched since the last record that
covered all of the operand's lines; relating that distance to the cache
capacity classifies the operand as in or out of cache.  ``lru_oracle`` runs
the same trace through an exact fully associative LRU cache at line
granularity and reports per-operand resident fractions, which is the ground
truth the model is validated against.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .trace import ROLE_INPUT, Region, Trace, region_to_cache_lines


@dataclass(frozen=True)
class CacheConfig:
    """Fully associative LRU cache parameters plus model knobs."""

    capacity: int = 6 * 2**20
    line_size: int = 64
    history_limit: int | None = None  # None: sized to one blocked iteration of the trace
    dedup: bool = True                # False: raw per-record line sums instead of a distinct union
    r_floor: float = -10.0            # stands in for r = -inf when an operand was never covered

    def __post_init__(self):
        if self.line_size <= 0 or self.line_size & (self.line_size - 1):
            raise ValueError("line_size must be a positive power of two")
        if self.capacity <= 0 or self.capacity % self.line_size:
            raise ValueError("capacity must be a positive multiple of line_size")
        if self.history_limit is not None and self.history_limit <= 0:
            raise ValueError("history_limit must be positive when given")
        if self.r_floor >= 0:
            raise ValueError("r_floor must be negative")

    @property
    def capacity_lines(self) -> int:
        return self.capacity // self.line_size


@dataclass(frozen=True)
class SplitPolicy:
    """Controls splitting an invocation into an input record and an output record.

    When the written operand is at most ratio_threshold times the summed size
    of the input-only operands, the written operand gets its own, more recent
    record: a small output of a large kernel is left in cache.  Tuned library
    kernels that stream results past the cache are modelled with enabled=False.
    """

    enabled: bool = True
    ratio_threshold: float = 0.1

    def __post_init__(self):
        if not 0 < self.ratio_threshold <= 1:
            raise ValueError("ratio_threshold must be in (0, 1]")


class LineSpace:
    """Dense cache-line index range covering a set of layouts.

    Line sets are cached per region, as local indices relative to the first
    line of the combined span.
    """

    def __init__(self, layouts, line_size: int):
        if not layouts:
            raise ValueError("need at least one layout")
        self.line_size = line_size
        self.first_line = min(lay.base_address // line_size for lay in layouts)
        last = max((lay.base_address + max(lay.byte_span(), 1) - 1) // line_size for lay in layouts)
        self.n_lines = int(last - self.first_line + 1)
        if self.n_lines > 64_000_000:
            raise ValueError("combined layout span is too large for the dense line map")
        self._local: dict[Region, np.ndarray] = {}

    def local_lines(self, region: Region) -> np.ndarray:
        arr = self._local.get(region)
        if arr is None:
            arr = region_to_cache_lines(region, self.line_size) - self.first_line
            arr.flags.writeable = False
            self._local[region] = arr
        return arr


@lru_cache(maxsize=32)
def _shared_space(layouts: tuple, line_size: int) -> LineSpace:
    return LineSpace(layouts, line_size)


@dataclass
class AccessRecord:
    """Lines one (part of an) invocation touched, as a mask over a LineSpace."""

    source_invocation: int
    regions: tuple
    size_lines: int
    mask: np.ndarray


class AccessHistory:
    """Bounded FIFO of access records; iteration helpers go newest-first."""

    def __init__(self, space: LineSpace, limit: int | None = None):
        self.space = space
        self.records: deque[AccessRecord] = deque(maxlen=limit)

    def newest_first(self):
        return reversed(self.records)

    def __len__(self):
        return len(self.records)


def _make_record(space: LineSpace, source: int, regions) -> AccessRecord:
    mask = np.zeros(space.n_lines, dtype=bool)
    for region in regions:
        mask[space.local_lines(region)] = True
    return AccessRecord(source, tuple(regions), int(np.count_nonzero(mask)), mask)


def push_invocation(history: AccessHistory, invocation, policy: SplitPolicy) -> AccessHistory:
    """Append the invocation's access record(s), oldest history entries falling off.

    Without splitting, the invocation becomes one record holding every operand
    region.  With splitting, small written operands of input-dominated kernels
    are pushed as a separate second record so they rank as most recent.
    """
    space = history.space
    input_regions = [op.region for op in invocation.operands if op.role == ROLE_INPUT]
    written_regions = [op.region for op in invocation.operands if op.role != ROLE_INPUT]
    if policy.enabled and input_regions and written_regions:
        out_rec = _make_record(space, invocation.index, written_regions)
        input_sum = sum(space.local_lines(r).size for r in input_regions)
        if out_rec.size_lines <= policy.ratio_threshold * input_sum:
            history.records.append(_make_record(space, invocation.index, input_regions))
            history.records.append(out_rec)
            return history
    history.records.append(_make_record(space, invocation.index, [op.region for op in invocation.operands]))
    return history


def access_distance(history: AccessHistory, operand, config: CacheConfig) -> float:
    """Distinct other cache lines touched since the operand's last full access.

    Walks the history newest-first accumulating the union of record line sets
    until the first record whose lines cover the operand's (containment; a
    partial overlap does not stop the walk).  The covering record itself is
    accumulated too, but the operand's own lines never count toward the
    distance.  Returns math.inf when no record in the history covers the
    operand.  With config.dedup off, the accumulated union is replaced by the
    raw sum of record sizes minus the operand's own line count.
    """
    assert history.space.line_size == config.line_size, "history built with a different line size"
    space = history.space
    op_idx = space.local_lines(operand.region)
    if op_idx.size == 0:
        return 0.0
    if config.dedup:
        union = np.zeros(space.n_lines, dtype=bool)
        for rec in history.newest_first():
            union |= rec.mask
            if rec.size_lines >= op_idx.size and bool(rec.mask[op_idx].all()):
                return float(np.count_nonzero(union) - op_idx.size)
    else:
        total = 0
        for rec in history.newest_first():
            total += rec.size_lines
            if rec.size_lines >= op_idx.size and bool(rec.mask[op_idx].all()):
                return float(total - op_idx.size)
    return math.inf


def relative_access_distance(distance: float, config: CacheConfig) -> float:
    """Map a line distance onto r in (-inf, 1]: positive means fits in cache."""
    if math.isinf(distance):
        return config.r_floor
    return (config.capacity - distance * config.line_size) / config.capacity


@dataclass
class OperandClassification:
    lines: int
    distance: float
    r: float


def default_history_limit(trace: Trace) -> int:
    """Records to retain: the number of kernel calls in one blocked iteration.

    Every reuse with a finite below-capacity distance in the generated traces
    reaches back less than one iteration, so longer histories only refine
    distances that already exceed the cache.
    """
    per_step: dict[int, int] = {}
    for inv in trace.invocations:
        per_step[inv.step] = per_step.get(inv.step, 0) + 1
    return max(per_step.values())


def classify_trace(trace: Trace, config: CacheConfig, policy: SplitPolicy = SplitPolicy()) -> list:
    """Per-invocation, per-operand line counts, access distances, and r values.

    Distances for an invocation are computed against the history before the
    invocation itself is pushed.
    """
    space = _shared_space(trace.layouts, config.line_size)
    floor = default_history_limit(trace)
    limit = config.history_limit if config.history_limit is not None else floor
    if limit < floor:
        raise ValueError(
            f"history_limit {limit} is below the {floor} kernel calls of one blocked iteration")
    history = AccessHistory(space, limit)
    out = []
    for inv in trace.invocations:
        per_op = []
        for op in inv.operands:
            d = access_distance(history, op, config)
            per_op.append(OperandClassification(
                lines=int(space.local_lines(op.region).size),
                distance=d,
                r=relative_access_distance(d, config),
            ))
        out.append(per_op)
        push_invocation(history, inv, policy)
    return out


def _access_ordered(invocation):
    ops = invocation.operands
    return [op for op in ops if op.role == ROLE_INPUT] + [op for op in ops if op.role != ROLE_INPUT]


def lru_oracle(trace: Trace, config: CacheConfig) -> list:
    """Exact fully associative LRU simulation at cache-line granularity.

    For every invocation, each operand's hit fraction is the share of its
    lines resident when the invocation begins; afterwards all operand lines
    are pushed to most recent, input operands first, then written operands,
    in listed order.

    A line is resident exactly when it is among the capacity/line_size most
    recently touched distinct lines, so instead of a linked stack the
    simulator keeps one last-touch timestamp per line and thresholds against
    the K-th largest timestamp.
    """
    space = _shared_space(trace.layouts, config.line_size)
    capacity_lines = config.capacity_lines
    last = np.full(space.n_lines, -1, dtype=np.int64)
    clock = 0
    n_seen = 0
    fractions = []
    for inv in trace.invocations:
        if n_seen >= capacity_lines:
            kth = space.n_lines - capacity_lines
            threshold = np.partition(last, kth)[kth]
        else:
            threshold = 0  # fewer distinct lines than capacity: everything seen is resident
        per_op = []
        for op in inv.operands:
            loc = space.local_lines(op.region)
            if loc.size == 0:
                per_op.append(1.0)
                continue
            per_op.append(float(np.count_nonzero(last[loc] >= threshold)) / loc.size)
        for op in _access_ordered(inv):
            loc = space.local_lines(op.region)
            if loc.size == 0:
                continue
            n_seen += int(np.count_nonzero(last[loc] == -1))
            last[loc] = np.arange(clock, clock + loc.size, dtype=np.int64)
            clock += loc.size
        fractions.append(per_op)
    return fractions
