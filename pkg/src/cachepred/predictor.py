"""Runtime prediction from per-operand cache classifications.

Each operand's relative access distance r is squashed into an in-cache
fraction phi; the invocation's blend weight is the size-weighted mean of its
operands' phi values, and the predicted time interpolates between the
in-cache and out-of-cache timing of the kernel.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .cachemodel import CacheConfig, SplitPolicy, classify_trace
from .trace import Trace

MODE_SIGN = "sign"
MODE_TANH = "tanh"
MODES = (MODE_SIGN, MODE_TANH)


class PredictionError(ValueError):
    """Prediction inputs are inconsistent with the trace."""


@dataclass(frozen=True)
class SmoothingParams:
    """Piecewise squashing of r: slope alpha on the in-cache side (r >= 0),
    slope beta on the out-of-cache side; sign mode is the hard step."""

    alpha: float = 4.0
    beta: float = 2.0
    mode: str = MODE_TANH

    def __post_init__(self):
        if self.alpha <= 0 or self.beta <= 0:
            raise ValueError("alpha and beta must be positive")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")


def smooth(r: float, params: SmoothingParams) -> float:
    """f(r) in [-1, 1]; f(0) = 0 in tanh mode, +1 in sign mode (ties in-cache)."""
    if params.mode == MODE_SIGN:
        return 1.0 if r >= 0.0 else -1.0
    scale = params.alpha if r >= 0.0 else params.beta
    return math.tanh(scale * r)


def in_cache_fraction(r: float, params: SmoothingParams) -> float:
    return (1.0 + smooth(r, params)) / 2.0


@dataclass
class Prediction:
    invocation_index: int
    t_pred: float
    w: float                 # in-cache weight of the whole invocation
    per_operand: tuple       # (r, phi) per operand, in listed order
    degenerate: bool = False  # no operand bytes; w pinned to 1


def predict(trace: Trace, classification: list, timings, params: SmoothingParams = SmoothingParams()) -> list:
    """Blend per-invocation timings using the classification.

    ``timings`` must hold one row per invocation, keyed by position.  The
    prediction always lies between the row's two timings because w is a convex
    weight.
    """
    rows = timings.rows
    preds = []
    for inv, ops in zip(trace.invocations, classification):
        if inv.index >= len(rows):
            raise PredictionError(f"no timing row for invocation {inv.index}")
        row = rows[inv.index]
        per = tuple((op.r, in_cache_fraction(op.r, params)) for op in ops)
        total_lines = sum(op.lines for op in ops)
        degenerate = total_lines == 0
        if degenerate:
            w = 1.0
        else:
            w = sum(op.lines * phi for op, (_, phi) in zip(ops, per)) / total_lines
        t_pred = w * row.t_ic + (1.0 - w) * row.t_ooc
        preds.append(Prediction(inv.index, t_pred, w, per, degenerate))
    return preds


def pipeline(trace: Trace, timings, config: CacheConfig = CacheConfig(),
             policy: SplitPolicy = SplitPolicy(), params: SmoothingParams = SmoothingParams()) -> list:
    """classify_trace followed by predict."""
    classification = classify_trace(trace, config, policy)
    return predict(trace, classification, timings, params)
