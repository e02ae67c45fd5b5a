"""Acceptance gate: one check per shipped claim, one printed line per check.

Run with ``pytest tests/test_acceptance.py -v -s`` to see the PASS/FAIL lines.
Checks with a runtime budget measure their own fresh computation; the rest
share the session fixtures.
"""

import math
import random
import time

import pytest

from cachepred import (
    CacheConfig,
    MachineModel,
    SmoothingParams,
    SplitPolicy,
    blend_in_algorithm,
    classify_trace,
    evaluate,
    generate_geqrf_trace,
    generate_potrf_trace,
    generate_trace,
    generate_trtri_trace,
    lru_oracle,
    predict,
    synth_timings,
)
from cachepred.predictor import MODE_SIGN, MODE_TANH, smooth
from cachepred.timings import TimingRow, TimingTable
from cachepred.trace import region_to_cache_lines

SIGN = SmoothingParams(mode=MODE_SIGN)
TANH = SmoothingParams(alpha=4.0, beta=2.0, mode=MODE_TANH)


def report(num, name, ok, detail):
    print(f"ACCEPTANCE {num:02d} {name}: {'PASS' if ok else 'FAIL'} ({detail})")
    assert ok, f"{name}: {detail}"


def test_01_trace_fidelity():
    t0 = time.perf_counter()
    trace = generate_geqrf_trace(1568, 32)
    elapsed = time.perf_counter() - t0
    n_inv = len(trace.invocations)
    n_copy = trace.kind_counts().get("copy", 0)
    ok = n_inv == 1873 and n_copy == 1536 and elapsed < 1.0
    report(1, "trace-fidelity", ok,
           f"invocations={n_inv} copies={n_copy} elapsed={elapsed:.2f}s")


def test_02_closed_form_counts():
    rng = random.Random(42)
    checked = 0
    for _ in range(20):
        b = rng.choice([2, 4, 8, 16, 32, 64])
        n = b * rng.randint(1, 20)
        steps = n // b - 1
        assert len(generate_geqrf_trace(n, b).invocations) == steps * (7 + b) + 1, (n, b)
        assert len(generate_potrf_trace(n, b).invocations) == 3 * steps + 1, (n, b)
        assert len(generate_trtri_trace(n, b).invocations) == 3 * steps + 1, (n, b)
        checked += 1
    report(2, "closed-form-counts", checked == 20, f"{checked} random (n, b) pairs exact")


def test_03_oracle_soundness(headline_trace, headline_config, headline_classification,
                             headline_oracle):
    cap_lines = headline_config.capacity_lines
    checked = 0
    violations = 0
    for inv, ops, fracs in zip(headline_trace.invocations, headline_classification,
                               headline_oracle):
        for oc, frac in zip(ops, fracs):
            if math.isinf(oc.distance) or oc.distance + oc.lines > cap_lines:
                continue
            checked += 1
            violations += frac != 1.0
    ok = violations == 0 and checked == 3537
    report(3, "oracle-soundness", ok,
           f"{checked} covered below-capacity operands, {violations} not fully resident")


def test_04_model_oracle_agreement():
    t0 = time.perf_counter()
    trace = generate_geqrf_trace(1568, 32)
    config = CacheConfig()
    classification = classify_trace(trace, config, SplitPolicy(enabled=True))
    fractions = lru_oracle(trace, config)
    agree = 0
    total = 0
    for inv, ops, fracs in zip(trace.invocations, classification, fractions):
        if inv.kind == "copy":
            continue
        for oc, frac in zip(ops, fracs):
            total += 1
            agree += (oc.r >= 0) == (frac >= 0.5)
    elapsed = time.perf_counter() - t0
    rate = agree / total
    ok = rate >= 0.90 and elapsed < 30.0
    report(4, "model-oracle-agreement", ok,
           f"{agree}/{total} = {rate:.2%} on non-copy operands, elapsed={elapsed:.1f}s")


def test_05_splitting_correction(headline_trace, headline_config, headline_classification):
    cap_lines = headline_config.capacity_lines
    no_split = classify_trace(headline_trace, headline_config, SplitPolicy(enabled=False))

    flip_steps = []
    for inv in headline_trace.invocations:
        if inv.kernel_key() != "gemm_TN":
            continue
        input_lines = sum(region_to_cache_lines(op.region, headline_config.line_size).size
                          for op in inv.operands if op.role == "input")
        if input_lines > cap_lines:
            flip_steps.append(inv.step)

    exact = flip_steps == list(range(21))
    for inv, ops_on, ops_off in zip(headline_trace.invocations, headline_classification,
                                    no_split):
        if inv.kernel_key() != "trmm_RUNN" or inv.step not in flip_steps:
            continue
        exact = exact and ops_off[1].r < 0 and ops_on[1].r >= 0
    span = f"{flip_steps[0]}..{flip_steps[-1]}" if flip_steps else "none"
    report(5, "splitting-correction", exact,
           f"steps {span}: written operand out-of-cache unsplit, in-cache split")


def first_all_in_step(trace, include, in_cache):
    """First step whose included operands are all in-cache; (step, first index)."""
    per_step = {}
    for inv in trace.invocations:
        ops_ok = [in_cache(inv.index, k) for k in range(len(inv.operands))
                  if include(inv.index, k)]
        step_ok, first = per_step.get(inv.step, (True, inv.index))
        per_step[inv.step] = (step_ok and all(ops_ok), min(first, inv.index))
    for step in sorted(per_step):
        ok, first = per_step[step]
        if ok:
            return step, first
    return None, None


def test_06_transition_window(headline_trace, headline_classification, headline_oracle):
    cls = headline_classification

    def covered(i, k):
        return not math.isinf(cls[i][k].distance)

    model_step, model_first = first_all_in_step(
        headline_trace, covered, lambda i, k: cls[i][k].r >= 0)
    oracle_step, oracle_first = first_all_in_step(
        headline_trace, covered, lambda i, k: headline_oracle[i][k] >= 0.5)
    ok = (model_step == oracle_step == 23
          and 700 <= model_first <= 1100 and 700 <= oracle_first <= 1100)
    report(6, "transition-window", ok,
           f"model step {model_step} at invocation {model_first}, "
           f"oracle step {oracle_step} at invocation {oracle_first}")


def test_07_error_ordering():
    t0 = time.perf_counter()
    trace = generate_geqrf_trace(1568, 32)
    config = CacheConfig(capacity=1_572_864)
    machine = MachineModel(peak_flops_per_cycle=16.0, cache_bw_bytes_per_cycle=64.0,
                           mem_bw_bytes_per_cycle=0.5, kernel_overhead_cycles=2_000_000.0)
    table = blend_in_algorithm(synth_timings(trace, machine), trace,
                               lru_oracle(trace, config))

    split_on = classify_trace(trace, config, SplitPolicy(enabled=True))
    split_off = classify_trace(trace, config, SplitPolicy(enabled=False))
    errors = {
        "basic": evaluate(predict(trace, split_off, table, SIGN), table).mean_abs_rel_error,
        "sign": evaluate(predict(trace, split_on, table, SIGN), table).mean_abs_rel_error,
        "tanh": evaluate(predict(trace, split_on, table, TANH), table).mean_abs_rel_error,
    }
    elapsed = time.perf_counter() - t0
    ok = (errors["basic"] > errors["sign"] >= errors["tanh"] - 1e-9
          and elapsed < 60.0)
    report(7, "error-ordering", ok,
           f"basic={errors['basic']:.5f} > sign={errors['sign']:.5f} >= "
           f"tanh={errors['tanh']:.5f}, elapsed={elapsed:.1f}s")


def test_08_prediction_bounds():
    cases = [("geqrf", 96, 32, 32 * 1024), ("geqrf", 320, 32, 256 * 1024),
             ("potrf", 320, 32, 64 * 1024), ("trtri", 320, 32, 64 * 1024)]
    checked = 0
    violations = 0
    for algorithm, n, b, capacity in cases:
        trace = generate_trace(algorithm, n, b)
        table = synth_timings(trace)
        config = CacheConfig(capacity=capacity)
        classification = classify_trace(trace, config)
        for params in (SIGN, TANH):
            for pred in predict(trace, classification, table, params):
                row = table.rows[pred.invocation_index]
                checked += 1
                lo, hi = min(row.t_ic, row.t_ooc), max(row.t_ic, row.t_ooc)
                violations += not (lo <= pred.t_pred <= hi)
    report(8, "prediction-bounds", violations == 0,
           f"{checked} predictions within [t_ic, t_ooc], {violations} outside")


def test_09_smoothing_function(headline_trace, headline_classification):
    grid = [x / 8 for x in range(-88, 9)]
    vals = [smooth(r, TANH) for r in grid]
    # strict |f| < 1 is only representable before float64 tanh saturates
    narrow = [smooth(x / 8, TANH) for x in range(-32, 9)]
    props = (smooth(0.0, TANH) == 0.0
             and all(a <= b for a, b in zip(vals, vals[1:]))
             and all(-1.0 <= v <= 1.0 for v in vals)
             and all(-1.0 < v < 1.0 for v in narrow))

    min_abs_r = min(abs(op.r) for ops in headline_classification for op in ops)
    table = synth_timings(headline_trace)
    steep = SmoothingParams(alpha=1e3, beta=1e3, mode=MODE_TANH)
    sign_preds = predict(headline_trace, headline_classification, table, SIGN)
    steep_preds = predict(headline_trace, headline_classification, table, steep)
    worst = max(abs(a.t_pred - b.t_pred) / b.t_pred
                for a, b in zip(steep_preds, sign_preds))
    ok = props and min_abs_r >= 0.01 and worst < 1e-6
    report(9, "smoothing-function", ok,
           f"min |r|={min_abs_r:.4f}, steep-tanh vs sign max rel diff={worst:.2e}")


def test_10_metric_correctness():
    from cachepred.predictor import Prediction

    def pred(idx, t):
        return Prediction(idx, t, 0.5, ())

    ref = TimingTable([TimingRow("gemm", "TN", 1.0, 10.0, 100.0),
                       TimingRow("trmm", "RLNU", 1.0, 10.0, 50.0),
                       TimingRow("copy", "", 1.0, 10.0, 1.0)])
    exact = evaluate([pred(0, 100.0), pred(1, 50.0), pred(2, 4.0)], ref)
    tenth = evaluate([pred(0, 110.0), pred(1, 55.0), pred(2, 9.0)], ref)
    mixed = evaluate([pred(0, 102.0), pred(1, 48.0), pred(2, 6.0)], ref)
    ok = (exact.mean_abs_rel_error == 0.0
          and tenth.mean_abs_rel_error == pytest.approx(0.10)
          and mixed.mean_abs_rel_error == pytest.approx(0.03)
          and exact.n_used == 2 and "copy" not in mixed.per_kernel)
    report(10, "metric-correctness", ok,
           f"means {exact.mean_abs_rel_error:.2f}/{tenth.mean_abs_rel_error:.2f}/"
           f"{mixed.mean_abs_rel_error:.2f} over non-copy rows")
