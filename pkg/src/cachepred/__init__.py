"""Cache-aware runtime prediction for blocked dense linear algebra kernels.

The package generates kernel invocation traces for blocked one-sided
factorizations, classifies each operand as in- or out-of-cache from access
distances over the trace history, and blends in-context / out-of-context
kernel timings into per-invocation runtime predictions.
"""

from .cachemodel import (AccessHistory, AccessRecord, CacheConfig, LineSpace,
                         OperandClassification, SplitPolicy, access_distance,
                         classify_trace, default_history_limit, lru_oracle,
                         push_invocation, relative_access_distance)
from .predictor import (MODE_SIGN, MODE_TANH, MODES, Prediction,
                        PredictionError, SmoothingParams, in_cache_fraction,
                        pipeline, predict, smooth)
from .timings import (ErrorReport, MachineModel, TimingError, TimingRow,
                      TimingTable, blend_in_algorithm, evaluate,
                      invocation_bytes, invocation_flops, load_timings,
                      save_timings, synth_timings)
from .trace import (ALGORITHMS, KernelInvocation, MatrixLayout, Operand,
                    Region, Trace, TraceError, default_address_map,
                    generate_geqrf_trace, generate_potrf_trace, generate_trace,
                    generate_trtri_trace, region_to_cache_lines)

__version__ = "0.1.0"

__all__ = [
    "ALGORITHMS", "MODES", "MODE_SIGN", "MODE_TANH",
    "AccessHistory", "AccessRecord", "CacheConfig", "ErrorReport",
    "KernelInvocation", "LineSpace", "MachineModel", "MatrixLayout",
    "Operand", "OperandClassification", "Prediction", "PredictionError",
    "Region", "SmoothingParams", "SplitPolicy", "TimingError", "TimingRow",
    "TimingTable", "Trace", "TraceError",
    "access_distance", "blend_in_algorithm", "classify_trace",
    "default_address_map", "default_history_limit", "evaluate",
    "generate_geqrf_trace", "generate_potrf_trace", "generate_trace",
    "generate_trtri_trace", "in_cache_fraction", "invocation_bytes",
    "invocation_flops", "load_timings", "lru_oracle", "pipeline", "predict",
    "push_invocation", "region_to_cache_lines", "relative_access_distance",
    "save_timings", "smooth", "synth_timings",
]
