"""seqwatch: direction-invariant sequential change detection for
cross-sectionally dependent Gaussian panels.

Online EWMA / MA / CUSUM / likelihood-ratio-scan / Shiryayev-Roberts
charts, closed-form and quadrature run-length design, and a reproducible
Monte-Carlo engine with compiled kernels (pure-Python fallback).
"""

__version__ = "0.1.0"

from ._backend import backend_name
from .charts import (ChartConfig, ChartState, StepOutcome, adaptive_step,
                     cusum_recursive_step, cusum_windowed_step, ewma_step,
                     glrt_step, ma_step, new_state, reset, sr_step, step)
from .covariance import (CovModel, build_model, dense, marginal_variance,
                         quad_form, sample_shock, sample_shock_block)
from .design import (CONSTANTS, INEFFICIENT, CalibrationError,
                     DesignConstants, DesignResult, arl0_glrt, arl0_mcusum,
                     arl0_mewma, arl0_mma, calibrate_by_simulation,
                     design_mma, glrt_tail_integral, kstar_cstar,
                     optimal_mewma, saddt_glrt, saddt_mcusum, saddt_mewma,
                     saddt_mma, solve_glrt_threshold, solve_mcusum_threshold,
                     solve_mewma_threshold, solve_mma_threshold,
                     sr_thresholds)
from .simulate import (CSV_COLUMNS, MeanPattern, Scenario, Summary,
                       estimate_arl0, estimate_detection, harmonic, k_sparse,
                       reproduce_table, run_once, single_channel, uniform)

__all__ = [
    "__version__", "backend_name",
    "CovModel", "build_model", "quad_form", "sample_shock",
    "sample_shock_block", "dense", "marginal_variance",
    "ChartConfig", "ChartState", "StepOutcome", "new_state", "reset", "step",
    "ewma_step", "ma_step", "cusum_windowed_step", "cusum_recursive_step",
    "glrt_step", "sr_step", "adaptive_step",
    "DesignConstants", "DesignResult", "CONSTANTS", "INEFFICIENT",
    "CalibrationError", "arl0_mewma", "solve_mewma_threshold",
    "optimal_mewma", "saddt_mewma", "kstar_cstar", "arl0_mma",
    "solve_mma_threshold", "design_mma", "saddt_mma", "arl0_mcusum",
    "solve_mcusum_threshold", "saddt_mcusum", "arl0_glrt",
    "solve_glrt_threshold", "saddt_glrt", "glrt_tail_integral",
    "sr_thresholds", "calibrate_by_simulation",
    "MeanPattern", "Scenario", "Summary", "single_channel", "uniform",
    "k_sparse", "harmonic", "run_once", "estimate_arl0",
    "estimate_detection", "reproduce_table", "CSV_COLUMNS",
]
