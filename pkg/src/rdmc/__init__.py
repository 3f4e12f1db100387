"""Counterfactual regression curves between two regression-discontinuity cutoffs.

The package estimates the two potential-outcome regressions g_0(x), g_1(x)
and their difference tau(x) on the interval between a lower cutoff (group 0)
and a higher one (group 1), where treated and untreated units coexist.  The
main estimator augments inverse-probability weighting with an outcome
regression and stays consistent when either nuisance model, but not both, is
misspecified.
"""

from __future__ import annotations

__version__ = "0.1.0"

from .bandwidth import BandwidthSearch, BandwidthSelection, LscvScore, lscv_score, select_bandwidth
from .data import (
    ColumnSchema,
    Dataset,
    Finding,
    TargetOutcome,
    Thresholds,
    UnitRecord,
    load_dataset,
    region_census,
    validate,
    write_dataset,
)
from .estimators import (
    Curve,
    EstimatorMethod,
    default_grid,
    estimate_curve,
    local_linear_solve,
    loo_estimate,
    pseudo_outcome,
)
from .inference import (
    Band,
    DensityEstimate,
    EffectCurve,
    confidence_band,
    dr_variance,
    effect_curve,
    kde_fit,
)
from .kernels import kernel_constants, kernel_value, scaled_kernel_weight
from .nuisance import (
    FeatureSpec,
    OutcomeFit,
    PropensityFit,
    fit_outcome,
    fit_propensity,
    predict_outcome,
    predict_propensity,
)
from .simulation import (
    BenchmarkCell,
    BenchmarkReport,
    SimConfig,
    generate,
    integrated_squared_error,
    run_benchmark,
    table1_cells,
    table2_cells,
    true_curve,
    x_density,
)
from .threshold import CostSpec, ThresholdResult, net_benefit, optimize_threshold

__all__ = [name for name in dir() if not name.startswith("_")]
