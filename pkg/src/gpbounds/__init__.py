"""Bounds of expensive black-box responses over interval inputs.

A response known only through a deterministic simulator, with inputs given as
intervals, has a lower and an upper bound over the input box.  This package
estimates both bounds with a small number of simulator runs by fitting a
Gaussian-process surrogate and letting acquisition functions pick each next
evaluation, and reports every estimate with a confidence interval plus
post-hoc quality metrics.  Exhaustive vertex/subinterval baselines and two
built-in benchmark models are included for validation.
"""

from .acquisition import (
    AcquisitionKind,
    AcquisitionResult,
    Direction,
    StoppingPolicy,
    confidence_bound,
    expected_improvement,
    maximize_af,
    probability_of_improvement,
    stopping_check,
)
from .baselines import BaselineResult, monotonicity_sweep, subinterval_method, vertex_method
from .design import (
    DesignMatrix,
    IntervalBox,
    map_levels,
    partition_1d,
    scale,
    taguchi_array,
    test_grid,
    unscale,
)
from .errors import (
    BudgetError,
    ConfigError,
    EvaluationError,
    FittingError,
    GpBoundsError,
    NumericalError,
    UnsupportedDesignError,
)
from .gp import (
    FittedGp,
    KernelHyperparams,
    Prediction,
    TrainingSet,
    build_covariance,
    condition,
    fit_hyperparameters,
    kernel_eval,
    log_marginal_likelihood,
    lml_gradient,
    predict,
    predict_batch,
)
from .models import (
    CachedBlackbox,
    EvaluationCache,
    EvaluationRecord,
    SdofParams,
    SubprocessBlackbox,
    sdof_max_abs_acceleration,
    synthetic_4d,
    transition_matrix_step,
)
from .solver import (
    BoundEstimate,
    RunReport,
    SatisfactionReport,
    compare_to_reference,
    estimate_bounds,
    evaluate_initial,
    metric1,
    metric2,
    run_approach_a,
    run_approach_b,
)

__version__ = "0.1.0"
