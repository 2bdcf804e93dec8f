"""Cross-validated kernel ensembles with a score test for group interaction."""

from .ensemble import compute_weights, weights_avg, weights_exp, weights_stack
from .errors import CvekError, DataError, NumericalError, UsageError
from .estimator import (
    BaseFit,
    EnsembleFit,
    ensemble_kernel,
    ensemble_matrix,
    estimate_noise,
    estimate_ridge,
    fit_base_kernels,
    fit_null,
)
from .hypothesis import (
    NullModel,
    TestResult,
    additive_null_grams,
    asymptotic_pvalue,
    bootstrap_pvalue,
    build_null_model,
    interaction_matrix,
    run_test,
    satterthwaite_null,
    test_statistic,
)
from .kernels import (
    FeatureMatrix,
    GramMatrix,
    KernelSpec,
    eval_kernel,
    gram_matrix,
    interaction_gram,
    normalize_trace,
    spec_from_dict,
    standardize,
)
from .simulation import (
    Scenario,
    ScenarioResult,
    generate_data,
    run_scenario,
    scenario_grid,
)
from .tuning import (
    KernelEigen,
    criterion_value,
    default_lambda_grid,
    loo_residuals,
    select_lambda,
    smoother_matrix,
)

__version__ = "0.1.0"

__all__ = [
    "BaseFit",
    "CvekError",
    "DataError",
    "EnsembleFit",
    "FeatureMatrix",
    "GramMatrix",
    "KernelEigen",
    "KernelSpec",
    "NullModel",
    "NumericalError",
    "Scenario",
    "ScenarioResult",
    "TestResult",
    "UsageError",
    "additive_null_grams",
    "asymptotic_pvalue",
    "bootstrap_pvalue",
    "build_null_model",
    "compute_weights",
    "criterion_value",
    "default_lambda_grid",
    "ensemble_kernel",
    "ensemble_matrix",
    "estimate_noise",
    "estimate_ridge",
    "eval_kernel",
    "fit_base_kernels",
    "fit_null",
    "generate_data",
    "gram_matrix",
    "interaction_gram",
    "interaction_matrix",
    "loo_residuals",
    "normalize_trace",
    "run_scenario",
    "run_test",
    "satterthwaite_null",
    "scenario_grid",
    "select_lambda",
    "smoother_matrix",
    "spec_from_dict",
    "standardize",
    "test_statistic",
    "weights_avg",
    "weights_exp",
    "weights_stack",
]
