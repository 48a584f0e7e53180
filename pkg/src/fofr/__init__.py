"""Function-on-function linear regression with sup-norm bootstrap inference.

Penalized RKHS estimation of the slope surface linking predictor curves to
response curves, with multiplier-bootstrap simultaneous confidence regions,
classical and relevant hypothesis tests, prediction bands, and a Monte Carlo
study harness.
"""

from .core import (
    CovarianceEstimate,
    Curve,
    FunctionalSample,
    Grid,
    Surface,
    center_sample,
    empirical_covariance,
    l2_inner,
    make_grid,
    metrics,
)
from .eigensystem import (
    EigenSystem,
    cosine_basis,
    diagonalization_residual,
    estimate_exponents,
    penalty_operator,
    solve_eigensystem,
    thin_plate_energy,
)
from .estimator import (
    FittedModel,
    MultiplierWeights,
    ScalarFittedModel,
    ScoreDecomposition,
    assemble_surface,
    compute_scores,
    compute_scores_scalar,
    default_lambda_grid,
    fit,
    fit_scalar,
    gcv_score,
    ridge_solve,
    sample_multipliers,
    select_lambda,
)
from .inference import (
    BandResult,
    BootstrapEnsemble,
    ExtremalMasks,
    TestResult,
    bootstrap_ensemble,
    bootstrap_ensemble_scalar,
    bootstrap_quantile,
    classical_test_bt,
    extremal_sets,
    plrt,
    pointwise_interval,
    prediction_band,
    relevant_test,
    relevant_test_scalar,
    simultaneous_region,
)
from .regression import FunctionOnFunctionRegression, ScalarOnFunctionRegression
from .simulation import (
    DgpSpec,
    MonteCarloReport,
    default_truncation,
    dgp_beta,
    dgp_predictors,
    error_curves,
    generate_dataset,
    noise_variances,
    run_coverage_study,
    run_estimation_study,
    run_power_study,
)

__version__ = "0.1.0"
