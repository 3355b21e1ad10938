"""Error bounds for projectors onto noisy column spans, with a Monte Carlo harness."""

from .bounds import (
    BoundReport,
    bound_assumption,
    check_assumption_e1,
    choose_alpha,
    eigen_control_checks,
    event_delta,
    regularized_bound,
    regularized_skeleton_combine,
    skeleton_combine,
    skeleton_terms,
    theoretical_bound,
    trace_trick,
)
from .concentration import (
    event_threshold,
    laurent_massart_bound,
    vershynin_gram_bound,
    vershynin_rows_bound,
    vershynin_singular_bounds,
)
from .errors import (
    AssumptionViolatedError,
    ConfigError,
    DegenerateInputError,
    InvalidInputError,
    InvalidParameterError,
    NumericalFailure,
    RankDeficiencyError,
)
from .harness import ExperimentConfig, coverage_report, run_experiment
from .matrix_core import (
    SubspaceBasis,
    principal_angles,
    projection_distance,
    projector,
    projector_difference_norm,
    regularized_projector,
)
from .noise_scenarios import Scenario1, Scenario2, Scenario3, Scenario4, noise_psi, sample_noise, scenario4_column_covariances
from .pls import LinearModelInstance, nipals_weights, pls_bound

__version__ = "0.1.0"
