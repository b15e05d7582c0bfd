"""Goodness-of-fit tests for parametric regression against shape-restricted cones.

The null hypothesis is that the mean vector lies in a linear space ``S``
(constants, lines, quadratics, linear models).  The alternative is a family
of closed convex cones containing ``S``, typically a cone and its negation
(increasing/decreasing, convex/concave).  The statistic compares the cone
projections with the projection onto ``S`` and its null distribution is
simulated exactly for known error laws or by a residual bootstrap.
"""

from .builders import (
    NULL_KINDS,
    PartialOrderSpec,
    build_additive,
    build_convex,
    build_monotone,
    build_orientation_family,
    build_partial_order,
    build_third_derivative,
    cone_for_predictor,
    residualize,
)
from .cones import (
    ConeSpec,
    RankDeficientError,
    ValidationReport,
    compute_generators,
    negate_cone,
    null_space_basis,
    validate_assumptions,
)
from .convex_multi import (
    ConvergenceError,
    ConvexFit,
    default_lipschitz,
    fit_concave,
    fit_convex,
    simulate_null_affine_multid,
    statistic_affine_multid,
    test_affine_multid,
)
from .data import ingest_csv
from .engine import (
    Dataset,
    NullDistribution,
    TestOutcome,
    critical_value,
    p_value,
    run_test,
    simulate_null_bootstrap,
    simulate_null_knownG,
    statistic_T,
)
from .extensions import (
    WhitenedProblem,
    build_partial_linear,
    collapse_duplicates,
    test_additive,
    test_constant_multid,
    test_partial_linear,
    whiten,
)
from .projection import (
    NonConvergenceError,
    ProjectionResult,
    nnls_active_set,
    project_cone,
    project_cone_bruteforce,
    project_isotonic_pava,
    project_subspace,
)
from .scenarios import SCENARIOS, ExperimentSpec, PowerStudyResult, run_power_study

__version__ = "0.1.0"

__all__ = [
    "NULL_KINDS",
    "SCENARIOS",
    "ConeSpec",
    "ConvergenceError",
    "ConvexFit",
    "Dataset",
    "ExperimentSpec",
    "NonConvergenceError",
    "NullDistribution",
    "PartialOrderSpec",
    "PowerStudyResult",
    "ProjectionResult",
    "RankDeficientError",
    "TestOutcome",
    "ValidationReport",
    "WhitenedProblem",
    "build_additive",
    "build_convex",
    "build_monotone",
    "build_orientation_family",
    "build_partial_linear",
    "build_partial_order",
    "build_third_derivative",
    "collapse_duplicates",
    "compute_generators",
    "cone_for_predictor",
    "critical_value",
    "default_lipschitz",
    "fit_concave",
    "fit_convex",
    "ingest_csv",
    "negate_cone",
    "nnls_active_set",
    "null_space_basis",
    "p_value",
    "project_cone",
    "project_cone_bruteforce",
    "project_isotonic_pava",
    "project_subspace",
    "residualize",
    "run_power_study",
    "run_test",
    "simulate_null_affine_multid",
    "simulate_null_bootstrap",
    "simulate_null_knownG",
    "statistic_T",
    "statistic_affine_multid",
    "test_additive",
    "test_affine_multid",
    "test_constant_multid",
    "test_partial_linear",
    "validate_assumptions",
    "whiten",
]
