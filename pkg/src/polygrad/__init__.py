"""Stochastic gradient methods with polynomially weighted gradient averaging.

The package bundles the weighted-averaging accelerated method and its
baselines (plain SG, heavy-ball SGM, uniform gradient averaging, iterate
averaging, SVRG), strongly convex test objectives with exact constants and
minimizers, stepsize schedules with validity checking, empirical rate and
variance diagnostics, and exact-vs-leading-order checks for the gamma
function machinery behind the rate analysis.
"""

__version__ = "0.1.0"

from .asymptotics import AbkParams, check_leading_order, gamma_ratio
from .core import (
    ConfigError,
    DataError,
    ProblemInstance,
    RngStream,
    SmoothnessConstants,
    Trace,
    UsageError,
    log_checkpoints,
    record,
)
from .diagnostics import (
    KappaEstimate,
    RateFit,
    TrialAggregate,
    aggregate,
    estimate_kappa,
    fit_direction_variance,
    fit_rate,
)
from .objectives import (
    FiniteSumLeastSquares,
    LogisticL2Problem,
    NoiseModel,
    QuadraticProblem,
    initial_point,
    make_least_squares,
    make_logistic,
    make_quadratic,
    shipped_problems,
)
from .optimizers import init_state, svrg_rho, weights
from .runner import MethodSpec, RunSettings, run_experiment
from .schedules import DecaySchedule, FixedStepsize, ValidityReport, validate

__all__ = [
    "AbkParams",
    "ConfigError",
    "DataError",
    "DecaySchedule",
    "FiniteSumLeastSquares",
    "FixedStepsize",
    "KappaEstimate",
    "LogisticL2Problem",
    "MethodSpec",
    "NoiseModel",
    "ProblemInstance",
    "QuadraticProblem",
    "RateFit",
    "RngStream",
    "RunSettings",
    "SmoothnessConstants",
    "Trace",
    "TrialAggregate",
    "UsageError",
    "ValidityReport",
    "aggregate",
    "check_leading_order",
    "estimate_kappa",
    "fit_direction_variance",
    "fit_rate",
    "gamma_ratio",
    "init_state",
    "initial_point",
    "log_checkpoints",
    "make_least_squares",
    "make_logistic",
    "make_quadratic",
    "record",
    "run_experiment",
    "shipped_problems",
    "svrg_rho",
    "validate",
    "weights",
    "__version__",
]
