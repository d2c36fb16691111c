"""Optimizer state types and step functions.

Methods: the polynomially weighted gradient averaging method ("accel"),
plain SG, heavy-ball SGM, uniform gradient averaging, iterate averaging,
and SVRG. All step functions share the signature

    step(state, problem, stepsizes, rng) -> state

where `stepsizes` is a DecaySchedule or FixedStepsize (SGM and SVRG carry
their fixed alpha in the state and ignore it). States are mutated in
place and returned. After a step, `state.m` holds the search direction
used, so one step moved the iterate by alpha_k * m (SGM records its
normalized direction instead of the raw displacement; see sgm_step).

Update ordering inside each step matches the trial kernels in _kernels
elementwise, so a generic loop over these functions reproduces the fast
path bit for bit on the quadratic problems.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy.random import Generator

from .core import ConfigError, ProblemInstance, UsageError
from .schedules import DecaySchedule

METHOD_IDS = ("accel", "sg", "sgm", "gradavg", "iteravg", "svrg")


def weights(k: int, p: float) -> np.ndarray:
    """Normalized averaging weights w_j = j^p / sum_{i<=k} i^p.

    Computed from (j/k)^p so no intermediate overflows for large p; the
    weights sum to 1 within 1e-12.
    """
    if k < 1:
        raise UsageError("k must be >= 1")
    if p < 0.0:
        raise UsageError("p must be nonnegative")
    w = (np.arange(1, k + 1, dtype=np.float64) / k) ** p
    return w / w.sum()


def _require_valid(stepsizes) -> None:
    if isinstance(stepsizes, DecaySchedule) and not stepsizes.valid:
        raise ConfigError(
            "schedule fails its validity constraints; refusing to step:\n"
            + stepsizes.constraint_report.describe(stepsizes.s, stepsizes.sigma)
        )


@dataclass
class AcceleratedState:
    """Recursive form of the weighted-average direction.

    v accumulates -sum_i (i/k)^p g_i through v <- ((k-1)/k)^p v - g, and
    beta_k = sum_i (i/k)^p through the stable recurrence
    beta_k <- beta_{k-1} ((k-1)/k)^p + 1. At k = 1 the factor is 0^p = 0,
    so v_1 = -g_1 no matter how v was initialized; beta_1 = 1 and the
    first step coincides with plain SG.
    """

    x: np.ndarray
    p: float
    v: np.ndarray = None
    beta_k: float = 0.0
    k: int = 0
    m: np.ndarray = None

    def __post_init__(self):
        if self.p < 0.0:
            raise UsageError("p must be nonnegative")
        self.x = np.asarray(self.x, dtype=np.float64).copy()
        if self.v is None:
            self.v = np.zeros_like(self.x)

    def record_point(self) -> np.ndarray:
        return self.x


def accel_step(state: AcceleratedState, problem, stepsizes, rng: Generator):
    _require_valid(stepsizes)
    k = state.k + 1
    g = problem.stochastic_gradient(state.x, rng)
    c = ((k - 1) / k) ** state.p
    state.v = c * state.v - g
    state.beta_k = state.beta_k * c + 1.0
    m = state.v / state.beta_k
    state.x = state.x + stepsizes.alpha(k) * m
    state.m = m
    state.k = k
    return state


@dataclass
class SgState:
    x: np.ndarray
    k: int = 0
    m: np.ndarray = None

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=np.float64).copy()

    def record_point(self) -> np.ndarray:
        return self.x


def sg_step(state: SgState, problem, stepsizes, rng: Generator):
    _require_valid(stepsizes)
    k = state.k + 1
    g = problem.stochastic_gradient(state.x, rng)
    m = -g
    state.x = state.x + stepsizes.alpha(k) * m
    state.m = m
    state.k = k
    return state


@dataclass
class SgmState:
    """Heavy ball: x_{k+1} = x_k - alpha g_k + beta (x_k - x_{k-1}).

    The x_0 := x_1 convention makes the first displacement -alpha g_1.
    `u` is the exponentially weighted gradient sum u_k = beta u_{k-1} +
    g_k and `bpow` tracks beta^k, so the recorded direction is the
    normalized weighted average m = -(1 - beta) u_k / (1 - beta^k) whose
    across-seed variance plateaus at a level proportional to
    (1 - beta) / (1 + beta) instead of decaying.
    """

    x: np.ndarray
    alpha: float
    beta: float
    u: np.ndarray = None
    dx: np.ndarray = None
    bpow: float = 1.0
    k: int = 0
    m: np.ndarray = None

    def __post_init__(self):
        if not (0.0 <= self.beta < 1.0):
            raise ConfigError(f"sgm needs beta in [0, 1), got {self.beta}")
        if self.alpha <= 0.0:
            raise ConfigError("sgm needs alpha > 0")
        self.x = np.asarray(self.x, dtype=np.float64).copy()
        if self.u is None:
            self.u = np.zeros_like(self.x)
        if self.dx is None:
            self.dx = np.zeros_like(self.x)

    def record_point(self) -> np.ndarray:
        return self.x


def sgm_step(state: SgmState, problem, stepsizes, rng: Generator):
    g = problem.stochastic_gradient(state.x, rng)
    state.u = state.beta * state.u + g
    state.bpow = state.bpow * state.beta
    state.dx = state.beta * state.dx - state.alpha * g
    state.x = state.x + state.dx
    state.m = state.u * (-(1.0 - state.beta) / (1.0 - state.bpow))
    state.k += 1
    return state


@dataclass
class GradAvgState:
    """Uniform gradient averaging: x <- x - (alpha_k / k) sum_{i<=k} g_i."""

    x: np.ndarray
    gsum: np.ndarray = None
    k: int = 0
    m: np.ndarray = None

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=np.float64).copy()
        if self.gsum is None:
            self.gsum = np.zeros_like(self.x)

    def record_point(self) -> np.ndarray:
        return self.x


def gradavg_step(state: GradAvgState, problem, stepsizes, rng: Generator):
    _require_valid(stepsizes)
    k = state.k + 1
    g = problem.stochastic_gradient(state.x, rng)
    state.gsum = state.gsum + g
    m = -(state.gsum / k)
    state.x = state.x + stepsizes.alpha(k) * m
    state.m = m
    state.k = k
    return state


@dataclass
class IterateAvgState:
    """Plain SG with the running iterate mean as the estimator.

    After k steps, xbar = (x_1 + ... + x_k) / k exactly (the sum is
    accumulated pre-step, in index order). record_point() returns the
    average including the current iterate, so recording at index k before
    step k yields the mean of x_1 .. x_k.
    """

    x: np.ndarray
    sbar: np.ndarray = None
    k: int = 0
    m: np.ndarray = None

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=np.float64).copy()
        if self.sbar is None:
            self.sbar = np.zeros_like(self.x)

    @property
    def xbar(self) -> np.ndarray:
        if self.k < 1:
            raise UsageError("xbar undefined before the first step")
        return self.sbar / self.k

    def record_point(self) -> np.ndarray:
        return (self.sbar + self.x) / (self.k + 1)


def iterate_avg_step(state: IterateAvgState, problem, stepsizes, rng: Generator):
    _require_valid(stepsizes)
    k = state.k + 1
    state.sbar = state.sbar + state.x
    g = problem.stochastic_gradient(state.x, rng)
    m = -g
    state.x = state.x + stepsizes.alpha(k) * m
    state.m = m
    state.k = k
    return state


@dataclass
class SvrgState:
    """SVRG with fixed stepsize and last-iterate snapshots.

    Every m inner steps the snapshot is refreshed to the current iterate
    and the full gradient there is recomputed. The snapshot policy is
    deterministic by design (simpler to test than a randomized pick);
    this deviates from analyses that average or randomize the snapshot.
    """

    x: np.ndarray
    alpha: float
    m_inner: int
    snapshot: np.ndarray = None
    snapshot_full_grad: np.ndarray = None
    inner_counter: int = 0
    k: int = 0
    m: np.ndarray = None

    def __post_init__(self):
        if self.alpha <= 0.0 or self.m_inner < 1:
            raise ConfigError("svrg needs alpha > 0 and m_inner >= 1")
        self.x = np.asarray(self.x, dtype=np.float64).copy()

    def record_point(self) -> np.ndarray:
        return self.x


def svrg_rho(alpha: float, m: int, l: float, L: float) -> float:
    """Declared per-epoch contraction factor
    rho = (1 / (1 - 2 alpha L)) (1 / (m alpha l) + 2 alpha L);
    meaningful only when 2 alpha L < 1."""
    if 2.0 * alpha * L >= 1.0:
        raise UsageError("svrg_rho requires 2 alpha L < 1")
    return (1.0 / (1.0 - 2.0 * alpha * L)) * (1.0 / (m * alpha * l) + 2.0 * alpha * L)


def svrg_step(state: SvrgState, problem, stepsizes, rng: Generator):
    if problem.n_components is None:
        raise ConfigError("svrg requires a finite-sum problem")
    if state.inner_counter % state.m_inner == 0:
        state.snapshot = state.x.copy()
        state.snapshot_full_grad = problem.full_gradient(state.x)
    i = int(rng.integers(0, problem.n_components))
    gi = problem.component_gradient(state.x, i)
    gs = problem.component_gradient(state.snapshot, i)
    m = -(gi - gs + state.snapshot_full_grad)
    state.x = state.x + state.alpha * m
    state.m = m
    state.inner_counter += 1
    state.k += 1
    return state


STEP_FUNCTIONS = {
    "accel": accel_step,
    "sg": sg_step,
    "sgm": sgm_step,
    "gradavg": gradavg_step,
    "iteravg": iterate_avg_step,
    "svrg": svrg_step,
}


def init_state(method: str, x0: np.ndarray, params: dict):
    """Build the per-trial state for a method from its hyperparameters.

    Recognized params: p (accel), alpha and beta (sgm), alpha and svrg_m
    (svrg). Unknown methods raise ConfigError.
    """
    if method == "accel":
        return AcceleratedState(x=x0, p=float(params.get("p", 20.0)))
    if method == "sg":
        return SgState(x=x0)
    if method == "sgm":
        if params.get("alpha") is None:
            raise ConfigError("sgm requires a fixed stepsize alpha")
        return SgmState(
            x=x0,
            alpha=float(params["alpha"]),
            beta=float(params.get("beta", 0.9)),
        )
    if method == "gradavg":
        return GradAvgState(x=x0)
    if method == "iteravg":
        return IterateAvgState(x=x0)
    if method == "svrg":
        if params.get("alpha") is None or params.get("svrg_m") is None:
            raise ConfigError("svrg requires alpha and svrg_m")
        return SvrgState(
            x=x0,
            alpha=float(params["alpha"]),
            m_inner=int(params["svrg_m"]),
        )
    raise ConfigError(f"unknown method {method!r}")
