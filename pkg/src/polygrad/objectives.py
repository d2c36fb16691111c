"""Strongly convex test objectives with exact constants and minimizers.

Three families: diagonal quadratics (closed-form everything), finite-sum
ridge least squares, and l2-regularized logistic regression. Quadratics are
kept diagonal on purpose: l, L, x*, and F* are then exact, so any
discrepancy in an experiment is attributable to the optimizer rather than
to the problem oracle.

Stochastic gradients come in two flavors via NoiseModel: additive Gaussian
noise on the full gradient (unbiased, variance sigma^2 d, so M = sigma^2 d
and M_V = 0), and subsampling of finite-sum components with replacement
(unbiased by construction; declared (M, M_V) are conservative bounds
derived from the component gradients at x*).
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
from numpy.random import Generator

from .core import ConfigError, ProblemInstance, RngStream, SmoothnessConstants, UsageError

ADDITIVE = "additive_gaussian"
SUBSAMPLE = "subsample"


@dataclass(frozen=True)
class NoiseModel:
    """Stochastic-gradient model: additive_gaussian(sigma) or
    subsample(batch), the latter drawing component indices uniformly with
    replacement."""

    kind: str
    sigma: float = 0.0
    batch: int = 1

    def __post_init__(self) -> None:
        if self.kind not in (ADDITIVE, SUBSAMPLE):
            raise ConfigError(f"unknown noise kind {self.kind!r}")
        if self.sigma < 0.0:
            raise ConfigError("sigma must be nonnegative")
        if self.batch < 1:
            raise ConfigError("batch must be a positive integer")


class QuadraticProblem(ProblemInstance):
    """F(x) = 1/2 x^T diag(A) x - b^T x with positive diagonal A.

    x* = b / A componentwise, l = min(A), L = max(A). The gap is computed
    as the exact quadratic form 1/2 (x - x*)^T diag(A) (x - x*), which is
    nonnegative by construction and free of cancellation.
    """

    def __init__(self, A_diag, b, noise: NoiseModel):
        A_diag = np.asarray(A_diag, dtype=np.float64)
        b = np.asarray(b, dtype=np.float64)
        if A_diag.ndim != 1 or A_diag.shape != b.shape:
            raise UsageError("A_diag and b must be vectors of equal length")
        if np.any(A_diag <= 0.0):
            raise UsageError("A_diag entries must be positive")
        if noise.kind != ADDITIVE:
            raise ConfigError("quadratic problems support additive_gaussian noise only")
        self.A_diag = A_diag
        self.b = b
        self.noise = noise
        self.dim = int(A_diag.size)
        self._x_star = b / A_diag
        self._fstar = float(-0.5 * np.dot(b, self._x_star))
        d = float(self.dim)
        self._constants = SmoothnessConstants(
            l=float(A_diag.min()),
            L=float(A_diag.max()),
            M=noise.sigma**2 * d,
            M_V=0.0,
        )

    @property
    def constants(self) -> SmoothnessConstants:
        return self._constants

    @property
    def x_star(self) -> np.ndarray:
        return self._x_star

    @property
    def fstar(self) -> float:
        return self._fstar

    def value(self, x) -> float:
        x = self._check_dim(x)
        return float(0.5 * np.dot(x, self.A_diag * x) - np.dot(self.b, x))

    def full_gradient(self, x) -> np.ndarray:
        x = self._check_dim(x)
        return self.A_diag * x - self.b

    def stochastic_gradient(self, x, rng: Generator) -> np.ndarray:
        x = self._check_dim(x)
        z = rng.standard_normal(self.dim)
        # identical elementwise ordering to the trial kernels:
        # (A x - b) + sigma z
        return (self.A_diag * x - self.b) + self.noise.sigma * z

    def gap(self, x) -> float:
        x = self._check_dim(x)
        dx = x - self._x_star
        return float(0.5 * np.dot(dx, self.A_diag * dx))

    def single_draw_variance(self, x) -> float:
        return self.noise.sigma**2 * float(self.dim)


class FiniteSumLeastSquares(ProblemInstance):
    """F(x) = (1/n) sum_i 1/2 (rows_i^T x - target_i)^2 + ridge/2 ||x||^2.

    The Hessian H = rows^T rows / n + ridge I is formed once; (l, L) are
    its exact extreme eigenvalues and the gap is the exact quadratic form
    in H. Component gradients are available individually for SVRG and for
    the subsample noise model.

    Declared (M, M_V): with g drawn as a single uniformly sampled component
    gradient, V[g](x) <= mean_i ||grad f_i(x)||^2 and each component
    gradient is (grad f_i(x*)) + H_i (x - x*) with ||H_i|| <= ||rows_i||^2
    + ridge, so M = 2 mean_i ||grad f_i(x*)||^2 and
    M_V = 2 mean_i (||rows_i||^2 + ridge)^2 / l^2 bound the variance at
    every x. Batches of size b divide the variance by b, so the bound
    stays valid for any batch.
    """

    def __init__(self, rows, targets, ridge: float, noise: NoiseModel | None = None):
        rows = np.asarray(rows, dtype=np.float64)
        targets = np.asarray(targets, dtype=np.float64)
        if rows.ndim != 2 or targets.shape != (rows.shape[0],):
            raise UsageError("rows must be n x d and targets length n")
        if ridge < 0.0:
            raise UsageError("ridge must be nonnegative")
        self.rows = rows
        self.targets = targets
        self.ridge = float(ridge)
        self.noise = noise if noise is not None else NoiseModel(SUBSAMPLE, batch=1)
        if self.noise.kind == SUBSAMPLE and rows.shape[0] < 1:
            raise ConfigError("subsample noise needs at least one component")
        n, d = rows.shape
        self.dim = int(d)
        self.n_components = int(n)
        self._H = rows.T @ rows / n + self.ridge * np.eye(d)
        evals = np.linalg.eigvalsh(self._H)
        self._x_star = np.linalg.solve(self._H, rows.T @ targets / n)
        self._fstar = self._value_raw(self._x_star)
        gstar = self._component_gradients(self._x_star)
        row_norms_sq = np.einsum("ij,ij->i", rows, rows)
        l = float(evals[0])
        M = 2.0 * float(np.mean(np.einsum("ij,ij->i", gstar, gstar)))
        M_V = 2.0 * float(np.mean((row_norms_sq + self.ridge) ** 2)) / l**2
        self._constants = SmoothnessConstants(l=l, L=float(evals[-1]), M=M, M_V=M_V)

    @property
    def constants(self) -> SmoothnessConstants:
        return self._constants

    @property
    def x_star(self) -> np.ndarray:
        return self._x_star

    @property
    def fstar(self) -> float:
        return self._fstar

    def _value_raw(self, x) -> float:
        r = self.rows @ x - self.targets
        n = self.rows.shape[0]
        return float(0.5 * np.dot(r, r) / n + 0.5 * self.ridge * np.dot(x, x))

    def value(self, x) -> float:
        return self._value_raw(self._check_dim(x))

    def full_gradient(self, x) -> np.ndarray:
        x = self._check_dim(x)
        n = self.rows.shape[0]
        return self.rows.T @ (self.rows @ x - self.targets) / n + self.ridge * x

    def component_gradient(self, x, i: int) -> np.ndarray:
        x = self._check_dim(x)
        row = self.rows[i]
        return row * (np.dot(row, x) - self.targets[i]) + self.ridge * x

    def _component_gradients(self, x) -> np.ndarray:
        r = self.rows @ x - self.targets
        return self.rows * r[:, None] + self.ridge * x[None, :]

    def stochastic_gradient(self, x, rng: Generator) -> np.ndarray:
        x = self._check_dim(x)
        if self.noise.kind == ADDITIVE:
            z = rng.standard_normal(self.dim)
            return self.full_gradient(x) + self.noise.sigma * z
        idx = rng.integers(0, self.n_components, size=self.noise.batch)
        sub = self.rows[idx]
        r = sub @ x - self.targets[idx]
        return sub.T @ r / self.noise.batch + self.ridge * x

    def gap(self, x) -> float:
        x = self._check_dim(x)
        dx = x - self._x_star
        return float(0.5 * np.dot(dx, self._H @ dx))

    def single_draw_variance(self, x) -> float:
        if self.noise.kind == ADDITIVE:
            return self.noise.sigma**2 * float(self.dim)
        x = self._check_dim(x)
        G = self._component_gradients(x)
        g = self.full_gradient(x)
        second = float(np.mean(np.einsum("ij,ij->i", G, G)))
        return (second - float(np.dot(g, g))) / self.noise.batch


class LogisticL2Problem(ProblemInstance):
    """F(x) = (1/n) sum_i log(1 + exp(-y_i rows_i^T x)) + ridge/2 ||x||^2.

    l = ridge exactly; L = ridge + lambda_max(rows^T rows / n) / 4 from the
    1/4 bound on the sigmoid second derivative (a deliberate overestimate;
    stepsize constraints only need an upper bound). The reference solution
    is full-gradient descent at stepsize 1/L run until the gradient norm
    falls below the solve tolerance; the PL inequality then certifies
    F(x_ref) - F* <= ||grad||^2 / (2 l), far below reference_tolerance.
    """

    reference_tolerance = 1e-8

    def __init__(
        self,
        rows,
        labels,
        ridge: float,
        noise: NoiseModel | None = None,
        solve_tol: float = 1e-12,
    ):
        rows = np.asarray(rows, dtype=np.float64)
        labels = np.asarray(labels, dtype=np.float64)
        if rows.ndim != 2 or labels.shape != (rows.shape[0],):
            raise UsageError("rows must be n x d and labels length n")
        if not np.all(np.abs(labels) == 1.0):
            raise UsageError("labels must be in {-1, +1}")
        if ridge <= 0.0:
            raise UsageError("ridge must be positive (it is the modulus l)")
        self.rows = rows
        self.labels = labels
        self.ridge = float(ridge)
        self.noise = noise if noise is not None else NoiseModel(SUBSAMPLE, batch=1)
        self.solve_tol = float(solve_tol)
        n, d = rows.shape
        self.dim = int(d)
        self.n_components = int(n)
        gram_top = float(np.linalg.eigvalsh(rows.T @ rows / n)[-1])
        self._constants_base = SmoothnessConstants(
            l=self.ridge, L=self.ridge + gram_top / 4.0
        )

    def _margins(self, x) -> np.ndarray:
        return self.labels * (self.rows @ x)

    def value(self, x) -> float:
        x = self._check_dim(x)
        m = self._margins(x)
        return float(np.mean(np.logaddexp(0.0, -m)) + 0.5 * self.ridge * np.dot(x, x))

    def full_gradient(self, x) -> np.ndarray:
        x = self._check_dim(x)
        m = self._margins(x)
        s = np.exp(-np.logaddexp(0.0, m))  # sigmoid(-m), stable at both tails
        n = self.rows.shape[0]
        return -(self.rows.T @ (self.labels * s)) / n + self.ridge * x

    def component_gradient(self, x, i: int) -> np.ndarray:
        x = self._check_dim(x)
        row = self.rows[i]
        m = self.labels[i] * np.dot(row, x)
        s = np.exp(-np.logaddexp(0.0, m))
        return -(self.labels[i] * s) * row + self.ridge * x

    def _component_gradients(self, x) -> np.ndarray:
        m = self._margins(x)
        s = np.exp(-np.logaddexp(0.0, m))
        return -(self.labels * s)[:, None] * self.rows + self.ridge * x[None, :]

    def stochastic_gradient(self, x, rng: Generator) -> np.ndarray:
        x = self._check_dim(x)
        if self.noise.kind == ADDITIVE:
            z = rng.standard_normal(self.dim)
            return self.full_gradient(x) + self.noise.sigma * z
        idx = rng.integers(0, self.n_components, size=self.noise.batch)
        m = self.labels[idx] * (self.rows[idx] @ x)
        s = np.exp(-np.logaddexp(0.0, m))
        return -(self.rows[idx].T @ (self.labels[idx] * s)) / self.noise.batch + self.ridge * x

    @cached_property
    def _reference(self) -> tuple[np.ndarray, float]:
        x, f = _gradient_descent_reference(self, self.solve_tol)
        return x, f

    @property
    def x_star(self) -> np.ndarray:
        return self._reference[0]

    @property
    def fstar(self) -> float:
        return self._reference[1]

    @cached_property
    def constants(self) -> SmoothnessConstants:
        base = self._constants_base
        if self.noise.kind == ADDITIVE:
            return SmoothnessConstants(
                l=base.l, L=base.L, M=self.noise.sigma**2 * self.dim, M_V=0.0
            )
        gstar = self._component_gradients(self.x_star)
        row_norms_sq = np.einsum("ij,ij->i", self.rows, self.rows)
        comp_lip = row_norms_sq / 4.0 + self.ridge
        M = 2.0 * float(np.mean(np.einsum("ij,ij->i", gstar, gstar)))
        M_V = 2.0 * float(np.mean(comp_lip**2)) / base.l**2
        return SmoothnessConstants(l=base.l, L=base.L, M=M, M_V=M_V)

    def single_draw_variance(self, x) -> float:
        if self.noise.kind == ADDITIVE:
            return self.noise.sigma**2 * float(self.dim)
        x = self._check_dim(x)
        G = self._component_gradients(x)
        g = self.full_gradient(x)
        second = float(np.mean(np.einsum("ij,ij->i", G, G)))
        return (second - float(np.dot(g, g))) / self.noise.batch


def _gradient_descent_reference(
    problem: LogisticL2Problem, tol: float, max_iters: int = 2_000_000
) -> tuple[np.ndarray, float]:
    """Deterministic reference solve: fixed stepsize 1/L until
    ||grad F|| <= tol, value cross-checked against one further step."""
    base = problem._constants_base
    step = 1.0 / base.L
    x = np.zeros(problem.dim)
    for _ in range(max_iters):
        g = problem.full_gradient(x)
        if float(np.linalg.norm(g)) <= tol:
            break
        x = x - step * g
    else:
        raise ConfigError(f"reference solve did not reach ||grad|| <= {tol}")
    # PL certifies F(x) - F* <= tol^2 / (2 l); one extra step must stay
    # within that bound of the returned value, and must not increase F.
    f = problem.value(x)
    f_next = problem.value(x - step * problem.full_gradient(x))
    cert = tol**2 / (2.0 * base.l)
    if not (f - f_next >= -1e-15 and f - f_next <= cert + 1e-15):
        raise ConfigError("reference solve failed its self-consistency check")
    return x, f


def reference_solution(problem: ProblemInstance) -> tuple[np.ndarray, float]:
    """(x*, F*) for any shipped problem kind."""
    return problem.x_star.copy(), problem.fstar


# ---------------------------------------------------------------------------
# deterministic synthetic builders
# ---------------------------------------------------------------------------

#: stream id reserved for data generation so problem data never collides
#: with trial streams (which use small consecutive ids).
DATA_STREAM_ID = 2**63 - 1


def make_quadratic(
    dim: int,
    l: float,
    L: float,
    data_seed: int,
    sigma: float,
    A_diag=None,
    b=None,
) -> QuadraticProblem:
    """Diagonal quadratic with spectrum linearly spaced in [l, L] and
    standard normal b, all drawn from the data seed stream."""
    rng = RngStream(data_seed, DATA_STREAM_ID).generator()
    if A_diag is None:
        A_diag = np.linspace(l, L, dim) if dim > 1 else np.array([l])
    if b is None:
        b = rng.standard_normal(dim)
    return QuadraticProblem(A_diag, b, NoiseModel(ADDITIVE, sigma=sigma))


def make_least_squares(
    n: int, dim: int, ridge: float, data_seed: int, batch: int = 1
) -> FiniteSumLeastSquares:
    rng = RngStream(data_seed, DATA_STREAM_ID).generator()
    rows = rng.standard_normal((n, dim))
    targets = rng.standard_normal(n)
    return FiniteSumLeastSquares(rows, targets, ridge, NoiseModel(SUBSAMPLE, batch=batch))


def make_logistic(
    n: int, dim: int, ridge: float, data_seed: int, batch: int = 1
) -> LogisticL2Problem:
    rng = RngStream(data_seed, DATA_STREAM_ID).generator()
    rows = rng.standard_normal((n, dim))
    w = rng.standard_normal(dim)
    labels = np.where(rows @ w + 0.5 * rng.standard_normal(n) >= 0.0, 1.0, -1.0)
    return LogisticL2Problem(rows, labels, ridge, NoiseModel(SUBSAMPLE, batch=batch))


def initial_point(problem: ProblemInstance, data_seed: int, radius: float = 1.0) -> np.ndarray:
    """Shared starting iterate x_1 = x* + radius * z, drawn from a stream
    adjacent to the data stream so it is independent of trial noise."""
    rng = RngStream(data_seed, DATA_STREAM_ID - 1).generator()
    return problem.x_star + radius * rng.standard_normal(problem.dim)


def shipped_problems(data_seed: int = 11):
    """The canonical trio used by the certificate checks."""
    return [
        make_quadratic(dim=20, l=0.5, L=1.0, data_seed=data_seed, sigma=0.1),
        make_least_squares(n=200, dim=20, ridge=0.5, data_seed=data_seed + 1),
        make_logistic(n=200, dim=10, ridge=0.5, data_seed=data_seed + 2),
    ]
