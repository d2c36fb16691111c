"""Shared domain types: problems, traces, RNG streams, certificate checks.

Everything in this module is method-agnostic. Optimizers, diagnostics, and
the experiment runner build on these types; nothing here depends on them.
"""
from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field

import numpy as np
from numpy.random import Generator, Philox


class UsageError(ValueError):
    """The caller broke an API precondition."""


class DataError(ValueError):
    """Inputs are structurally fine but numerically unusable."""


class ConfigError(ValueError):
    """A configuration is invalid or inconsistent."""


@dataclass(frozen=True)
class SmoothnessConstants:
    """Declared problem constants.

    l is the strong-convexity modulus and L the gradient Lipschitz
    constant, with 0 < l <= L. (M, M_V) bound the single-draw gradient
    variance: V[g(x)] <= M + M_V * ||grad F(x)||^2 at every x.
    """

    l: float
    L: float
    M: float = 0.0
    M_V: float = 0.0

    def __post_init__(self) -> None:
        if not (0.0 < self.l <= self.L < np.inf):
            raise UsageError(f"need 0 < l <= L < inf, got l={self.l}, L={self.L}")
        if self.M < 0.0 or self.M_V < 0.0:
            raise UsageError("M and M_V must be nonnegative")


class ProblemInstance:
    """Base class for objectives with exact oracles.

    Subclasses provide `dim`, `constants`, `value`, `full_gradient`,
    `stochastic_gradient`, and a reference solution exposed as `x_star`
    and `fstar`. `gap` returns F(x) - F* and must be cancellation-safe
    whenever a closed form exists (the quadratic kinds override it).

    Instances are immutable after construction and safe to share across
    threads; all randomness flows through the caller's generator.
    """

    dim: int
    n_components: int | None = None
    #: relative tolerance of the reference solution; 1e-10 for closed-form
    #: minimizers, 1e-8 where x* comes from an iterative solve.
    reference_tolerance: float = 1e-10

    @property
    def constants(self) -> SmoothnessConstants:
        raise NotImplementedError

    @property
    def x_star(self) -> np.ndarray:
        raise NotImplementedError

    @property
    def fstar(self) -> float:
        raise NotImplementedError

    def value(self, x: np.ndarray) -> float:
        raise NotImplementedError

    def full_gradient(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def stochastic_gradient(self, x: np.ndarray, rng: Generator) -> np.ndarray:
        raise NotImplementedError

    def gap(self, x: np.ndarray) -> float:
        """F(x) - F*; subclasses override when a stable form exists."""
        return self.value(x) - self.fstar

    def grad_norm_sq(self, x: np.ndarray) -> float:
        g = self.full_gradient(x)
        return float(np.dot(g, g))

    def single_draw_variance(self, x: np.ndarray) -> float:
        """Exact trace variance of one stochastic_gradient draw at x.

        Subclasses with a closed form override this; others raise
        NotImplementedError and callers fall back to Monte Carlo.
        """
        raise NotImplementedError

    def _check_dim(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.shape != (self.dim,):
            raise UsageError(f"expected vector of dim {self.dim}, got shape {x.shape}")
        return x


@dataclass(frozen=True)
class RngStream:
    """Counter-based random stream identity.

    The generator is pinned to numpy's Philox (4x64) keyed by
    (seed, stream_id). The key fully determines the draw sequence, so the
    same (seed, stream_id) is bit-identical across runs, platforms, and
    thread schedules. Each trial owns exactly one stream.
    """

    seed: int
    stream_id: int

    def generator(self) -> Generator:
        key = np.array([self.seed, self.stream_id], dtype=np.uint64)
        return Generator(Philox(key=key))


@dataclass
class TraceEntry:
    k: int
    f_gap: float
    grad_norm_sq: float
    iterate: np.ndarray | None = None


@dataclass
class Trace:
    """Per-trial record of (k, F(x_k) - F*, ||grad F(x_k)||^2).

    `seed` is the trial's stream_id. Entries are strictly increasing in k.
    Iterate snapshots are stored only when `snapshots` is set; they exist
    for the kappa diagnostic and are off by default to keep memory flat.
    """

    method_id: str
    schedule_id: str
    seed: int
    snapshots: bool = False
    entries: list[TraceEntry] = field(default_factory=list)

    def ks(self) -> np.ndarray:
        return np.array([e.k for e in self.entries], dtype=np.int64)

    def f_gaps(self) -> np.ndarray:
        return np.array([e.f_gap for e in self.entries], dtype=np.float64)

    def grad_norms_sq(self) -> np.ndarray:
        return np.array([e.grad_norm_sq for e in self.entries], dtype=np.float64)

    def iterates(self) -> np.ndarray:
        if not self.snapshots:
            raise UsageError("trace was recorded without iterate snapshots")
        return np.stack([e.iterate for e in self.entries])


def record(trace: Trace, k: int, problem: ProblemInstance, x: np.ndarray) -> Trace:
    """Append the deterministic full-objective measurements at x.

    k must exceed the last recorded index. f_gap may dip below zero only
    by the problem's reference tolerance; anything worse means the
    reference solution is wrong and raises DataError.
    """
    if trace.entries and k <= trace.entries[-1].k:
        raise UsageError(
            f"non-monotone record index: k={k} after k={trace.entries[-1].k}"
        )
    x = problem._check_dim(x)
    f_gap = problem.gap(x)
    tol = problem.reference_tolerance * max(1.0, abs(problem.fstar))
    if f_gap < -tol:
        raise DataError(f"f_gap={f_gap} below -{tol}: reference solution suspect")
    gns = problem.grad_norm_sq(x)
    snap = x.copy() if trace.snapshots else None
    trace.entries.append(TraceEntry(int(k), float(f_gap), float(gns), snap))
    return trace


def format_sig12(v: float) -> str:
    """Positional decimal notation with exactly 12 significant digits.

    Shared by every CSV writer so reproducibility diffs compare a single
    pinned format. nan and inf render as their usual spellings.
    """
    v = float(v)
    if not math.isfinite(v):
        return repr(v)
    mant, exp_s = f"{v:.11e}".split("e")
    neg = mant.startswith("-")
    digits = mant.lstrip("-").replace(".", "")
    point = int(exp_s) + 1
    if point <= 0:
        out = "0." + "0" * (-point) + digits
    elif point >= len(digits):
        out = digits + "0" * (point - len(digits))
    else:
        out = digits[:point] + "." + digits[point:]
    return ("-" + out) if neg else out


def write_trace_csv(trace: Trace, path) -> None:
    """Trace CSV contract: header k,f_gap,grad_norm_sq, positional
    decimal floats with 12 significant digits, LF endings."""
    lines = ["k,f_gap,grad_norm_sq"]
    for e in trace.entries:
        lines.append(f"{e.k},{format_sig12(e.f_gap)},{format_sig12(e.grad_norm_sq)}")
    with open(path, "w", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def log_checkpoints(max_k: int, per_decade: int = 20) -> np.ndarray:
    """Log-spaced integer checkpoints in [1, max_k], about per_decade per
    decade, always containing 1 and max_k."""
    if max_k < 1:
        raise UsageError("max_k must be >= 1")
    if max_k == 1:
        return np.array([1], dtype=np.int64)
    n = int(round(np.log10(max_k) * per_decade)) + 1
    grid = np.round(np.logspace(0.0, np.log10(max_k), max(n, 2))).astype(np.int64)
    grid = np.concatenate([grid, [1, max_k]])
    grid = np.unique(np.clip(grid, 1, max_k))
    return grid


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def config_sha256(resolved: dict) -> str:
    return hashlib.sha256(canonical_json(resolved).encode("utf-8")).hexdigest()


# ---------------------------------------------------------------------------
# certificate checks
#
# These empirically verify that a problem's declared constants actually
# bound its behavior: the PL inequality, gradient Lipschitz continuity, the
# (M, M_V) variance bound, and the (l, L) bracket on Hessian Rayleigh
# quotients. They are used by the test suite and are cheap enough to run
# at every release.
# ---------------------------------------------------------------------------


def sample_points(
    problem: ProblemInstance,
    rng: Generator,
    n_points: int,
    radii: tuple[float, ...] = (0.1, 1.0, 10.0),
) -> list[np.ndarray]:
    """Deterministic cloud around x* at mixed scales."""
    pts = []
    for i in range(n_points):
        r = radii[i % len(radii)]
        pts.append(problem.x_star + r * rng.standard_normal(problem.dim))
    return pts


def check_pl(
    problem: ProblemInstance,
    rng: Generator,
    n_points: int = 100,
    tol: float = 0.1,
) -> tuple[bool, float]:
    """PL inequality 2 l (F(x) - F*) <= ||grad F(x)||^2 at sampled points.

    Returns (ok, worst_ratio) where worst_ratio is max of lhs/rhs; ok means
    worst_ratio <= 1 + tol. Points with vanishing gradient are skipped
    (both sides vanish there).
    """
    worst = 0.0
    l = problem.constants.l
    for x in sample_points(problem, rng, n_points):
        rhs = problem.grad_norm_sq(x)
        if rhs <= 1e-24:
            continue
        lhs = 2.0 * l * problem.gap(x)
        worst = max(worst, lhs / rhs)
    return worst <= 1.0 + tol, worst


def check_smoothness(
    problem: ProblemInstance,
    rng: Generator,
    n_pairs: int = 100,
    tol: float = 0.1,
) -> tuple[bool, float]:
    """||grad F(x') - grad F(x)|| <= L ||x' - x|| on sampled pairs."""
    worst = 0.0
    L = problem.constants.L
    pts = sample_points(problem, rng, n_pairs)
    for x in pts:
        dx = rng.standard_normal(problem.dim)
        xp = x + dx
        num = float(np.linalg.norm(problem.full_gradient(xp) - problem.full_gradient(x)))
        den = L * float(np.linalg.norm(dx))
        worst = max(worst, num / den)
    return worst <= 1.0 + tol, worst


def check_variance_bound(
    problem: ProblemInstance,
    rng: Generator,
    n_points: int = 100,
    tol: float = 0.1,
    mc_draws: int = 2000,
) -> tuple[bool, float]:
    """Single-draw gradient variance against M + M_V ||grad F||^2.

    Uses the problem's exact per-draw variance when available, otherwise a
    Monte Carlo estimate with mc_draws draws per point. Returns
    (ok, worst_ratio); ok means no sampled point exceeds the bound scaled
    by 1 + tol.
    """
    c = problem.constants
    worst = 0.0
    for x in sample_points(problem, rng, n_points):
        bound = c.M + c.M_V * problem.grad_norm_sq(x)
        try:
            v = problem.single_draw_variance(x)
        except NotImplementedError:
            draws = np.stack(
                [problem.stochastic_gradient(x, rng) for _ in range(mc_draws)]
            )
            v = float(draws.var(axis=0, ddof=1).sum())
        if bound == 0.0:
            if v > 1e-20:
                return False, np.inf
            continue
        worst = max(worst, v / bound)
    return worst <= 1.0 + tol, worst


def check_hessian_bracket(
    problem: ProblemInstance,
    rng: Generator,
    n_points: int = 100,
    tol: float = 0.1,
    h: float = 1e-5,
) -> tuple[bool, float, float]:
    """Central-difference Hessian Rayleigh quotients stay inside [l, L].

    Returns (ok, min_quotient, max_quotient) over sampled (x, direction)
    pairs; ok means the quotients stay within [l (1 - tol), L (1 + tol)].
    """
    c = problem.constants
    lo, hi = np.inf, -np.inf
    for x in sample_points(problem, rng, n_points):
        u = rng.standard_normal(problem.dim)
        u = u / np.linalg.norm(u)
        gp = problem.full_gradient(x + h * u)
        gm = problem.full_gradient(x - h * u)
        q = float(np.dot(u, gp - gm) / (2.0 * h))
        lo, hi = min(lo, q), max(hi, q)
    ok = lo >= c.l * (1.0 - tol) and hi <= c.L * (1.0 + tol)
    return ok, lo, hi
