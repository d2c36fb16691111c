"""Contraction products, perturbation sums, and their leading-order forms.

With the decaying stepsizes alpha_k = s/(k + sigma) the analysis rests on
two sequences:

    A_k    = prod_{i=1..k} (1 - alpha_i l/2)
    B_k(a) = sum_{i=1..k} alpha_i^{2+a} prod_{j=i+1..k} (1 - alpha_j l/2)

A_k telescopes into a ratio of gamma functions and decays like
(k+1+sigma)^(-sl/2); B_k(a) decays like (k+1+sigma)^(-(1+a)) with a
constant that is not predicted here, only the exponent. This module
computes both exactly (log-space product, backward-stable recurrence),
evaluates the gamma-function form, and verifies the leading-order
exponents by log-log fits.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import ConfigError, UsageError
from .diagnostics import fit_loglog

GAMMA_FORM_RTOL = 1e-10
SLOPE_RTOL = 0.02
RATIO_CONV_SLOPE_MAX = -0.8
POLE_TOL = 1e-6
RESOLVE_FLOOR = 1e-12


@dataclass(frozen=True)
class AbkParams:
    """Parameters (s, sigma, l, a) for the A_k and B_k(a) sequences.

    Requires s*l > 4 and s*l/2 > 1 + a so that both sequences have the
    advertised limiting behavior, and a in [0, 1].
    """

    s: float
    sigma: float
    l: float
    a: float = 0.0

    def __post_init__(self) -> None:
        if not (self.s > 0.0 and self.sigma > 0.0 and self.l > 0.0):
            raise ConfigError("s, sigma, l must all be positive")
        if not 0.0 <= self.a <= 1.0:
            raise ConfigError(f"a must lie in [0, 1], got {self.a}")
        sl = self.s * self.l
        if not sl > 4.0:
            raise ConfigError(f"need s*l > 4, got s*l = {sl}")
        if not sl / 2.0 - 1.0 - self.a > 0.0:
            raise ConfigError(
                f"need s*l/2 - 1 - a > 0, got {sl / 2.0 - 1.0 - self.a}"
            )

    def alpha(self, k) -> float:
        return self.s / (k + self.sigma)


def _contraction_factors(params: AbkParams, kmax: int) -> np.ndarray:
    """Factors 1 - alpha_i l/2 for i = 1..kmax, verified positive."""
    i = np.arange(1, kmax + 1, dtype=np.float64)
    factors = 1.0 - params.s * params.l / (2.0 * (i + params.sigma))
    if np.any(factors <= 0.0):
        bad = int(i[factors <= 0.0][0])
        raise ConfigError(
            f"contraction factor at k={bad} is nonpositive; "
            f"the stepsize bound alpha_1 <= 2/l is violated"
        )
    return factors


def _check_grid(ks) -> np.ndarray:
    ks = np.asarray(ks, dtype=np.int64)
    if ks.ndim != 1 or ks.size < 1:
        raise UsageError("k grid must be a nonempty 1-d array")
    if ks[0] < 1 or np.any(np.diff(ks) <= 0):
        raise UsageError("k grid must be strictly increasing with min >= 1")
    return ks


def a_k_exact(params: AbkParams, k: int) -> float:
    """A_k as a log-space product of verified-positive factors."""
    if k < 1:
        raise UsageError(f"k must be >= 1, got {k}")
    factors = _contraction_factors(params, int(k))
    return float(np.exp(np.sum(np.log(factors))))


def a_k_grid(params: AbkParams, ks) -> np.ndarray:
    """A_k at each grid point, via one cumulative log-sum."""
    ks = _check_grid(ks)
    factors = _contraction_factors(params, int(ks[-1]))
    logA = np.cumsum(np.log(factors))
    return np.exp(logA[ks - 1])


def _gamma_head_argument(params: AbkParams) -> float:
    return 1.0 + params.sigma - params.s * params.l / 2.0


def _near_nonpositive_integer(x: float, tol: float = POLE_TOL) -> bool:
    nearest = round(x)
    return nearest <= 0 and abs(x - nearest) <= tol


def a_k_gamma(params: AbkParams, ks) -> np.ndarray:
    """Gamma-function form of A_k:

        Gamma(1+sigma)/Gamma(1+sigma-sl/2)
        * Gamma(k+1+sigma-sl/2)/Gamma(k+1+sigma)

    Valid only when 1+sigma-sl/2 is positive and away from the poles of
    the gamma function; otherwise raises UsageError and callers fall
    back to the direct product.
    """
    ks = _check_grid(ks)
    x0 = _gamma_head_argument(params)
    if x0 <= 0.0 or _near_nonpositive_integer(x0):
        raise UsageError(
            f"gamma-form argument 1+sigma-sl/2 = {x0} is at or near a pole; "
            f"use the direct product instead"
        )
    head = math.lgamma(1.0 + params.sigma) - math.lgamma(x0)
    kf = ks.astype(np.float64)
    tail = np.array(
        [
            math.lgamma(k + x0) - math.lgamma(k + 1.0 + params.sigma)
            for k in kf
        ]
    )
    return np.exp(head + tail)


def b_k_exact(params: AbkParams, k: int) -> float:
    """B_k(a) by the recurrence B_k = (1 - alpha_k l/2) B_{k-1} + alpha_k^{2+a}.

    Backward stable: every term is positive and the contraction keeps
    old terms from being re-amplified.
    """
    if k < 1:
        raise UsageError(f"k must be >= 1, got {k}")
    return float(b_k_grid(params, np.array([int(k)], dtype=np.int64))[0])


def b_k_grid(params: AbkParams, ks) -> np.ndarray:
    """B_k(a) at each grid point, one pass of the recurrence."""
    ks = _check_grid(ks)
    kmax = int(ks[-1])
    factors = _contraction_factors(params, kmax)
    want = set(int(k) for k in ks)
    expo = 2.0 + params.a
    out = {}
    b = 0.0
    for i in range(1, kmax + 1):
        alpha_i = params.s / (i + params.sigma)
        b = factors[i - 1] * b + alpha_i**expo
        if i in want:
            out[i] = b
    return np.array([out[int(k)] for k in ks], dtype=np.float64)


def a_k_leading(params: AbkParams, ks) -> np.ndarray:
    """First-order form of A_k: the gamma-form head constant times
    (k+1+sigma)^(-sl/2). Raises UsageError near a pole of the head."""
    ks = _check_grid(ks)
    x0 = _gamma_head_argument(params)
    if x0 <= 0.0 or _near_nonpositive_integer(x0):
        raise UsageError(
            f"leading-order head 1+sigma-sl/2 = {x0} is at or near a pole"
        )
    head = math.exp(math.lgamma(1.0 + params.sigma) - math.lgamma(x0))
    shifted = ks.astype(np.float64) + 1.0 + params.sigma
    return head * shifted ** (-params.s * params.l / 2.0)


def b_k_leading(params: AbkParams, ks, b_exact_vals=None) -> np.ndarray:
    """First-order form of B_k(a): C-hat * (k+1+sigma)^(-1-a) with the
    constant calibrated at the largest grid point, because only the
    exponent is predicted."""
    ks = _check_grid(ks)
    if b_exact_vals is None:
        b_exact_vals = b_k_grid(params, ks)
    shifted = ks.astype(np.float64) + 1.0 + params.sigma
    expo = 1.0 + params.a
    c_hat = float(b_exact_vals[-1] * shifted[-1] ** expo)
    return c_hat * shifted ** (-expo)


def gamma_ratio(x: float, a: float) -> float:
    """Gamma(x+a)/Gamma(x) through log-gamma. Needs x > 0 and x + a > 0."""
    if not (x > 0.0 and x + a > 0.0):
        raise UsageError(f"gamma_ratio needs x > 0 and x + a > 0, got x={x}, a={a}")
    return math.exp(math.lgamma(x + a) - math.lgamma(x))


def pochhammer(z: float, t: int) -> float:
    """Rising factorial z (z+1) ... (z+t-1) by explicit multiplication."""
    if t < 0 or t != int(t):
        raise UsageError(f"t must be a nonnegative integer, got {t}")
    out = 1.0
    for j in range(int(t)):
        out *= z + j
    return out


@dataclass(frozen=True)
class TricomiSweep:
    """Errors |gamma_ratio(x, a)/x^a - 1| across a sweep of x.

    scaled[i] = error[i] * x[i]; if the error really decays like 1/x the
    scaled values agree up to the spread factor.
    """

    a: float
    xs: tuple[float, ...]
    errors: tuple[float, ...]
    scaled: tuple[float, ...]
    spread: float
    ok: bool


def tricomi_error_sweep(
    a: float = 0.3, xs=(1e2, 1e3, 1e4), max_spread: float = 2.0
) -> TricomiSweep:
    """Check that gamma_ratio(x, a) = x^a (1 + O(1/x)) numerically.

    a = 0 and a = 1 make the ratio exact, so the sweep needs a strictly
    fractional exponent to have anything to measure.
    """
    if a in (0.0, 1.0):
        raise UsageError("sweep needs a not in {0, 1}; the ratio is exact there")
    errors = []
    for x in xs:
        r = gamma_ratio(float(x), a)
        errors.append(abs(r / float(x) ** a - 1.0))
    if any(e <= 0.0 for e in errors):
        raise UsageError("error underflowed to zero; sweep unresolvable")
    scaled = [e * float(x) for e, x in zip(errors, xs)]
    spread = max(scaled) / min(scaled)
    return TricomiSweep(
        a=a,
        xs=tuple(float(x) for x in xs),
        errors=tuple(errors),
        scaled=tuple(scaled),
        spread=float(spread),
        ok=bool(spread <= max_spread),
    )


@dataclass
class LeadingOrderReport:
    """Pass/fail summary of the exact-vs-leading-order comparison."""

    params: AbkParams
    k_window: tuple[float, float]
    a_slope: float
    a_slope_target: float
    a_slope_ok: bool
    b_slope: float
    b_slope_target: float
    b_slope_ok: bool
    gamma_form_max_relerr: float | None
    gamma_form_ok: bool | None
    a_ratio_slope: float | None
    b_ratio_slope: float | None
    ratio_ok: bool
    notes: list[str]

    @property
    def passed(self) -> bool:
        if not (self.a_slope_ok and self.b_slope_ok and self.ratio_ok):
            return False
        return self.gamma_form_ok is not False

    def lines(self) -> list[str]:
        def mark(ok) -> str:
            if ok is None:
                return "SKIP"
            return "PASS" if ok else "FAIL"

        out = [
            f"A_k slope: fitted {self.a_slope:+.4f}, target {self.a_slope_target:+.4f} "
            f"(+-{SLOPE_RTOL * abs(self.a_slope_target):.4f}) ... {mark(self.a_slope_ok)}",
            f"B_k slope: fitted {self.b_slope:+.4f}, target {self.b_slope_target:+.4f} "
            f"(+-{SLOPE_RTOL * abs(self.b_slope_target):.4f}) ... {mark(self.b_slope_ok)}",
        ]
        if self.gamma_form_max_relerr is None:
            out.append("A_k gamma form: skipped (argument near a pole) ... SKIP")
        else:
            out.append(
                f"A_k gamma form: max rel err {self.gamma_form_max_relerr:.3e} "
                f"(tol {GAMMA_FORM_RTOL:.0e}) ... {mark(self.gamma_form_ok)}"
            )
        ra = "unresolved" if self.a_ratio_slope is None else f"{self.a_ratio_slope:+.3f}"
        rb = "unresolved" if self.b_ratio_slope is None else f"{self.b_ratio_slope:+.3f}"
        out.append(
            f"ratio convergence: A {ra}, B {rb} "
            f"(need <= {RATIO_CONV_SLOPE_MAX:+.1f} where resolvable) ... {mark(self.ratio_ok)}"
        )
        out.extend(f"note: {n}" for n in self.notes)
        out.append(f"overall: {'PASS' if self.passed else 'FAIL'}")
        return out


def _ratio_convergence_slope(ks, ratio, k_lo, k_hi, notes, label) -> float | None:
    """Slope of |ratio - 1| on a log-log scale, or None when too few
    points sit above the floating-point floor to fit anything."""
    y = np.abs(ratio - 1.0)
    mask = (ks >= k_lo) & (ks <= k_hi) & (y > RESOLVE_FLOOR)
    if int(mask.sum()) < 5:
        notes.append(f"{label} ratio convergence unresolved (at noise floor)")
        return None
    fit = fit_loglog(ks[mask], y[mask], k_lo, k_hi)
    return fit.slope


def check_leading_order(params: AbkParams, k_grid) -> LeadingOrderReport:
    """Fit the decay exponents of exact A_k and B_k(a) and compare them
    with the leading-order predictions -sl/2 and -(1+a).

    The grid must reach at least 1e4; fits run on [1e2, max(k_grid)]
    against k + 1 + sigma, the argument the leading-order forms are
    written in. The B constant is calibrated at the largest grid point
    because only the exponent is predicted.
    """
    ks = _check_grid(k_grid)
    if int(ks[-1]) < 10_000:
        raise UsageError("k grid must reach at least 1e4")
    k_lo, k_hi = 1e2, float(ks[-1])
    if int(((ks >= k_lo) & (ks <= k_hi)).sum()) < 5:
        raise UsageError("degenerate grid: fewer than 5 points in [1e2, max]")
    notes: list[str] = []

    a_exact = a_k_grid(params, ks)
    b_exact = b_k_grid(params, ks)
    shifted = ks.astype(np.float64) + 1.0 + params.sigma

    # Window selection runs on raw k; the fit itself uses the shifted
    # abscissa k+1+sigma that the leading-order forms are written in.
    win = (ks >= k_lo) & (ks <= k_hi)
    sw = shifted[win]

    sl2 = params.s * params.l / 2.0
    a_fit = fit_loglog(sw, a_exact[win], sw[0], sw[-1])
    a_target = -sl2
    a_ok = abs(a_fit.slope - a_target) <= SLOPE_RTOL * abs(a_target)

    b_fit = fit_loglog(sw, b_exact[win], sw[0], sw[-1])
    b_target = -(1.0 + params.a)
    b_ok = abs(b_fit.slope - b_target) <= SLOPE_RTOL * abs(b_target)

    x0 = _gamma_head_argument(params)
    gamma_err: float | None
    gamma_ok: bool | None
    if x0 <= 0.0 or _near_nonpositive_integer(x0):
        gamma_err = None
        gamma_ok = None
        notes.append(
            f"gamma form skipped: 1+sigma-sl/2 = {x0} near a pole; "
            f"direct product used alone"
        )
        a_ratio = None
    else:
        a_gam = a_k_gamma(params, ks)
        gamma_err = float(np.max(np.abs(a_exact / a_gam - 1.0)))
        gamma_ok = gamma_err <= GAMMA_FORM_RTOL
        a_lead = a_k_leading(params, ks)
        a_ratio = _ratio_convergence_slope(
            ks.astype(np.float64), a_exact / a_lead, k_lo, k_hi, notes, "A_k"
        )

    b_leading = b_k_leading(params, ks, b_exact)
    b_ratio = _ratio_convergence_slope(
        ks.astype(np.float64)[:-1],
        (b_exact / b_leading)[:-1],
        k_lo,
        k_hi,
        notes,
        "B_k",
    )

    resolvable = [r for r in (a_ratio, b_ratio) if r is not None]
    ratio_ok = all(r <= RATIO_CONV_SLOPE_MAX for r in resolvable)

    return LeadingOrderReport(
        params=params,
        k_window=(k_lo, k_hi),
        a_slope=a_fit.slope,
        a_slope_target=a_target,
        a_slope_ok=bool(a_ok),
        b_slope=b_fit.slope,
        b_slope_target=b_target,
        b_slope_ok=bool(b_ok),
        gamma_form_max_relerr=gamma_err,
        gamma_form_ok=gamma_ok,
        a_ratio_slope=a_ratio,
        b_ratio_slope=b_ratio,
        ratio_ok=bool(ratio_ok),
        notes=notes,
    )
