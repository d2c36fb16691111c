"""Empirical rate, variance-decay, and variance-dominance estimation.

Everything here is a pure function over aggregated multi-trial data:
log-log least squares for the optimality-gap decay exponent, the same fit
for the direction variance, and the kappa estimate that quantifies how
fast the squared mean of x_j - x_K shrinks relative to its variance.

Fits exclude a burn-in (k < 100 by default elsewhere): the theoretical
gap bounds carry transient terms decaying like k^(-s l / 2) that
contaminate early slopes.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import DataError, Trace, UsageError


@dataclass(frozen=True)
class RateFit:
    """Least-squares line through (ln k, ln y) on a checkpoint window."""

    slope: float
    intercept: float
    r_squared: float
    k_range: tuple[float, float]
    n_points: int


@dataclass(frozen=True)
class KappaEstimate:
    """kappa_hat = -slope of ln r_j vs ln j with
    r_j = ||E-hat[x_j - x_K]||^2 / V-hat[x_j - x_K].

    details holds (j, numerator, denominator) triples for the fitted
    range. The comparison index is the final checkpoint K, a documented
    proxy for the general pair (j, i with j <= i).
    """

    kappa_hat: float
    j_range: tuple[float, float]
    K: int
    details: list[tuple[int, float, float]] = field(default_factory=list)


@dataclass
class TrialAggregate:
    """Across-seed moments of f_gap at shared checkpoints, plus optional
    iterate-difference moments (for kappa) and direction variances.

    var_gap uses the unbiased (n - 1) normalization. kappa_num[j] is
    ||E-hat[x_j - x_K]||^2 and kappa_den[j] the unbiased trace variance
    of x_j - x_K, both against the final checkpoint K.
    """

    method_id: str
    schedule_id: str
    ks: np.ndarray
    mean_gap: np.ndarray
    var_gap: np.ndarray
    mean_grad_norm_sq: np.ndarray
    n_trials: int
    kappa_num: np.ndarray | None = None
    kappa_den: np.ndarray | None = None
    varm: np.ndarray | None = None


def aggregate(traces: list[Trace], checkpoints) -> TrialAggregate:
    """Reduce per-trial traces to across-seed moments.

    All traces must share method and schedule ids and contain exactly the
    requested checkpoints. Traces are reduced in ascending seed order no
    matter how the list is ordered, so the result is independent of
    completion order (and of trace-list permutations generally).
    """
    if len(traces) < 1:
        raise UsageError("aggregate needs at least one trace")
    cps = np.asarray(checkpoints, dtype=np.int64)
    method_ids = {t.method_id for t in traces}
    schedule_ids = {t.schedule_id for t in traces}
    if len(method_ids) != 1 or len(schedule_ids) != 1:
        raise UsageError(
            f"traces mix methods/schedules: {sorted(method_ids)}, {sorted(schedule_ids)}"
        )
    ordered = sorted(traces, key=lambda t: t.seed)
    gaps = []
    gns = []
    for t in ordered:
        ks = t.ks()
        if ks.shape != cps.shape or np.any(ks != cps):
            missing = sorted(set(cps.tolist()) - set(ks.tolist()))
            raise DataError(f"trace seed={t.seed} missing checkpoints {missing[:5]}")
        gaps.append(t.f_gaps())
        gns.append(t.grad_norms_sq())
    G = np.stack(gaps)
    N = np.stack(gns)
    n = len(ordered)
    mean_gap = G.mean(axis=0)
    var_gap = G.var(axis=0, ddof=1) if n >= 2 else np.zeros_like(mean_gap)

    kappa_num = kappa_den = None
    if all(t.snapshots for t in ordered) and n >= 2:
        X = np.stack([t.iterates() for t in ordered])  # trials x cps x d
        D = X - X[:, -1:, :]  # x_j - x_K per trial
        mean_diff = D.mean(axis=0)
        kappa_num = np.einsum("jd,jd->j", mean_diff, mean_diff)
        kappa_den = D.var(axis=0, ddof=1).sum(axis=1)

    return TrialAggregate(
        method_id=ordered[0].method_id,
        schedule_id=ordered[0].schedule_id,
        ks=cps,
        mean_gap=mean_gap,
        var_gap=var_gap,
        mean_grad_norm_sq=N.mean(axis=0),
        n_trials=n,
        kappa_num=kappa_num,
        kappa_den=kappa_den,
    )


def direction_variance(M_snapshots: np.ndarray) -> np.ndarray:
    """Across-seed trace variance of the direction at each checkpoint.

    M_snapshots has shape (trials, checkpoints, dim); needs >= 2 trials.
    """
    if M_snapshots.ndim != 3 or M_snapshots.shape[0] < 2:
        raise UsageError("need (trials, checkpoints, dim) with >= 2 trials")
    return M_snapshots.var(axis=0, ddof=1).sum(axis=1)


def fit_loglog(ks, ys, k_lo: float, k_hi: float, min_points: int = 5) -> RateFit:
    """Least-squares line through (ln k, ln y) for checkpoints in
    [k_lo, k_hi]. ys must be positive on the window."""
    ks = np.asarray(ks, dtype=np.float64)
    ys = np.asarray(ys, dtype=np.float64)
    mask = (ks >= k_lo) & (ks <= k_hi)
    if int(mask.sum()) < min_points:
        raise UsageError(
            f"need at least {min_points} checkpoints in [{k_lo}, {k_hi}], have {int(mask.sum())}"
        )
    yw = ys[mask]
    if np.any(yw <= 0.0):
        raise DataError("nonpositive values in fit window, cannot take log")
    lx = np.log(ks[mask])
    ly = np.log(yw)
    A = np.stack([lx, np.ones_like(lx)], axis=1)
    coef, _, _, _ = np.linalg.lstsq(A, ly, rcond=None)
    resid = ly - A @ coef
    ss_res = float(np.dot(resid, resid))
    centered = ly - ly.mean()
    ss_tot = float(np.dot(centered, centered))
    r2 = 1.0 if ss_tot == 0.0 else 1.0 - ss_res / ss_tot
    r2 = min(max(r2, 0.0), 1.0)
    return RateFit(
        slope=float(coef[0]),
        intercept=float(coef[1]),
        r_squared=r2,
        k_range=(float(k_lo), float(k_hi)),
        n_points=int(mask.sum()),
    )


def fit_rate(agg: TrialAggregate, k_lo: float, k_hi: float) -> RateFit:
    """Decay exponent of the mean optimality gap on [k_lo, k_hi]."""
    return fit_loglog(agg.ks, agg.mean_gap, k_lo, k_hi)


def fit_direction_variance(ks, varm, k_lo: float, k_hi: float) -> RateFit:
    """Decay exponent of the across-seed direction variance."""
    return fit_loglog(ks, varm, k_lo, k_hi)


def estimate_kappa(agg: TrialAggregate, j_lo: float, j_hi: float) -> KappaEstimate:
    """Fit r_j = ||E-hat[x_j - x_K]||^2 / V-hat[x_j - x_K] against j.

    kappa_hat is minus the log-log slope. Needs iterate moments in the
    aggregate (snapshots on, >= 2 trials); a nonpositive variance at any
    j in range raises DataError. The final checkpoint itself is excluded
    (the difference there is identically zero).
    """
    if agg.kappa_num is None or agg.kappa_den is None:
        raise UsageError("aggregate carries no iterate moments (snapshots off?)")
    ks = agg.ks
    K = int(ks[-1])
    mask = (ks >= j_lo) & (ks <= j_hi) & (ks < K)
    if int(mask.sum()) < 5:
        raise UsageError(f"need at least 5 checkpoints in [{j_lo}, {j_hi}]")
    num = agg.kappa_num[mask]
    den = agg.kappa_den[mask]
    if np.any(den <= 0.0):
        raise DataError("nonpositive iterate-difference variance in kappa range")
    r = num / den
    fit = fit_loglog(ks[mask], r, j_lo, j_hi)
    details = [
        (int(j), float(a), float(b)) for j, a, b in zip(ks[mask], num, den)
    ]
    return KappaEstimate(
        kappa_hat=-fit.slope,
        j_range=(float(j_lo), float(j_hi)),
        K=K,
        details=details,
    )
