"""Trial kernels for the quadratic fast path.

run_quadratic_trial executes one full trial (one method, one stream) on a
diagonal quadratic with additive Gaussian noise and returns per-checkpoint
iterate and direction snapshots. Two implementations exist: a Cython
extension and a numpy fallback. Both draw noise in identical chunked
blocks from the trial generator and apply identical elementwise update
ordering, so their outputs are bit-for-bit equal; which one runs is purely
a speed choice.

Selection is controlled by POLYGRAD_BACKEND: "auto" (default, prefers the
compiled kernel), "compiled", or "pure". Objective evaluations on the
snapshots happen outside the kernels, in the shared recording code, so
traces do not depend on the backend either.
"""
from __future__ import annotations

import os

import numpy as np

from .core import ConfigError, UsageError
from .objectives import ADDITIVE, QuadraticProblem
from .schedules import DecaySchedule

try:
    from . import _speedups

    _HAVE_COMPILED = True
except ImportError:
    _speedups = None
    _HAVE_COMPILED = False

METHOD_CODES = {"sg": 0, "accel": 1, "gradavg": 2, "iteravg": 3, "sgm": 4}

#: steps per noise block; any value gives the same stream, this one keeps
#: block allocations around 0.6 MB at d = 20
CHUNK = 4096


def compiled_available() -> bool:
    return _HAVE_COMPILED


def backend() -> str:
    """Resolve the active backend name ("compiled" or "pure")."""
    choice = os.environ.get("POLYGRAD_BACKEND", "auto")
    if choice not in ("auto", "compiled", "pure"):
        raise ConfigError(f"POLYGRAD_BACKEND must be auto|compiled|pure, got {choice!r}")
    if choice == "pure":
        return "pure"
    if choice == "compiled":
        if not _HAVE_COMPILED:
            raise ConfigError("POLYGRAD_BACKEND=compiled but the extension is not built")
        return "compiled"
    return "compiled" if _HAVE_COMPILED else "pure"


def fast_path_eligible(problem, method: str, stepsizes) -> bool:
    """The kernels cover additive-noise diagonal quadratics driven by the
    decay schedule (or a fixed stepsize for sgm)."""
    if not isinstance(problem, QuadraticProblem):
        return False
    if problem.noise.kind != ADDITIVE:
        return False
    if method == "sgm":
        return True
    if method not in METHOD_CODES:
        return False
    return isinstance(stepsizes, DecaySchedule)


def run_quadratic_trial(
    problem: QuadraticProblem,
    x0: np.ndarray,
    method: str,
    params: dict,
    stepsizes,
    max_k: int,
    checkpoints: np.ndarray,
    rng,
    force_backend: str | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Returns (X, M): iterate and direction snapshots, one row per
    checkpoint. Snapshots are taken at index k before the step at k, so
    k = 1 is the initial point; the direction row is the one used by
    step k. For iteravg the iterate snapshot is the running average."""
    if method not in METHOD_CODES:
        raise UsageError(f"kernel does not implement method {method!r}")
    if not fast_path_eligible(problem, method, stepsizes):
        raise UsageError("problem/method/schedule combination not kernel-eligible")

    cps = np.asarray(checkpoints, dtype=np.int64)
    if cps.ndim != 1 or cps.size == 0 or np.any(np.diff(cps) <= 0):
        raise UsageError("checkpoints must be strictly increasing and nonempty")
    if cps[0] < 1 or cps[-1] > max_k:
        raise UsageError("checkpoints must lie in [1, max_k]")

    p = float(params.get("p", 20.0))
    if method == "sgm":
        beta = float(params.get("beta", 0.9))
        alpha_fixed = float(params["alpha"])
        if not (0.0 <= beta < 1.0):
            raise ConfigError(f"sgm needs beta in [0, 1), got {beta}")
        s = 0.0
        sigma_sched = 0.0
    else:
        if not stepsizes.valid:
            raise ConfigError(
                "schedule fails its validity constraints; refusing to run:\n"
                + stepsizes.constraint_report.describe(stepsizes.s, stepsizes.sigma)
            )
        beta = 0.0
        alpha_fixed = 0.0
        s = stepsizes.s
        sigma_sched = stepsizes.sigma

    which = force_backend if force_backend is not None else backend()
    if which == "compiled":
        if not _HAVE_COMPILED:
            raise ConfigError("compiled backend requested but not built")
        return _speedups.run_trial(
            METHOD_CODES[method],
            problem.A_diag,
            problem.b,
            problem.noise.sigma,
            np.asarray(x0, dtype=np.float64),
            p,
            beta,
            alpha_fixed,
            s,
            sigma_sched,
            int(max_k),
            cps,
            rng,
            CHUNK,
        )
    if which != "pure":
        raise ConfigError(f"unknown backend {which!r}")
    return _run_pure(
        METHOD_CODES[method],
        problem.A_diag,
        problem.b,
        problem.noise.sigma,
        np.asarray(x0, dtype=np.float64),
        p,
        beta,
        alpha_fixed,
        s,
        sigma_sched,
        int(max_k),
        cps,
        rng,
        CHUNK,
    )


def _run_pure(
    method, a, b, sigma_noise, x0, p, beta, alpha_fixed, s, sigma_sched,
    max_k, cps, rng, chunk,
):
    """numpy twin of _speedups.run_trial; keep the two in lockstep."""
    d = a.size
    ncp = cps.size
    x = x0.copy()
    v = np.zeros(d)
    gsum = np.zeros(d)
    sbar = np.zeros(d)
    u = np.zeros(d)
    dxv = np.zeros(d)
    X = np.empty((ncp, d))
    M = np.empty((ncp, d))
    bk = 0.0
    bpow = 1.0
    ci = 0
    done = 0
    while done < max_k:
        m_len = min(chunk, max_k - done)
        Z = rng.standard_normal((m_len, d))
        for t in range(m_len):
            k = done + t + 1

            if method == 3:
                sbar = sbar + x

            take = ci < ncp and cps[ci] == k
            if take:
                X[ci] = sbar / k if method == 3 else x

            alpha = alpha_fixed if method == 4 else s / (k + sigma_sched)

            g = (a * x - b) + sigma_noise * Z[t]

            if method == 0 or method == 3:
                m = -g
                x = x + alpha * m
            elif method == 1:
                c = ((k - 1) / k) ** p
                v = c * v - g
                bk = bk * c + 1.0
                m = v / bk
                x = x + alpha * m
            elif method == 2:
                gsum = gsum + g
                m = -(gsum / k)
                x = x + alpha * m
            else:
                u = beta * u + g
                bpow = bpow * beta
                dxv = beta * dxv - alpha_fixed * g
                x = x + dxv
                m = u * (-(1.0 - beta) / (1.0 - bpow))

            if take:
                M[ci] = m
                ci += 1
        done += m_len
    return X, M
