"""Backend equivalence: the compiled kernel, the numpy kernel, and the
generic per-step object path must produce bit-identical snapshots."""
from __future__ import annotations

import numpy as np
import pytest

from polygrad import _kernels
from polygrad.core import ConfigError, RngStream, UsageError
from polygrad.objectives import (
    ADDITIVE,
    NoiseModel,
    QuadraticProblem,
    make_least_squares,
    make_quadratic,
)
from polygrad.optimizers import STEP_FUNCTIONS, init_state
from polygrad.schedules import DecaySchedule, FixedStepsize

needs_compiled = pytest.mark.skipif(
    not _kernels.compiled_available(), reason="compiled extension not built"
)

KERNEL_CASES = [
    ("sg", {}),
    ("accel", {"p": 20.0}),
    ("accel", {"p": 1.0}),
    ("gradavg", {}),
    ("iteravg", {}),
    ("sgm", {"alpha": 0.05, "beta": 0.9}),
]


def _setup(dim=7, sigma=0.1):
    problem = make_quadratic(dim=dim, l=0.5, L=1.0, data_seed=3, sigma=sigma)
    x0 = problem.x_star + 1.0
    sched = DecaySchedule.make(20.0, problem.constants)
    cps = np.array([1, 2, 3, 7, 50, 128, 200, 499, 500], dtype=np.int64)
    return problem, x0, sched, cps


def _run(problem, x0, method, params, sched, cps, backend):
    stepsizes = FixedStepsize(params["alpha"]) if method == "sgm" else sched
    rng = RngStream(0, 42).generator()
    return _kernels.run_quadratic_trial(
        problem, x0, method, params, stepsizes, 500, cps, rng,
        force_backend=backend,
    )


def _run_object_path(problem, x0, method, params, sched, cps):
    stepsizes = FixedStepsize(params["alpha"]) if method == "sgm" else sched
    rng = RngStream(0, 42).generator()
    state = init_state(method, x0, params)
    step = STEP_FUNCTIONS[method]
    X = np.empty((len(cps), problem.dim))
    M = np.empty((len(cps), problem.dim))
    ci = 0
    for k in range(1, 501):
        if ci < len(cps) and cps[ci] == k:
            X[ci] = state.record_point()
        step(state, problem, stepsizes, rng)
        if ci < len(cps) and cps[ci] == k:
            M[ci] = state.m
            ci += 1
    return X, M


@needs_compiled
@pytest.mark.parametrize("method,params", KERNEL_CASES)
def test_compiled_equals_pure_bitwise(method, params):
    problem, x0, sched, cps = _setup()
    Xc, Mc = _run(problem, x0, method, params, sched, cps, "compiled")
    Xp, Mp = _run(problem, x0, method, params, sched, cps, "pure")
    assert np.array_equal(Xc, Xp)
    assert np.array_equal(Mc, Mp)


@pytest.mark.parametrize("method,params", KERNEL_CASES)
def test_pure_kernel_equals_object_path_bitwise(method, params):
    problem, x0, sched, cps = _setup()
    Xk, Mk = _run(problem, x0, method, params, sched, cps, "pure")
    Xo, Mo = _run_object_path(problem, x0, method, params, sched, cps)
    assert np.array_equal(Xk, Xo)
    assert np.array_equal(Mk, Mo)


@needs_compiled
def test_chunk_boundaries_do_not_change_the_stream():
    # max_k far beyond one chunk: the chunked draws must agree with the
    # strictly sequential object path across block boundaries
    problem, x0, sched, _ = _setup(dim=3)
    n = _kernels.CHUNK + 37
    cps = np.array([1, _kernels.CHUNK - 1, _kernels.CHUNK, _kernels.CHUNK + 1, n])
    rng = RngStream(0, 9).generator()
    Xc, Mc = _kernels.run_quadratic_trial(
        problem, x0, "sg", {}, sched, n, cps, rng, force_backend="compiled"
    )
    rng = RngStream(0, 9).generator()
    state = init_state("sg", x0, {})
    X = np.empty((len(cps), 3))
    M = np.empty((len(cps), 3))
    ci = 0
    for k in range(1, n + 1):
        if ci < len(cps) and cps[ci] == k:
            X[ci] = state.record_point()
        STEP_FUNCTIONS["sg"](state, problem, sched, rng)
        if ci < len(cps) and cps[ci] == k:
            M[ci] = state.m
            ci += 1
    assert np.array_equal(Xc, X)
    assert np.array_equal(Mc, M)


# ---------------------------------------------------------------------------
# backend selection
# ---------------------------------------------------------------------------


def test_backend_env_selection(monkeypatch):
    monkeypatch.setenv("POLYGRAD_BACKEND", "pure")
    assert _kernels.backend() == "pure"
    monkeypatch.setenv("POLYGRAD_BACKEND", "auto")
    expected = "compiled" if _kernels.compiled_available() else "pure"
    assert _kernels.backend() == expected
    monkeypatch.delenv("POLYGRAD_BACKEND")
    assert _kernels.backend() == expected
    monkeypatch.setenv("POLYGRAD_BACKEND", "vectorized")
    with pytest.raises(ConfigError):
        _kernels.backend()


@needs_compiled
def test_backend_env_compiled(monkeypatch):
    monkeypatch.setenv("POLYGRAD_BACKEND", "compiled")
    assert _kernels.backend() == "compiled"


# ---------------------------------------------------------------------------
# eligibility and validation
# ---------------------------------------------------------------------------


def test_fast_path_eligibility():
    problem, _, sched, _ = _setup()
    assert _kernels.fast_path_eligible(problem, "sg", sched)
    assert _kernels.fast_path_eligible(problem, "accel", sched)
    assert _kernels.fast_path_eligible(problem, "sgm", FixedStepsize(0.05))
    # fixed stepsize disqualifies the schedule-driven methods
    assert not _kernels.fast_path_eligible(problem, "sg", FixedStepsize(0.05))
    # svrg has no kernel
    assert not _kernels.fast_path_eligible(problem, "svrg", sched)
    # non-quadratic problems take the object path
    ls = make_least_squares(n=10, dim=3, ridge=0.5, data_seed=4)
    assert not _kernels.fast_path_eligible(ls, "sg", sched)


def test_kernel_rejects_bad_checkpoints():
    problem, x0, sched, _ = _setup()
    rng = RngStream(0, 0).generator()
    with pytest.raises(UsageError):
        _kernels.run_quadratic_trial(
            problem, x0, "sg", {}, sched, 100, np.array([5, 5, 10]), rng
        )
    with pytest.raises(UsageError):
        _kernels.run_quadratic_trial(
            problem, x0, "sg", {}, sched, 100, np.array([1, 200]), rng
        )
    with pytest.raises(UsageError):
        _kernels.run_quadratic_trial(
            problem, x0, "sg", {}, sched, 100, np.array([], dtype=np.int64), rng
        )


def test_kernel_rejects_invalid_schedule():
    problem, x0, _, cps = _setup()
    bad = DecaySchedule.make(20.0, problem.constants, sigma=1.0)
    with pytest.raises(ConfigError):
        _kernels.run_quadratic_trial(
            problem, x0, "sg", {}, bad, 500, cps, RngStream(0, 0).generator()
        )


def test_kernel_rejects_unknown_method():
    problem, x0, sched, cps = _setup()
    with pytest.raises(UsageError):
        _kernels.run_quadratic_trial(
            problem, x0, "svrg", {"alpha": 0.1, "svrg_m": 5}, sched, 500, cps,
            RngStream(0, 0).generator(),
        )


def test_kernel_rejects_bad_sgm_beta():
    problem, x0, sched, cps = _setup()
    with pytest.raises(ConfigError):
        _kernels.run_quadratic_trial(
            problem, x0, "sgm", {"alpha": 0.1, "beta": 1.0},
            FixedStepsize(0.1), 500, cps, RngStream(0, 0).generator(),
        )


def test_snapshot_convention_k1_is_the_initial_point():
    problem, x0, sched, _ = _setup()
    cps = np.array([1], dtype=np.int64)
    X, M = _run(problem, x0, "sg", {}, sched, cps, "pure")
    assert np.array_equal(X[0], x0)
    # the direction at k=1 is the one the first step used
    rng = RngStream(0, 42).generator()
    g1 = problem.stochastic_gradient(x0, rng)
    assert np.array_equal(M[0], -g1)
