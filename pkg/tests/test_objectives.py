"""Objective oracles: closed forms, gradient correctness, noise-model
moments, and reference solutions."""
from __future__ import annotations

import numpy as np
import pytest

from polygrad.core import ConfigError, RngStream, UsageError, check_hessian_bracket
from polygrad.objectives import (
    ADDITIVE,
    SUBSAMPLE,
    DATA_STREAM_ID,
    FiniteSumLeastSquares,
    LogisticL2Problem,
    NoiseModel,
    QuadraticProblem,
    initial_point,
    make_least_squares,
    make_logistic,
    make_quadratic,
    reference_solution,
    shipped_problems,
)


def _fd_gradient(problem, x, h=1e-6):
    g = np.empty_like(x)
    for j in range(x.size):
        e = np.zeros_like(x)
        e[j] = h
        g[j] = (problem.value(x + e) - problem.value(x - e)) / (2.0 * h)
    return g


# ---------------------------------------------------------------------------
# quadratic closed forms
# ---------------------------------------------------------------------------


def test_quadratic_hand_case():
    prob = QuadraticProblem([2.0, 4.0], [2.0, 8.0], NoiseModel(ADDITIVE, sigma=0.0))
    assert np.allclose(prob.x_star, [1.0, 2.0], rtol=0, atol=0)
    assert prob.fstar == pytest.approx(-9.0, rel=0, abs=0)
    assert prob.value(np.zeros(2)) == 0.0
    assert prob.gap(np.zeros(2)) == pytest.approx(9.0, rel=1e-15)
    assert np.allclose(prob.full_gradient(np.zeros(2)), [-2.0, -8.0])
    assert prob.constants.l == 2.0 and prob.constants.L == 4.0


def test_quadratic_gap_is_cancellation_free_near_optimum():
    prob = make_quadratic(dim=5, l=0.5, L=1.0, data_seed=2, sigma=0.0)
    x = prob.x_star + 1e-9
    gap = prob.gap(x)
    assert gap > 0.0
    # direct value() - fstar at this distance is pure cancellation noise;
    # the quadratic-form gap keeps full relative precision
    expected = 0.5 * float(np.sum(prob.A_diag * 1e-18))
    assert gap == pytest.approx(expected, rel=1e-12)


def test_quadratic_rejects_bad_inputs():
    with pytest.raises(UsageError):
        QuadraticProblem([1.0, -1.0], [0.0, 0.0], NoiseModel(ADDITIVE))
    with pytest.raises(UsageError):
        QuadraticProblem([1.0], [0.0, 0.0], NoiseModel(ADDITIVE))
    with pytest.raises(ConfigError):
        QuadraticProblem([1.0], [0.0], NoiseModel(SUBSAMPLE))


def test_make_quadratic_spectrum_and_constants():
    prob = make_quadratic(dim=20, l=0.5, L=1.0, data_seed=11, sigma=0.1)
    assert prob.A_diag[0] == 0.5 and prob.A_diag[-1] == 1.0
    assert prob.constants.l == 0.5 and prob.constants.L == 1.0
    assert prob.constants.M == pytest.approx(0.1**2 * 20, rel=1e-15)
    assert prob.constants.M_V == 0.0


# ---------------------------------------------------------------------------
# gradient oracles (finite differences)
# ---------------------------------------------------------------------------


@pytest.mark.parametrize(
    "factory",
    [
        lambda: make_quadratic(dim=6, l=0.5, L=1.0, data_seed=3, sigma=0.1),
        lambda: make_least_squares(n=40, dim=6, ridge=0.5, data_seed=3),
        lambda: make_logistic(n=40, dim=6, ridge=0.5, data_seed=3),
    ],
    ids=["quadratic", "least_squares", "logistic"],
)
def test_full_gradient_matches_finite_differences(factory):
    prob = factory()
    rng = RngStream(8, 0).generator()
    for _ in range(3):
        x = prob.x_star + rng.standard_normal(prob.dim)
        fd = _fd_gradient(prob, x)
        assert np.allclose(prob.full_gradient(x), fd, rtol=1e-6, atol=1e-8)


def test_component_gradients_average_to_full_gradient():
    prob = make_least_squares(n=25, dim=4, ridge=0.5, data_seed=5)
    x = prob.x_star + 0.7
    mean_comp = np.mean(
        [prob.component_gradient(x, i) for i in range(prob.n_components)], axis=0
    )
    assert np.allclose(mean_comp, prob.full_gradient(x), rtol=1e-12, atol=1e-14)

    logit = make_logistic(n=25, dim=4, ridge=0.5, data_seed=5)
    x = logit.x_star + 0.3
    mean_comp = np.mean(
        [logit.component_gradient(x, i) for i in range(logit.n_components)], axis=0
    )
    assert np.allclose(mean_comp, logit.full_gradient(x), rtol=1e-12, atol=1e-14)


# ---------------------------------------------------------------------------
# stochastic gradient moments
# ---------------------------------------------------------------------------


def test_additive_noise_mean_and_variance_monte_carlo():
    sigma, d, n_draws = 0.5, 10, 100_000
    prob = make_quadratic(dim=d, l=0.5, L=1.0, data_seed=4, sigma=sigma)
    x = prob.x_star + 1.0
    rng = RngStream(12, 0).generator()
    draws = np.stack([prob.stochastic_gradient(x, rng) for _ in range(n_draws)])
    mean_err = draws.mean(axis=0) - prob.full_gradient(x)
    # CLT: each coordinate mean has sd sigma/sqrt(N); allow 5 sds
    assert np.all(np.abs(mean_err) <= 5 * sigma / np.sqrt(n_draws))
    total_var = float(draws.var(axis=0, ddof=1).sum())
    assert total_var == pytest.approx(prob.single_draw_variance(x), rel=0.05)
    assert prob.single_draw_variance(x) == sigma**2 * d


def test_subsample_noise_is_unbiased():
    prob = make_least_squares(n=30, dim=5, ridge=0.5, data_seed=6)
    x = prob.x_star + 1.0
    rng = RngStream(13, 0).generator()
    n_draws = 60_000
    draws = np.stack([prob.stochastic_gradient(x, rng) for _ in range(n_draws)])
    sd_mean = np.sqrt(prob.single_draw_variance(x) / n_draws)
    err = float(np.linalg.norm(draws.mean(axis=0) - prob.full_gradient(x)))
    assert err <= 6 * sd_mean


def test_subsample_variance_closed_form_matches_monte_carlo():
    prob = make_least_squares(n=30, dim=5, ridge=0.5, data_seed=6)
    x = prob.x_star + 0.5
    rng = RngStream(14, 0).generator()
    draws = np.stack([prob.stochastic_gradient(x, rng) for _ in range(40_000)])
    mc = float(draws.var(axis=0, ddof=1).sum())
    assert mc == pytest.approx(prob.single_draw_variance(x), rel=0.05)


def test_batch_size_divides_variance():
    one = make_least_squares(n=30, dim=5, ridge=0.5, data_seed=6, batch=1)
    four = make_least_squares(n=30, dim=5, ridge=0.5, data_seed=6, batch=4)
    x = one.x_star + 1.0
    assert four.single_draw_variance(x) == pytest.approx(
        one.single_draw_variance(x) / 4.0, rel=1e-12
    )


def test_sigma_zero_additive_noise_is_exact_gradient():
    prob = QuadraticProblem([1.0, 2.0], [1.0, 1.0], NoiseModel(ADDITIVE, sigma=0.0))
    rng = RngStream(15, 0).generator()
    x = np.array([3.0, -1.0])
    assert np.array_equal(prob.stochastic_gradient(x, rng), prob.full_gradient(x))


def test_noise_model_validation():
    with pytest.raises(ConfigError):
        NoiseModel("white")
    with pytest.raises(ConfigError):
        NoiseModel(ADDITIVE, sigma=-0.1)
    with pytest.raises(ConfigError):
        NoiseModel(SUBSAMPLE, batch=0)


# ---------------------------------------------------------------------------
# reference solutions
# ---------------------------------------------------------------------------


def test_least_squares_reference_satisfies_normal_equations():
    prob = make_least_squares(n=50, dim=8, ridge=0.5, data_seed=7)
    lhs = prob._H @ prob.x_star
    rhs = prob.rows.T @ prob.targets / prob.rows.shape[0]
    assert np.allclose(lhs, rhs, rtol=1e-12, atol=1e-12)
    assert float(np.linalg.norm(prob.full_gradient(prob.x_star))) <= 1e-12


def test_logistic_reference_gradient_below_solve_tolerance():
    prob = make_logistic(n=50, dim=5, ridge=0.5, data_seed=8)
    gnorm = float(np.linalg.norm(prob.full_gradient(prob.x_star)))
    assert gnorm <= prob.solve_tol
    # PL certificate: the value error is at most gnorm^2 / (2 l)
    cert = prob.solve_tol**2 / (2.0 * prob.constants.l)
    assert cert < prob.reference_tolerance


def test_logistic_reference_stable_under_tighter_solve():
    rows = RngStream(16, 0).generator().standard_normal((40, 4))
    labels = np.where(rows[:, 0] + rows[:, 1] >= 0.0, 1.0, -1.0)
    loose = LogisticL2Problem(rows, labels, ridge=0.5, solve_tol=1e-12)
    tight = LogisticL2Problem(rows, labels, ridge=0.5, solve_tol=1e-13)
    assert abs(loose.fstar - tight.fstar) <= 1e-10 * max(1.0, abs(tight.fstar))
    assert float(np.linalg.norm(loose.x_star - tight.x_star)) <= 1e-6


def test_reference_solution_returns_copies():
    prob = make_quadratic(dim=3, l=0.5, L=1.0, data_seed=9, sigma=0.0)
    x, f = reference_solution(prob)
    x[:] = 0.0
    assert not np.allclose(prob.x_star, 0.0)
    assert f == prob.fstar


def test_logistic_input_validation():
    rows = np.ones((4, 2))
    with pytest.raises(UsageError):
        LogisticL2Problem(rows, np.array([1.0, 2.0, 1.0, -1.0]), ridge=0.5)
    with pytest.raises(UsageError):
        LogisticL2Problem(rows, np.ones(4), ridge=0.0)


# ---------------------------------------------------------------------------
# declared constants
# ---------------------------------------------------------------------------


def test_least_squares_constants_are_exact_extreme_eigenvalues():
    prob = make_least_squares(n=50, dim=6, ridge=0.5, data_seed=10)
    evals = np.linalg.eigvalsh(prob._H)
    assert prob.constants.l == pytest.approx(float(evals[0]), rel=1e-14)
    assert prob.constants.L == pytest.approx(float(evals[-1]), rel=1e-14)
    ok, lo, hi = check_hessian_bracket(prob, RngStream(17, 0).generator())
    assert ok


def test_logistic_modulus_is_the_ridge():
    prob = make_logistic(n=40, dim=5, ridge=0.7, data_seed=11)
    assert prob.constants.l == 0.7
    gram_top = float(np.linalg.eigvalsh(prob.rows.T @ prob.rows / 40)[-1])
    assert prob.constants.L == pytest.approx(0.7 + gram_top / 4.0, rel=1e-14)


# ---------------------------------------------------------------------------
# data and start-point streams
# ---------------------------------------------------------------------------


def test_problem_data_is_reproducible_per_seed():
    a = make_least_squares(n=10, dim=3, ridge=0.5, data_seed=21)
    b = make_least_squares(n=10, dim=3, ridge=0.5, data_seed=21)
    c = make_least_squares(n=10, dim=3, ridge=0.5, data_seed=22)
    assert np.array_equal(a.rows, b.rows)
    assert np.array_equal(a.targets, b.targets)
    assert not np.array_equal(a.rows, c.rows)


def test_initial_point_stream_is_separate_from_data_stream():
    prob = make_quadratic(dim=4, l=0.5, L=1.0, data_seed=21, sigma=0.0)
    x0 = initial_point(prob, data_seed=21, radius=1.0)
    data_draw = RngStream(21, DATA_STREAM_ID).generator().standard_normal(4)
    offset = x0 - prob.x_star
    assert not np.allclose(offset, data_draw)
    # both radii share the same draw, so the offsets are proportional
    x0_wide = initial_point(prob, data_seed=21, radius=2.0)
    assert np.allclose(x0_wide - prob.x_star, 2.0 * offset, rtol=1e-12)


def test_trial_stream_ids_do_not_collide_with_data_streams():
    assert DATA_STREAM_ID == 2**63 - 1
    assert DATA_STREAM_ID - 1 > 10**9


def test_shipped_problems_cover_all_three_kinds():
    probs = shipped_problems()
    kinds = {type(p).__name__ for p in probs}
    assert kinds == {
        "QuadraticProblem",
        "FiniteSumLeastSquares",
        "LogisticL2Problem",
    }
