from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose

from multiway_el.el_core import (INFEASIBLE, ELProblem, Status, el_statistic, origin_in_hull,
                                 solve_dual)
from multiway_el.errors import ELConvergenceError
from oracles import primal_el_statistic

# primal oracle value for {-1, 0.5, 0.5, 2}, frozen
SKEWED_FOUR = 0.9003364149189117


def test_zero_mean_values_give_zero_lambda_and_uniform_weights():
    sol = solve_dual(ELProblem([-3.0, 3.0, -1.5, 1.5]))
    assert sol.status is Status.CONVERGED
    assert_allclose(sol.lam, 0.0, atol=1e-15)
    assert sol.statistic == 0.0
    assert_allclose(sol.weights, 0.25)


def test_positive_values_are_infeasible():
    sol = solve_dual(ELProblem([1.0, 2.0, 3.0]))
    assert sol.status is Status.INFEASIBLE_HULL
    assert sol.statistic == INFEASIBLE


def test_skewed_four_matches_primal():
    assert_allclose(primal_el_statistic([-1, 0.5, 0.5, 2]), SKEWED_FOUR, rtol=1e-12)
    assert_allclose(el_statistic([-1, 0.5, 0.5, 2]), SKEWED_FOUR, atol=1e-6)


def test_three_point_matches_primal():
    expected = primal_el_statistic([-0.5, -0.5, 1.0])
    assert_allclose(el_statistic([-0.5, -0.5, 1.0]), expected, atol=1e-6)


def test_identical_nonzero_values_return_sentinel():
    assert el_statistic(np.full((5, 2), 0.7)) == math.inf


def test_zero_mean_statistic_is_zero():
    assert el_statistic(np.array([[1.0, -2.0], [-1.0, 2.0], [0.5, 0.5], [-0.5, -0.5]])) == 0.0


def test_max_iterations_raises_distinct_error():
    values = np.array([-1.0, 0.05, 0.1, 3.0, 2.0])
    with pytest.raises(ELConvergenceError):
        el_statistic(values, max_iterations=1)
    assert el_statistic(values) < math.inf


def test_problem_validation():
    with pytest.raises(ValueError):
        ELProblem([1.0, np.nan, -1.0])
    with pytest.raises(ValueError):
        ELProblem([1.0, -1.0], tolerance=0.0)
    with pytest.raises(ValueError):
        ELProblem([1.0, -1.0], max_iterations=0)


def test_hull_check_multivariate():
    square = np.array([[1, 1], [1, -1], [-1, 1], [-1, -1]], dtype=float)
    assert origin_in_hull(square)
    assert not origin_in_hull(square + [2.5, 0])


def test_objective_never_decreases():
    rng = np.random.default_rng(3)
    for _ in range(50):
        v = rng.standard_normal((12, 2)) + [0.4, -0.2]
        sol = solve_dual(ELProblem(v))
        if sol.status is Status.CONVERGED:
            assert np.all(np.diff(sol.history) >= -1e-12)


def test_weights_recover_constraints():
    rng = np.random.default_rng(7)
    v = rng.standard_normal((30, 3)) + 0.2
    sol = solve_dual(ELProblem(v, tolerance=1e-9))
    assert sol.status is Status.CONVERGED
    assert_allclose(sol.weights.sum(), 1.0, atol=1e-10)
    assert np.linalg.norm(sol.weights @ v) <= 10 * 1e-9
    assert np.all(1 + v @ sol.lam > 0)
    assert sol.statistic >= 0


def test_scaling_invariance():
    rng = np.random.default_rng(11)
    v = rng.standard_normal((20, 2)) + [0.3, 0.1]
    A = np.array([[2.0, 0.5], [-0.3, 1.5]])
    s1 = solve_dual(ELProblem(v))
    s2 = solve_dual(ELProblem(v @ A.T))
    assert_allclose(s2.statistic, s1.statistic, atol=1e-8)
    assert_allclose(s2.lam, np.linalg.solve(A.T, s1.lam), rtol=1e-6, atol=1e-10)


@settings(max_examples=200, deadline=None)
@given(st.lists(st.floats(-10, 10, allow_nan=False), min_size=2, max_size=8))
def test_dual_matches_primal_when_values_straddle_zero(xs):
    v = np.array(xs)
    if not (v.min() < -1e-3 and v.max() > 1e-3):
        return
    spread = v.max() - v.min()
    # keep the hull clearly around the origin so both routes converge tightly
    if min(-v.min(), v.max()) < 1e-2 * spread:
        return
    assert_allclose(el_statistic(v), primal_el_statistic(v), atol=1e-6)
