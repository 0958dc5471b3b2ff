import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from benporath import lifecycle as lc
from benporath.exceptions import AllInfeasible, MaxIterations, NonFiniteIntegrand, NoSignChange
from benporath.numerics import (Bracket, GridSpec, find_bracket, find_root, grid_argmax, integrate,
                                scan_sign_changes)


def test_sqrt_two():
    x = find_root(lambda x: x * x - 2, Bracket.of(lambda x: x * x - 2, 1.0, 2.0), tol=1e-10)
    assert abs(x - 1.4142135624) < 1e-9


def test_identity_root():
    assert find_root(lambda x: x, Bracket.of(lambda x: x, -1.0, 1.0)) == pytest.approx(0.0, abs=1e-10)


def test_baseline_retirement_residual_root_matches_dense_scan():
    def g(R):
        return 0.6321 * (1 - R) - (0.7505 - np.exp(-R))

    grid = np.linspace(0.3, 0.99, 1_000_001)
    vals = g(grid)
    k = np.flatnonzero(np.sign(vals[:-1]) != np.sign(vals[1:]))[0]
    oracle = 0.5 * (grid[k] + grid[k + 1])
    root = find_root(g, Bracket.of(g, 0.3, 0.99))
    assert abs(root - oracle) < 1e-6
    assert abs(root - 0.644) < 1e-3


def test_bracket_rejects_same_sign():
    with pytest.raises(NoSignChange):
        Bracket.of(lambda x: x * x + 1, -1.0, 1.0)
    with pytest.raises(NoSignChange):
        Bracket(1.0, 0.0, -1.0, 1.0)


def test_max_iterations():
    g = lambda x: x ** 3 - 0.123  # noqa: E731
    with pytest.raises(MaxIterations):
        find_root(g, Bracket.of(g, 0.0, 1.0), tol=1e-15, max_iter=2)


def test_find_bracket_picks_leftmost_root():
    g = lambda x: (x - 0.2) * (x - 0.7)  # noqa: E731
    b = find_bracket(g, 0.0, 1.0)
    assert b.lo <= 0.2 <= b.hi
    assert find_root(g, b) == pytest.approx(0.2, abs=1e-10)


def test_find_bracket_skips_nan():
    g = lambda x: math.nan if x < 0.5 else x - 0.8  # noqa: E731
    assert find_root(g, find_bracket(g, 0.0, 1.0)) == pytest.approx(0.8, abs=1e-10)


def test_find_bracket_fails_without_sign_change():
    with pytest.raises(NoSignChange):
        find_bracket(lambda x: 1.0 + x, 0.0, 1.0)


def test_grid_argmax_quadratic():
    grid = GridSpec((0.0, 0.0), (1.0, 1.0), (101, 101))
    point, value = grid_argmax(lambda p: -(p[0] - 0.3) ** 2 - (p[1] - 0.6) ** 2, grid)
    np.testing.assert_allclose(point, [0.3, 0.6], atol=1e-12)
    assert value == pytest.approx(0.0, abs=1e-20)


def test_grid_argmax_tie_break_lexicographic():
    grid = GridSpec((-1.0, 2.0), (1.0, 3.0), (5, 4))
    point, _ = grid_argmax(lambda p: 7.0, grid)
    np.testing.assert_array_equal(point, [-1.0, 2.0])
    point, _ = grid_argmax(lambda x, y: np.zeros_like(x), grid, vectorized=True)
    np.testing.assert_array_equal(point, [-1.0, 2.0])


def test_grid_argmax_all_infeasible():
    grid = GridSpec((0.0,), (1.0,), (10,))
    with pytest.raises(AllInfeasible):
        grid_argmax(lambda p: -np.inf, grid)


def test_grid_argmax_baseline_lifetime_utility(prefs, tech, baseline):
    grid = GridSpec((0.0, 0.0), (0.99, 0.99), (1000, 1000))
    V = lc.lifetime_utility_surface(prefs, tech)
    point, _ = grid_argmax(V, grid, vectorized=True)
    step = grid.steps[0]
    assert abs(point[0] - baseline.s) <= step
    assert abs(point[1] - baseline.R) <= step
    assert abs(point[0] - 0.287) < 1e-3 + step and abs(point[1] - 0.644) < 1e-3 + step


def test_grid_spec_validation():
    with pytest.raises(ValueError):
        GridSpec((1.0,), (0.0,), (3,))
    with pytest.raises(ValueError):
        GridSpec((0.0,), (1.0,), (1,))


def test_integrate_examples():
    assert abs(integrate(lambda t: math.exp(-t), 0.0, 1.0) - (1 - math.exp(-1))) < 1e-10
    assert integrate(lambda t: 1 / t, 0.0, 0.0) == 0.0
    s, R = 0.287, 0.644
    closed = math.exp(s / 0.3) * (math.exp(-s) - math.exp(-R))
    got = integrate(lambda t: math.exp(-t) * math.exp(s / 0.3), s, R)
    assert abs(got - closed) < 1e-8
    assert abs(got - 0.5866) < 1e-4


def test_integrate_non_finite():
    with pytest.raises(NonFiniteIntegrand):
        integrate(lambda t: math.inf if t > 0.5 else 1.0, 0.0, 1.0)


def test_scan_sign_changes():
    assert scan_sign_changes([1, -1, -2, 3]) == 2
    assert scan_sign_changes([1, 2, 3]) == 0


@settings(max_examples=60, deadline=None)
@given(a=st.floats(-5, 5), shift=st.floats(0.1, 3.0), power=st.sampled_from([1, 3, 5]))
def test_root_residual_small(a, shift, power):
    def g(x):
        return (x - a) ** power * (1 + 0.1 * math.sin(x))

    tol = 1e-10
    b = Bracket.of(g, a - shift, a + shift * 0.7)
    x = find_root(g, b, tol=tol)
    assert abs(g(x)) <= 10 * tol or abs(x - a) <= tol


@settings(max_examples=60, deadline=None)
@given(s=st.floats(0.0, 0.6), span=st.floats(0.01, 0.39), k=st.floats(0.5, 6.0), r=st.floats(0.2, 2.0))
def test_integrate_matches_closed_forms(s, span, k, r):
    R = s + span
    w = math.exp(k * s)
    earn = integrate(lambda t: w * math.exp(-r * t), s, R)
    assert abs(earn - w * (math.exp(-r * s) - math.exp(-r * R)) / r) < 1e-8
    c = 0.7
    cons = integrate(lambda t: c * math.exp(-r * t), 0.0, 1.0)
    assert abs(cons - c * (1 - math.exp(-r)) / r) < 1e-8
