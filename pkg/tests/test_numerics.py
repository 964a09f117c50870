import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.linalg import expm
from scipy.optimize import brentq

from sturm_heat.numerics import (
    BracketError,
    Grid,
    IntegrationError,
    SampledFunction,
    cumulative_integral,
    find_root,
    find_roots,
    integrate,
    solve_ivp,
)


def sample(f, n):
    g = Grid(0.0, 1.0, n)
    return SampledFunction(g, f(g.points))


class TestGrid:
    def test_uniform_and_endpoints(self):
        g = Grid(0.0, 2.0, 401)
        d = np.diff(g.points)
        assert np.all(np.abs(d - g.h) <= 1e-12 * g.h)
        assert g.points[0] == 0.0 and g.points[-1] == 2.0

    def test_rejects_small_count(self):
        with pytest.raises(ValueError):
            Grid(0.0, 1.0, 2)

    def test_sampled_rejects_nonfinite(self):
        g = Grid(0.0, 1.0, 11)
        vals = np.zeros(11)
        vals[4] = np.nan
        with pytest.raises(IntegrationError, match="x=0.4"):
            SampledFunction(g, vals)

    def test_sampled_rejects_count_mismatch(self):
        with pytest.raises(ValueError):
            SampledFunction(Grid(0.0, 1.0, 11), np.zeros(10))


class TestIntegrate:
    def test_constant_exact(self):
        assert integrate(sample(lambda x: np.ones_like(x), 101)) == pytest.approx(1.0, abs=1e-15)

    def test_sin_squared(self):
        assert abs(integrate(sample(lambda x: np.sin(np.pi * x) ** 2, 1001)) - 0.5) <= 1e-9

    def test_cubic_simpson(self):
        assert abs(integrate(sample(lambda x: x**3, 101)) - 0.25) <= 1e-10

    def test_even_count_uses_trapezoid(self):
        n = 100
        g = Grid(0.0, 1.0, n)
        v = g.points**2
        assert integrate(v, g) == pytest.approx(np.trapezoid(v, g.points), rel=1e-14)

    def test_richardson_ratio(self):
        f = lambda x: np.exp(x) * np.cos(3 * x)
        vals = [integrate(sample(f, n)) for n in (11, 21, 41, 81)]
        diffs = np.abs(np.diff(vals))
        assert np.all(diffs[:-1] / diffs[1:] >= 3.5)

    @settings(max_examples=40, deadline=None)
    @given(st.floats(-10, 10), st.floats(-10, 10), st.integers(0, 5))
    def test_linearity(self, alpha, beta, k):
        g = Grid(0.0, 1.0, 201)
        f = np.cos((k + 1) * g.points)
        h = g.points ** k
        lhs = integrate(alpha * f + beta * h, g)
        rhs = alpha * integrate(f, g) + beta * integrate(h, g)
        scale = abs(alpha) * np.abs(f).max() + abs(beta) * np.abs(h).max()
        assert abs(lhs - rhs) <= 1e-12 * max(scale, 1e-300) + 1e-15

    def test_cumulative_matches_total(self):
        g = Grid(0.0, 1.0, 201)
        c = cumulative_integral(np.sin(g.points), g)
        assert c[0] == 0.0
        assert c[-1] == pytest.approx(integrate(np.sin(g.points), g), abs=1e-15)
        assert np.max(np.abs(c - (1 - np.cos(g.points)))) < 1e-9


class TestSolveIvp:
    def test_exponential(self):
        _, y = solve_ivp(lambda x, y: y, [1.0], (0.0, 1.0), 1e-3)
        assert abs(y[-1, 0] - math.e) <= 1e-10

    def test_zero_field(self):
        _, y = solve_ivp(lambda x, y: np.zeros_like(y), [3.5], (0.0, 1.0), 0.1)
        assert np.all(y == 3.5)

    def test_linear_phase(self):
        _, y = solve_ivp(lambda x, y: np.full_like(y, math.pi), [0.0], (0.0, 1.0), 1e-3)
        assert abs(y[-1, 0] - math.pi) <= 1e-12

    def test_fourth_order_against_expm(self):
        A = np.array([[0.0, 1.0], [-4.0, -0.3]])
        exact = expm(A * 2.0) @ np.array([1.0, 0.0])
        errs = []
        for step in (0.1, 0.05, 0.025):
            _, y = solve_ivp(lambda x, y: A @ y, [1.0, 0.0], (0.0, 2.0), step)
            errs.append(np.linalg.norm(y[-1] - exact))
        ratios = np.array(errs[:-1]) / np.array(errs[1:])
        assert np.all((ratios >= 14) & (ratios <= 18))

    def test_blowup_reports_position(self):
        # y' = y^2, y(0) = 1 blows up at x = 1
        with np.errstate(over="ignore", invalid="ignore"), pytest.raises(IntegrationError) as info:
            solve_ivp(lambda x, y: y**2, [1.0], (0.0, 2.0), 0.01)
        assert 0.9 < info.value.position < 1.1

    def test_step_must_divide(self):
        with pytest.raises(ValueError):
            solve_ivp(lambda x, y: y, [1.0], (0.0, 1.0), 0.3)


class TestFindRoot:
    def test_linear(self):
        assert find_root(lambda x: x - 2.0, 0.0, 5.0) == pytest.approx(2.0, abs=1e-12)

    def test_sqrt(self):
        r = find_root(lambda lam: math.sqrt(lam) - math.pi, 1.0, 20.0, 1e-12)
        assert abs(r - math.pi**2) <= 1e-10

    def test_transcendental_against_brentq(self):
        f = lambda s: math.tan(s) + 4 * s
        lo, hi = math.pi / 2 + 1e-9, math.pi - 1e-9
        r = find_root(f, lo, hi, 1e-13)
        ref = brentq(f, lo, hi, xtol=1e-15)
        assert abs(r - ref) <= 1e-12
        assert abs(r - 1.7155071527) < 1e-9

    def test_no_sign_change(self):
        with pytest.raises(BracketError):
            find_root(lambda x: x * x + 1, -1.0, 1.0)

    @settings(max_examples=60, deadline=None)
    @given(st.floats(-50, 50), st.floats(0.1, 10), st.integers(1, 7))
    def test_result_inside_bracket(self, root, width, power):
        lo, hi = root - width, root + 1.7 * width
        r = find_root(lambda x: np.sign(x - root) * abs(x - root) ** power, lo, hi, 1e-10)
        assert lo <= r <= hi
        assert abs(r - root) <= 1e-9 * max(1.0, abs(root))

    def test_vectorized(self):
        targets = np.array([1.0, 2.0, 3.0])
        r = find_roots(lambda x: x**3 - targets, np.zeros(3), np.full(3, 2.0), 1e-12)
        assert np.allclose(r, np.cbrt(targets), atol=1e-11)
