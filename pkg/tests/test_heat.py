import dataclasses
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import quad

from sturm_heat.heat import (
    GrowthWarning,
    accumulate,
    constant_coefficient,
    crank_nicolson_oracle,
    evolve,
    evolve_homogeneous,
    evolve_nonhomogeneous,
    pde_residual,
    project,
    sobolev_norm,
    solve,
    time_derivative,
)
from sturm_heat.numerics import Grid, SampledFunction
from sturm_heat.regularization import BUMP, REFLECT, DeltaAt, constant, mollify, regularize_potential
from sturm_heat.sturm_liouville import eigenbasis

G = Grid(0.0, 1.0, 2001)
X = G.points
PI2 = math.pi**2


def fn(values):
    return SampledFunction(G, values)


@pytest.fixture(scope="module")
def free():
    return eigenbasis(fn(0 * X), 40)


@pytest.fixture(scope="module")
def shifted():
    return eigenbasis(fn(0.3 * X), 40)


@pytest.fixture(scope="module")
def delta():
    q, nu = regularize_potential(DeltaAt(0.5), BUMP, 0.05, G)
    return q, eigenbasis(nu, 40)


def sine_coeff(n):
    """<x(1-x), sqrt2 sin(n pi x)> by adaptive quadrature."""
    return quad(lambda x: x * (1 - x) * math.sqrt(2) * math.sin(n * math.pi * x), 0, 1,
                epsabs=1e-14, limit=200)[0]


class TestProject:
    def test_sine(self, free):
        B = project(fn(np.sin(math.pi * X)), free)
        assert abs(B[0] - 1 / math.sqrt(2)) <= 1e-9
        assert np.max(np.abs(B[1:])) <= 1e-9

    def test_reproducing(self, shifted):
        B = project(fn(shifted.phi[2]), shifted)
        assert abs(B[2] - 1) <= 1e-8
        assert np.max(np.abs(np.delete(B, 2))) <= 1e-8

    def test_parabola_closed_form(self, free):
        B = project(fn(X * (1 - X)), free)
        n = np.arange(1, 41)
        closed = math.sqrt(2) * 2 * (1 - (-1.0) ** n) / (math.pi * n) ** 3
        assert np.max(np.abs(B - closed)) <= 1e-9
        assert [sine_coeff(k) for k in (1, 2, 3)] == pytest.approx(closed[:3], abs=1e-12)
        assert B[0] == pytest.approx(0.18244, abs=1e-5)
        assert B[2] == pytest.approx(0.0067571, abs=1e-7)

    def test_grid_mismatch(self, free):
        with pytest.raises(ValueError):
            project(SampledFunction(Grid(0, 1, 101), np.zeros(101)), free)


class TestAccumulate:
    def test_constant(self):
        tc = constant_coefficient(1.0, 1.0)
        assert np.max(np.abs(tc.A.values - tc.grid.points)) <= 1e-12

    def test_linear(self):
        g = Grid(0.0, 1.0, 2001)
        tc = accumulate(SampledFunction(g, 1 + g.points), 1.0)
        assert abs(tc.A.values[-1] - 1.5) <= 1e-9

    def test_delta_mass(self):
        g = Grid(0.0, 1.0, 2001)
        a = mollify(constant(1.0), BUMP, 0.05, g, REFLECT).values + \
            mollify(DeltaAt(0.5), BUMP, 0.05, g, REFLECT).values
        tc = accumulate(SampledFunction(g, a), 1.0)
        assert abs(tc.A.values[-1] - 2.0) <= 1e-6

    def test_below_floor_names_time(self):
        g = Grid(0.0, 1.0, 11)
        with pytest.raises(ValueError, match="t=0.3"):
            accumulate(SampledFunction(g, np.where(g.points > 0.25, 0.5, 1.0)), 1.0)

    @settings(max_examples=30, deadline=None)
    @given(st.floats(0.1, 5.0), st.floats(0.0, 3.0), st.floats(0.5, 20.0))
    def test_monotone_and_floor(self, a0, amp, freq):
        g = Grid(0.0, 2.0, 401)
        a = a0 + amp * np.sin(freq * g.points) ** 2
        tc = accumulate(SampledFunction(g, a), a0)
        A = tc.A.values
        assert A[0] == 0.0
        assert np.all(np.diff(A) >= a0 * g.h * (1 - 1e-12))


class TestEvolve:
    def test_single_mode(self, free):
        sol = solve(free, fn(np.sin(math.pi * X)), constant_coefficient(1.0, 1.0))
        u = evolve_homogeneous(sol, 0.1)
        i = np.searchsorted(X, 0.5)
        assert u.values[i] == pytest.approx(0.372708, abs=1e-6)
        err = fn(u.values - math.exp(-PI2 / 10) * np.sin(math.pi * X)).l2_norm()
        assert err <= 1e-6

    def test_initial_reproduces_truncation(self, shifted):
        sol = solve(shifted, fn(X * (1 - X) * np.exp(X)), constant_coefficient(1.0, 1.0))
        u = evolve(sol, 0.0).values
        assert fn(u - sol.B @ shifted.phi).l2_norm() <= 1e-10

    def test_parabola_vs_crank_nicolson(self, free):
        u0 = fn(X * (1 - X))
        tc = constant_coefficient(1.0, 0.05, 501)
        sol = solve(free, u0, tc)
        cn = crank_nicolson_oracle(fn(0 * X), tc, u0, t_out=[0.05])[0]
        assert fn(evolve(sol, 0.05).values - cn.values).l2_norm() <= 5e-4

    def test_rejects_time_outside(self, free):
        sol = solve(free, fn(np.sin(math.pi * X)), constant_coefficient(1.0, 1.0))
        with pytest.raises(ValueError):
            evolve(sol, 1.5)

    def test_per_mode_exactness(self, shifted):
        g = Grid(0.0, 1.0, 1001)
        tc = accumulate(SampledFunction(g, 1 + 0.5 * g.points), 1.0)
        sol = solve(shifted, fn(X * (1 - X)), tc)
        U = sol.amplitudes_on_grid()
        ref = sol.B * np.exp(-np.outer(tc.A.values, sol.lambdas))
        assert np.max(np.abs(U - ref)) <= 1e-15

    def test_non_expansive(self, delta):
        q, basis = delta
        sol = solve(basis, fn(X * (1 - X) + np.sin(3 * math.pi * X)), constant_coefficient(1.0, 1.0))
        norms = np.sqrt(np.sum(sol.amplitudes_on_grid() ** 2, axis=1))
        assert np.all(norms <= math.sqrt(np.sum(sol.B**2)) * (1 + 1e-14))

    def test_cocycle(self, shifted):
        g = Grid(0.0, 1.0, 1001)
        tc = accumulate(SampledFunction(g, 1 + np.sin(3 * g.points) ** 2), 1.0)
        sol = solve(shifted, fn(X * (1 - X)), tc)
        t1, t2 = 0.02, 0.05
        restarted = sol.restart(t1)
        direct = evolve(sol, t2).values
        again = evolve(restarted, t2 - t1).values
        assert np.max(np.abs(direct - again)) <= 1e-8

    def test_bessel_and_tail(self, delta):
        q, basis = delta
        u0 = fn(np.where(X < 0.3, X, 0.3 * (1 - X) / 0.7))
        sol = solve(basis, u0, constant_coefficient(1.0, 1.0))
        assert np.sum(sol.B**2) <= u0.l2_norm() ** 2 * (1 + 1e-8)
        assert sol.tail == pytest.approx(u0.l2_norm() ** 2 - np.sum(sol.B**2), abs=1e-15)
        assert sol.tail >= 0


class TestNonhomogeneous:
    def test_stationary_limit(self, free):
        tc = constant_coefficient(1.0, 2.0, 2001)
        sol = solve(free, fn(0 * X), tc, lambda t, x: np.sin(math.pi * x))
        amp = sol.amplitudes(2.0)[0] * math.sqrt(2)  # coefficient of sin(pi x)
        assert abs(amp - 1 / PI2) <= 1e-5

    def test_zero_source_matches_homogeneous(self, delta):
        q, basis = delta
        tc = constant_coefficient(1.0, 1.0)
        u0 = fn(np.sin(math.pi * X))
        a = solve(basis, u0, tc)
        b = solve(basis, u0, tc, lambda t, x: 0 * x)
        for t in (0.0, 0.013, 0.5, 1.0):
            assert np.max(np.abs(evolve_nonhomogeneous(b, t).values - evolve_homogeneous(a, t).values)) <= 1e-12

    def test_exponential_source(self, free):
        tc = constant_coefficient(1.0, 1.0)
        sol = solve(free, fn(0 * X), tc, lambda t, x: math.exp(-t) * np.sin(math.pi * x))
        i = np.searchsorted(X, 0.5)
        exact = (math.exp(-0.5) - math.exp(-PI2 / 2)) / (PI2 - 1)
        assert exact == pytest.approx(0.0675722, abs=1e-7)
        assert evolve(sol, 0.5).values[i] == pytest.approx(exact, abs=1e-7)
        # off-node time exercises the partial-interval Duhamel step
        t = 0.50025
        exact = (math.exp(-t) - math.exp(-PI2 * t)) / (PI2 - 1)
        assert evolve(sol, t).values[i] == pytest.approx(exact, abs=1e-7)

    def test_sampled_source_equals_callable(self, free):
        tc = constant_coefficient(1.0, 0.2, 101)
        f = lambda t, x: (1 + t) * x * (1 - x)
        samples = np.stack([f(t, X) for t in tc.grid.points])
        a = solve(free, fn(0 * X), tc, f)
        b = solve(free, fn(0 * X), tc, samples)
        assert np.max(np.abs(a.f_coeffs - b.f_coeffs)) == 0.0

    def test_source_vs_crank_nicolson(self, delta):
        q, basis = delta
        tc = constant_coefficient(1.0, 0.1, 1001)
        f = lambda t, x: np.cos(5 * t) * x * (1 - x)
        u0 = fn(np.sin(math.pi * X))
        sol = solve(basis, u0, tc, f)
        cn = crank_nicolson_oracle(q, tc, u0, f, t_out=[0.1])[0]
        assert fn(evolve(sol, 0.1).values - cn.values).l2_norm() <= 2e-3


class TestTimeDerivative:
    def test_single_mode(self, free):
        sol = solve(free, fn(np.sin(math.pi * X)), constant_coefficient(1.0, 1.0))
        i = np.searchsorted(X, 0.5)
        assert time_derivative(sol, 0.0).values[i] == pytest.approx(-PI2, abs=1e-6)

    def test_finite_difference_in_time(self, shifted):
        g = Grid(0.0, 1.0, 2001)
        tc = accumulate(SampledFunction(g, 1 + 0.5 * g.points), 1.0)
        sol = solve(shifted, fn(X * (1 - X)), tc, lambda t, x: np.exp(-t) * np.sin(2 * math.pi * x))
        t, d = 0.3, 1e-4
        fd = (evolve(sol, t + d).values - evolve(sol, t - d).values) / (2 * d)
        dt = time_derivative(sol, t).values
        assert fn(fd - dt).l2_norm() <= 1e-5 * fn(dt).l2_norm()

    @pytest.mark.parametrize("u0", ["sine", "parabola"])
    def test_pde_residual(self, delta, u0):
        q, basis = delta
        vals = np.sin(math.pi * X) if u0 == "sine" else X * (1 - X)
        sol = solve(basis, fn(vals), constant_coefficient(1.0, 1.0))
        for t in np.linspace(0, 1, 5):
            check = pde_residual(sol, q, t)
            assert check.passed, check


class TestSobolev:
    def test_l2(self):
        c = np.array([3.0, 4.0])
        assert sobolev_norm(c, np.array([1.0, 5.0]), 0) == 5.0

    def test_single_mode(self, free):
        B = project(fn(np.sin(math.pi * X)), free)
        assert sobolev_norm(B, free.lambdas, 2) == pytest.approx(PI2 / math.sqrt(2), rel=1e-8)

    def test_parabola_w1(self, free):
        # sum lam_n B_n^2 = ||u0'||^2 = 1/3 (tail beyond 40 modes ~ 1e-6 relative)
        B = project(fn(X * (1 - X)), free)
        assert sobolev_norm(B, free.lambdas, 1) == pytest.approx(1 / math.sqrt(3), rel=1e-5)

    def test_fractional_with_negative_eigenvalue(self):
        with pytest.raises(ValueError):
            sobolev_norm(np.ones(2), np.array([-1.0, 4.0]), 0.5)

    def test_growth_flag(self, free):
        grown = dataclasses.replace(free, lambdas=free.lambdas - 20.0)
        sol = solve(grown, fn(np.sin(math.pi * X)), constant_coefficient(1.0, 1.0))
        assert sol.growing
        with pytest.warns(GrowthWarning):
            evolve(sol, 0.1)


class TestCrankNicolson:
    def test_heat_mode(self):
        tc = constant_coefficient(1.0, 0.1, 1001)
        cn = crank_nicolson_oracle(fn(0 * X), tc, fn(np.sin(math.pi * X)), t_out=[0.1])[0]
        assert np.max(np.abs(cn.values - math.exp(-PI2 / 10) * np.sin(math.pi * X))) <= 5e-5

    def test_null_data(self):
        tc = constant_coefficient(1.0, 0.1, 101)
        cn = crank_nicolson_oracle(fn(0 * X), tc, fn(0 * X), lambda t, x: 0 * x, t_out=[0.05, 0.1])
        assert all(np.all(c.values == 0) for c in cn)

    def test_delta_vs_spectral(self, delta):
        q, basis = delta
        tc = constant_coefficient(1.0, 0.1, 1001)
        u0 = fn(np.sin(math.pi * X))
        cn = crank_nicolson_oracle(q, tc, u0, t_out=[0.1])[0]
        sp = evolve(solve(basis, u0, tc), 0.1)
        assert fn(cn.values - sp.values).l2_norm() <= 2e-3
