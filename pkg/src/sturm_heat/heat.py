"""Eigenfunction-expansion solver for  u_t = -a(t) (-u_xx + q u) + f  on (0, 1).

Each mode obeys  u_n' + lam_n a(t) u_n = f_n(t), so with A(t) = int_0^t a

    u_n(t) = B_n exp(-lam_n A(t)) + int_0^t exp(-lam_n (A(t) - A(s))) f_n(s) ds.

A is piecewise linear between time nodes.  The source term is integrated
exactly for piecewise-linear f_n, which keeps it accurate when lam_n dt >> 1.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.linalg import solve_banded

from .numerics import Grid, NumericsError, SampledFunction, cumulative_trapezoid, quadrature_weights
from .sturm_liouville import EigenBasis

DEFAULT_N_MAX = 40


class GrowthWarning(UserWarning):
    """Some eigenvalue is non-positive, so modes may grow in time."""


@dataclass(frozen=True)
class TimeCoefficient:
    a: SampledFunction
    a_floor: float
    A: SampledFunction

    @property
    def grid(self) -> Grid:
        return self.a.grid

    @property
    def T(self) -> float:
        return self.a.grid.stop

    def a_at(self, t):
        return np.interp(t, self.grid.points, self.a.values)

    def A_at(self, t):
        return np.interp(t, self.grid.points, self.A.values)

    def sup(self) -> float:
        return self.a.sup_norm()


def accumulate(a: SampledFunction, a_floor: float) -> TimeCoefficient:
    """Attach the running integral A(t) (cumulative trapezoid) to ``a``."""
    if not a_floor > 0:
        raise ValueError(f"a_floor must be positive, got {a_floor!r}")
    # tolerate rounding noise from mollification at the floor
    below = a.values < a_floor * (1.0 - 1e-12)
    if np.any(below):
        i = int(np.flatnonzero(below)[0])
        raise ValueError(
            f"a(t)={a.values[i]:.6g} < a_floor={a_floor:g} at t={a.grid.points[i]:.6g}"
        )
    A = SampledFunction(a.grid, cumulative_trapezoid(a.values, a.grid))
    return TimeCoefficient(a, float(a_floor), A)


def constant_coefficient(value: float, T: float, count: int = 2001) -> TimeCoefficient:
    g = Grid(0.0, T, count)
    return accumulate(SampledFunction(g, np.full(count, float(value))), float(value))


# --------------------------------------------------------------------------
# projections and norms

def project(u0: SampledFunction, basis: EigenBasis) -> np.ndarray:
    """Coefficients  B_n = <u0, phi_n>  by the grid quadrature."""
    if u0.grid != basis.grid:
        raise ValueError("u0 and the eigenbasis live on different grids")
    return basis.phi @ (quadrature_weights(u0.grid) * u0.values)


def truncation_tail(u0: SampledFunction, coeffs: np.ndarray) -> float:
    """Bessel gap  ||u0||^2 - sum B_n^2  (non-negative up to rounding)."""
    return u0.l2_norm() ** 2 - float(np.sum(np.asarray(coeffs) ** 2))


def sobolev_norm(coeffs, lambdas, k: float) -> float:
    """Spectral norm  (sum lam_n^k c_n^2)^(1/2)."""
    c = np.asarray(coeffs, dtype=float)
    lam = np.asarray(lambdas, dtype=float)
    if c.shape != lam.shape[: c.ndim] and c.shape[-1] != lam.shape[-1]:
        raise ValueError("coefficient and eigenvalue arrays differ in length")
    if k == 0:
        return float(np.sqrt(np.sum(c**2)))
    if np.any(lam <= 0) and (k < 0 or k != int(k)):
        raise ValueError(f"fractional power k={k:g} undefined with non-positive eigenvalues")
    total = float(np.sum(lam**k * c**2))
    if total < 0:
        raise ValueError(f"W^{k:g} norm undefined: negative eigenvalues dominate")
    return math.sqrt(total)


# --------------------------------------------------------------------------
# spectral solution

def _duhamel_weights(alpha: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """w0 = int_0^1 e^{-alpha s} ds and w1 = int_0^1 s e^{-alpha s} ds."""
    alpha = np.asarray(alpha, dtype=float)
    small = np.abs(alpha) < 1e-3
    safe = np.where(small, 1.0, alpha)
    e = np.exp(-safe)
    w0 = np.where(small, 1 - alpha / 2 + alpha**2 / 6 - alpha**3 / 24, -np.expm1(-safe) / safe)
    w1 = np.where(small, 0.5 - alpha / 3 + alpha**2 / 8 - alpha**3 / 30,
                  (1.0 - (1.0 + safe) * e) / safe**2)
    return w0, w1


@dataclass(frozen=True)
class SpectralSolution:
    basis: EigenBasis
    B: np.ndarray
    time_coeff: TimeCoefficient
    f_coeffs: np.ndarray | None = None  # shape (time nodes, modes)
    tail: float = 0.0
    _duhamel: np.ndarray | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if self.B.shape != self.basis.lambdas.shape:
            raise ValueError("one coefficient per eigenpair is required")
        if self.f_coeffs is not None:
            expected = (self.time_coeff.grid.count, self.basis.size)
            if self.f_coeffs.shape != expected:
                raise ValueError(f"f_coeffs must have shape {expected}")
            object.__setattr__(self, "_duhamel", self._duhamel_nodes())

    @property
    def T(self) -> float:
        return self.time_coeff.T

    @property
    def lambdas(self) -> np.ndarray:
        return self.basis.lambdas

    @property
    def grid(self) -> Grid:
        return self.basis.grid

    @property
    def time_grid(self) -> Grid:
        return self.time_coeff.grid

    @property
    def growing(self) -> bool:
        return bool(np.any(self.lambdas <= 0))

    @property
    def has_source(self) -> bool:
        return self.f_coeffs is not None

    def _duhamel_nodes(self) -> np.ndarray:
        """Source integrals at every time node, shape (time nodes, modes)."""
        tg = self.time_grid
        lam = self.lambdas
        dA = np.diff(self.time_coeff.A.values)
        dt = np.diff(tg.points)
        F = self.f_coeffs
        out = np.zeros_like(F)
        for j in range(tg.count - 1):
            alpha = lam * dA[j]
            w0, w1 = _duhamel_weights(alpha)
            out[j + 1] = np.exp(-alpha) * out[j] + dt[j] * (F[j] * w1 + F[j + 1] * (w0 - w1))
        return out

    def _check_time(self, t: float) -> None:
        if not 0.0 <= t <= self.T * (1 + 1e-12):
            raise ValueError(f"t={t!r} outside [0, {self.T:g}]")
        if self.growing:
            warnings.warn("non-positive eigenvalue present; modes may grow", GrowthWarning,
                          stacklevel=3)

    def _source_at(self, t: float) -> np.ndarray:
        tg = self.time_grid
        j = min(int(np.searchsorted(tg.points, t, side="right")) - 1, tg.count - 2)
        j = max(j, 0)
        tau = t - tg.points[j]
        if tau <= 0:
            return self._duhamel[j].copy()
        frac = tau / (tg.points[j + 1] - tg.points[j])
        f_t = (1 - frac) * self.f_coeffs[j] + frac * self.f_coeffs[j + 1]
        alpha = self.lambdas * (self.time_coeff.A_at(t) - self.time_coeff.A.values[j])
        w0, w1 = _duhamel_weights(alpha)
        return np.exp(-alpha) * self._duhamel[j] + tau * (self.f_coeffs[j] * w1 + f_t * (w0 - w1))

    def f_at(self, t: float) -> np.ndarray:
        if self.f_coeffs is None:
            return np.zeros_like(self.B)
        tg = self.time_grid.points
        return np.array([np.interp(t, tg, col) for col in self.f_coeffs.T])

    def amplitudes(self, t: float, homogeneous: bool = False) -> np.ndarray:
        """Mode amplitudes u_n(t)."""
        self._check_time(t)
        u = self.B * np.exp(-self.lambdas * self.time_coeff.A_at(t))
        if self.f_coeffs is not None and not homogeneous:
            u = u + self._source_at(t)
        return u

    def amplitudes_on_grid(self, homogeneous: bool = False) -> np.ndarray:
        """Mode amplitudes at every time node, shape (time nodes, modes)."""
        A = self.time_coeff.A.values
        u = self.B[None, :] * np.exp(-np.outer(A, self.lambdas))
        if self.f_coeffs is not None and not homogeneous:
            u = u + self._duhamel
        return u

    def dt_amplitudes_on_grid(self) -> np.ndarray:
        u = self.amplitudes_on_grid()
        d = -self.time_coeff.a.values[:, None] * self.lambdas[None, :] * u
        if self.f_coeffs is not None:
            d = d + self.f_coeffs
        return d

    def synthesize(self, amplitudes: np.ndarray, derivative: bool = False) -> np.ndarray:
        modes = self.basis.dphi if derivative else self.basis.phi
        return amplitudes @ modes

    def restart(self, t1: float) -> "SpectralSolution":
        """The problem restarted at the time node t1 with data u(t1)."""
        tg = self.time_grid
        j = int(round(t1 / tg.h))
        if abs(tg.points[j] - t1) > 1e-12 * max(1.0, tg.stop) or j >= tg.count - 2:
            raise ValueError("restart time must be an interior time-grid node")
        u1 = SampledFunction(self.grid, self.synthesize(self.amplitudes(t1)))
        g = Grid(0.0, tg.stop - tg.points[j], tg.count - j)
        a = SampledFunction(g, self.time_coeff.a.values[j:])
        tc = TimeCoefficient(a, self.time_coeff.a_floor,
                             SampledFunction(g, self.time_coeff.A.values[j:] - self.time_coeff.A.values[j]))
        F = None if self.f_coeffs is None else self.f_coeffs[j:]
        return SpectralSolution(self.basis, project(u1, self.basis), tc, F)


def source_coefficients(f, basis: EigenBasis, time_grid: Grid) -> np.ndarray:
    """Project a source onto the basis at every time node.

    ``f`` is a callable ``f(t, x)`` (vectorized in x) or an array of shape
    (time nodes, space nodes).
    """
    x = basis.grid.points
    if callable(f):
        samples = np.stack([np.broadcast_to(np.asarray(f(t, x), dtype=float), x.shape)
                            for t in time_grid.points])
    else:
        samples = np.asarray(f, dtype=float)
        if samples.shape != (time_grid.count, basis.grid.count):
            raise ValueError("source samples must have shape (time nodes, space nodes)")
    if not np.all(np.isfinite(samples)):
        raise NumericsError("source samples contain non-finite values")
    return (samples * quadrature_weights(basis.grid)) @ basis.phi.T


def solve(
    basis: EigenBasis,
    u0: SampledFunction,
    time_coeff: TimeCoefficient,
    f=None,
    n_max: int | None = None,
) -> SpectralSolution:
    """Assemble the truncated series for initial data ``u0`` and optional source ``f``."""
    if n_max is not None:
        basis = basis.truncate(n_max)
    B = project(u0, basis)
    F = None if f is None else source_coefficients(f, basis, time_coeff.grid)
    return SpectralSolution(basis, B, time_coeff, F, truncation_tail(u0, B))


def evolve_homogeneous(sol: SpectralSolution, t: float) -> SampledFunction:
    return SampledFunction(sol.grid, sol.synthesize(sol.amplitudes(t, homogeneous=True)))


def evolve_nonhomogeneous(sol: SpectralSolution, t: float) -> SampledFunction:
    if sol.f_coeffs is None:
        raise ValueError("solution carries no source coefficients")
    return SampledFunction(sol.grid, sol.synthesize(sol.amplitudes(t)))


def evolve(sol: SpectralSolution, t: float) -> SampledFunction:
    return SampledFunction(sol.grid, sol.synthesize(sol.amplitudes(t)))


def time_derivative(sol: SpectralSolution, t: float) -> SampledFunction:
    """Termwise  -a(t) lam_n u_n(t) phi_n + f_n(t) phi_n."""
    u = sol.amplitudes(t)
    d = -sol.time_coeff.a_at(t) * sol.lambdas * u
    if sol.f_coeffs is not None:
        d = d + sol.f_at(t)
    return SampledFunction(sol.grid, sol.synthesize(d))


@dataclass(frozen=True)
class ResidualCheck:
    t: float
    residual: float
    bound: float

    @property
    def passed(self) -> bool:
        return self.residual <= self.bound


def pde_residual(sol: SpectralSolution, q: SampledFunction, t: float) -> ResidualCheck:
    """||u_t + a (-u_xx + q u) - f|| at time t with u_xx by centered differences.

    Interior nodes only; the bound is 100 (h^2 lam_N^2 + tail).
    """
    if q.grid != sol.grid:
        raise ValueError("q must live on the solution grid")
    h = sol.grid.h
    u = evolve(sol, t).values
    ut = time_derivative(sol, t).values
    uxx = (u[2:] - 2 * u[1:-1] + u[:-2]) / h**2
    r = ut[1:-1] + sol.time_coeff.a_at(t) * (-uxx + q.values[1:-1] * u[1:-1])
    if sol.f_coeffs is not None:
        r = r - sol.synthesize(sol.f_at(t))[1:-1]
    full = np.zeros_like(u)
    full[1:-1] = r
    res = math.sqrt(max(float((full * full) @ quadrature_weights(sol.grid)), 0.0))
    bound = 100.0 * (h**2 * float(sol.lambdas[-1]) ** 2 + sol.tail)
    return ResidualCheck(float(t), res, bound)


# --------------------------------------------------------------------------
# finite-difference oracle

def crank_nicolson_oracle(
    q_eps: SampledFunction,
    time_coeff: TimeCoefficient,
    u0: SampledFunction,
    f=None,
    t_out: Sequence[float] = (),
    substeps: int = 1,
) -> list[SampledFunction]:
    """Crank-Nicolson for  u_t = -a(t)(-u_xx + q u) + f  with Dirichlet ends.

    Each time-grid interval is split into ``substeps`` steps with the
    interval-averaged coefficient dA/dt.  ``f`` is ``None``, a callable
    ``f(t, x)`` or samples of shape (time nodes, space nodes).
    """
    grid = q_eps.grid
    if u0.grid != grid:
        raise ValueError("u0 and q must share the spatial grid")
    tg = time_coeff.grid
    t_out = np.asarray(t_out, dtype=float)
    if np.any(t_out < 0) or np.any(t_out > tg.stop * (1 + 1e-12)):
        raise ValueError("output times must lie in [0, T]")
    h = grid.h
    m = grid.count - 2
    q = q_eps.values[1:-1]

    F_arr = None
    if f is not None and not callable(f):
        F_arr = np.asarray(f, dtype=float)
        if F_arr.shape != (tg.count, grid.count):
            raise ValueError("source samples must have shape (time nodes, space nodes)")
        F_arr = F_arr[:, 1:-1]

    def src(t):
        if F_arr is None:
            return np.broadcast_to(np.asarray(f(t, grid.points), dtype=float), (grid.count,))[1:-1]
        j = min(max(int(np.searchsorted(tg.points, t, side="right")) - 1, 0), tg.count - 2)
        frac = (t - tg.points[j]) / (tg.points[j + 1] - tg.points[j])
        return (1 - frac) * F_arr[j] + frac * F_arr[j + 1]

    def apply_L(v):
        out = (2.0 / h**2 + q) * v
        out[1:] -= v[:-1] / h**2
        out[:-1] -= v[1:] / h**2
        return out

    u = u0.values[1:-1].astype(float).copy()
    order = np.argsort(t_out)
    results: list[np.ndarray | None] = [None] * t_out.size
    k_out = 0

    def emit(t_cur, u_prev, u_cur, t_last):
        nonlocal k_out
        while k_out < t_out.size and t_out[order[k_out]] <= t_cur + 1e-12:
            tt = t_out[order[k_out]]
            if t_cur > t_last:
                w = (tt - t_last) / (t_cur - t_last)
                w = min(max(w, 0.0), 1.0)
            else:
                w = 1.0
            full = np.zeros(grid.count)
            full[1:-1] = (1 - w) * u_prev + w * u_cur
            results[order[k_out]] = full
            k_out += 1

    emit(0.0, u, u, 0.0)
    ab = np.zeros((3, m))
    for j in range(tg.count - 1):
        if k_out >= t_out.size:
            break
        dt_int = tg.points[j + 1] - tg.points[j]
        a_eff = (time_coeff.A.values[j + 1] - time_coeff.A.values[j]) / dt_int
        dt = dt_int / substeps
        c = 0.5 * dt * a_eff
        ab[0, 1:] = -c / h**2
        ab[1, :] = 1.0 + c * (2.0 / h**2 + q)
        ab[2, :-1] = -c / h**2
        for s in range(substeps):
            t0 = tg.points[j] + s * dt
            t1 = t0 + dt
            rhs = u - c * apply_L(u)
            if f is not None:
                rhs = rhs + 0.5 * dt * (src(t0) + src(t1))
            u_new = solve_banded((1, 1), ab, rhs, check_finite=False)
            if not np.all(np.isfinite(u_new)):
                raise NumericsError(f"Crank-Nicolson step produced non-finite values at t={t1:.6g}")
            emit(t1, u, u_new, t0)
            u = u_new
    return [SampledFunction(grid, r) for r in results]
