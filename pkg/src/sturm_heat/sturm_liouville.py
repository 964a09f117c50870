"""Dirichlet eigenpairs of  -y'' + q y = lambda y  on (0, 1) with q = nu'.

The phase theta of the modified Pruefer substitution

    theta' = sqrt(lam) + nu^2 sin^2(theta) / sqrt(lam) + nu sin(2 theta),  theta(0) = 0

only involves nu, never q itself, so it stays well behaved when q is a
(mollified) distribution.  The amplitude r follows in closed form and the
eigenfunction is  r sin(theta); lambda_n is the root of theta(1, lam) = pi n.

A finite-difference tridiagonal eigensolver is kept alongside as an oracle.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.linalg import eigh_tridiagonal

from .numerics import (
    BracketError,
    Grid,
    NumericsError,
    SampledFunction,
    cumulative_integral,
    find_root,
    find_roots,
    integrate,
    quadrature_weights,
    solve_ivp,
)

LAMBDA_MIN = 0.25
MAX_DOUBLINGS = 10


class ShootingError(NumericsError):
    """Eigenvalue bracketing failed; carries theta(1, .) samples for diagnosis."""

    def __init__(self, message: str, n=None, lambdas=None, theta_end=None):
        super().__init__(message)
        self.n = n
        self.lambdas = lambdas
        self.theta_end = theta_end


@dataclass(frozen=True)
class PruferTrajectory:
    lam: float
    theta: SampledFunction
    r: SampledFunction

    @property
    def eta(self) -> SampledFunction:
        return self.theta.with_values(self.theta.values - math.sqrt(self.lam) * self.theta.x)


@dataclass(frozen=True)
class EigenPair:
    n: int
    lambda_n: float
    phi_n: SampledFunction
    phi_tilde_norm: float
    quasi_derivative: SampledFunction
    trajectory: PruferTrajectory

    def derivative(self, nu: SampledFunction) -> SampledFunction:
        """Classical derivative of phi_n: quasi-derivative plus nu * phi_n."""
        return self.phi_n.with_values(self.quasi_derivative.values + nu.values * self.phi_n.values)


@dataclass(frozen=True)
class EigenBasis:
    """A block of eigenpairs n = 1..N stored as arrays, row k holding mode k+1.

    ``phi`` is normalized, ``quasi`` is the quasi-derivative of the normalized
    eigenfunction and ``dphi`` its classical derivative.
    """

    nu: SampledFunction
    lambdas: np.ndarray
    phi: np.ndarray
    quasi: np.ndarray
    phi_tilde_norms: np.ndarray
    theta: np.ndarray
    r: np.ndarray

    @property
    def grid(self) -> Grid:
        return self.nu.grid

    @property
    def size(self) -> int:
        return self.lambdas.size

    @property
    def dphi(self) -> np.ndarray:
        return self.quasi + self.nu.values * self.phi

    def pair(self, n: int) -> EigenPair:
        k = n - 1
        g = self.grid
        traj = PruferTrajectory(float(self.lambdas[k]), SampledFunction(g, self.theta[k]),
                                SampledFunction(g, self.r[k]))
        return EigenPair(n, float(self.lambdas[k]), SampledFunction(g, self.phi[k]),
                         float(self.phi_tilde_norms[k]), SampledFunction(g, self.quasi[k]), traj)

    def pairs(self) -> list[EigenPair]:
        return [self.pair(n) for n in range(1, self.size + 1)]

    def truncate(self, count: int) -> "EigenBasis":
        if count > self.size:
            raise ValueError(f"basis holds {self.size} modes, {count} requested")
        return EigenBasis(self.nu, self.lambdas[:count], self.phi[:count], self.quasi[:count],
                          self.phi_tilde_norms[:count], self.theta[:count], self.r[:count])


# --------------------------------------------------------------------------
# phase integration

def _half_grid_values(values: np.ndarray) -> np.ndarray:
    """Samples at nodes and midpoints; midpoints by 4-point cubic interpolation."""
    f = np.asarray(values, dtype=float)
    n = f.size
    mid = np.empty(n - 1)
    if n >= 4:
        mid[1:-1] = (-f[:-3] + 9.0 * f[1:-2] + 9.0 * f[2:-1] - f[3:]) / 16.0
        mid[0] = (3.0 * f[0] + 6.0 * f[1] - f[2]) / 8.0
        mid[-1] = (-f[-3] + 6.0 * f[-2] + 3.0 * f[-1]) / 8.0
    else:
        mid[:] = 0.5 * (f[:-1] + f[1:])
    out = np.empty(2 * n - 1)
    out[0::2] = f
    out[1::2] = mid
    return out


def _theta_trajectories(nu: SampledFunction, lambdas: np.ndarray) -> np.ndarray:
    """Integrate the phase ODE for a batch of lambdas; returns (batch, count)."""
    lam = np.asarray(lambdas, dtype=float)
    if np.any(lam < LAMBDA_MIN):
        bad = float(lam[lam < LAMBDA_MIN][0])
        raise ValueError(f"lambda={bad:g} below lambda_min={LAMBDA_MIN:g}")
    grid = nu.grid
    nu_half = _half_grid_values(nu.values)
    nu2_half = 0.5 * nu_half**2
    x0, half_h = grid.start, 0.5 * grid.h
    root = np.sqrt(lam)
    inv_root = 1.0 / root

    def rhs(x, theta):
        k = int(round((x - x0) / half_h))
        s2 = np.sin(2.0 * theta)
        c2 = np.cos(2.0 * theta)
        # nu^2 sin^2 = nu^2 (1 - cos 2theta) / 2
        return root + inv_root * nu2_half[k] * (1.0 - c2) + nu_half[k] * s2

    _, traj = solve_ivp(rhs, np.zeros_like(lam), (grid.start, grid.stop), grid.h)
    return traj.T


def _amplitudes(nu: SampledFunction, lambdas: np.ndarray, theta: np.ndarray) -> np.ndarray:
    inv_root = 1.0 / np.sqrt(np.asarray(lambdas, dtype=float))[:, None]
    integrand = nu.values * np.cos(2.0 * theta) + 0.5 * inv_root * nu.values**2 * np.sin(2.0 * theta)
    return np.exp(-cumulative_integral(integrand, nu.grid))


def integrate_prufer(nu: SampledFunction, lam: float) -> PruferTrajectory:
    """Phase and amplitude of the modified Pruefer system at one lambda."""
    if not lam >= LAMBDA_MIN:
        raise ValueError(f"lambda={lam!r} below lambda_min={LAMBDA_MIN:g}")
    theta = _theta_trajectories(nu, np.array([lam]))
    r = _amplitudes(nu, np.array([lam]), theta)
    return PruferTrajectory(float(lam), SampledFunction(nu.grid, theta[0]),
                            SampledFunction(nu.grid, r[0]))


def theta_at_end(nu: SampledFunction, lambdas) -> np.ndarray:
    lam = np.atleast_1d(np.asarray(lambdas, dtype=float))
    return _theta_trajectories(nu, lam)[:, -1]


# --------------------------------------------------------------------------
# shooting

def _default_half_width(nu: SampledFunction, n: np.ndarray) -> np.ndarray:
    return np.maximum(20.0, 4.0 * nu.sup_norm() * math.pi * n)


def shoot_eigenvalues(nu: SampledFunction, ns: Sequence[int], bracket_width: float = 1.0) -> np.ndarray:
    """Solve theta(1, lam) = pi n for every n in ``ns`` simultaneously."""
    n = np.asarray(ns, dtype=float)
    if n.size == 0:
        return n
    if np.any(n < 1) or np.any(n != np.round(n)):
        raise ValueError("mode indices must be integers >= 1")
    target = math.pi * n
    centre = target**2
    half = bracket_width * _default_half_width(nu, n)

    def g(lam):
        return theta_at_end(nu, lam) - target

    lo = np.maximum(centre - half, LAMBDA_MIN)
    hi = centre + half
    glo, ghi = g(lo), g(hi)
    for _ in range(MAX_DOUBLINGS):
        need_lo = (glo > 0) & (lo > LAMBDA_MIN)
        need_hi = ghi < 0
        if not (np.any(need_lo) or np.any(need_hi)):
            break
        half = np.where(need_lo | need_hi, 2.0 * half, half)
        new_lo = np.maximum(centre - half, LAMBDA_MIN)
        new_hi = centre + half
        if np.any(need_lo):
            lo = np.where(need_lo, new_lo, lo)
            glo = np.where(need_lo, g(lo), glo)
        if np.any(need_hi):
            hi = np.where(need_hi, new_hi, hi)
            ghi = np.where(need_hi, g(hi), ghi)
    failed = (glo > 0) | (ghi < 0)
    if np.any(failed):
        k = int(np.flatnonzero(failed)[0])
        samples = np.linspace(lo[k], hi[k], 9)
        theta_end = theta_at_end(nu, samples)
        if glo[k] > 0 and lo[k] <= LAMBDA_MIN:
            msg = (f"eigenvalue {int(n[k])} lies below lambda_min={LAMBDA_MIN:g}; "
                   "the potential is too negative for this solver")
        else:
            msg = f"no bracket for eigenvalue {int(n[k])} after {MAX_DOUBLINGS} doublings"
        raise ShootingError(msg, int(n[k]), samples, theta_end)
    # theta(1, .) is close to linear in sqrt(lam), so the secant steps work there
    root_lo, root_hi = np.sqrt(lo), np.sqrt(hi)
    tol = 1e-10 * centre / (2.0 * root_hi)
    try:
        return find_roots(lambda s: g(s * s), root_lo, root_hi, tol) ** 2
    except BracketError as exc:  # pragma: no cover - guarded above
        raise ShootingError(str(exc)) from exc


def shoot_eigenvalue(nu: SampledFunction, n: int, bracket_width: float = 1.0) -> float:
    return float(shoot_eigenvalues(nu, [n], bracket_width)[0])


def eigenbasis(nu: SampledFunction, count: int, bracket_width: float = 1.0) -> EigenBasis:
    """Eigenpairs n = 1..count."""
    if count < 1:
        raise ValueError("count must be >= 1")
    lambdas = shoot_eigenvalues(nu, np.arange(1, count + 1), bracket_width)
    theta = _theta_trajectories(nu, lambdas)
    r = _amplitudes(nu, lambdas, theta)
    phi_tilde = r * np.sin(theta)
    norms = np.sqrt(integrate(phi_tilde**2, nu.grid))
    phi = phi_tilde / norms[:, None]
    quasi = np.sqrt(lambdas)[:, None] * r * np.cos(theta) / norms[:, None]
    return EigenBasis(nu, lambdas, phi, quasi, norms, theta, r)


def build_eigenpair(nu: SampledFunction, n: int, bracket_width: float = 1.0) -> EigenPair:
    lam = shoot_eigenvalue(nu, n, bracket_width)
    traj = integrate_prufer(nu, lam)
    r, theta = traj.r.values, traj.theta.values
    phi_tilde = r * np.sin(theta)
    norm = math.sqrt(integrate(phi_tilde**2, nu.grid))
    quasi = math.sqrt(lam) * r * np.cos(theta) / norm
    return EigenPair(n, lam, SampledFunction(nu.grid, phi_tilde / norm), norm,
                     SampledFunction(nu.grid, quasi), traj)


def gram_matrix(pairs) -> np.ndarray:
    """Quadrature inner products of eigenfunctions on a common grid."""
    if isinstance(pairs, EigenBasis):
        phi, grid = pairs.phi, pairs.grid
    else:
        pairs = list(pairs)
        if not pairs:
            return np.zeros((0, 0))
        grid = pairs[0].phi_n.grid
        if any(p.phi_n.grid != grid for p in pairs):
            raise ValueError("eigenpairs live on different grids")
        phi = np.stack([p.phi_n.values for p in pairs])
    w = quadrature_weights(grid)
    G = (phi * w) @ phi.T
    return 0.5 * (G + G.T)


# --------------------------------------------------------------------------
# oracle

def matrix_oracle(q: SampledFunction, count_modes: int) -> tuple[np.ndarray, list[SampledFunction]]:
    """Lowest eigenpairs of the second-difference Dirichlet matrix plus diag(q)."""
    grid = q.grid
    m = grid.count - 2
    if not 1 <= count_modes <= m:
        raise ValueError(f"count_modes must be in [1, {m}]")
    h = grid.h
    diag = 2.0 / h**2 + q.values[1:-1]
    off = np.full(m - 1, -1.0 / h**2)
    lams, vecs = eigh_tridiagonal(diag, off, select="i", select_range=(0, count_modes - 1))
    out = []
    for k in range(count_modes):
        v = np.zeros(grid.count)
        v[1:-1] = vecs[:, k]
        if v[1] < 0:
            v = -v
        v /= math.sqrt(integrate(v**2, grid))
        out.append(SampledFunction(grid, v))
    return lams, out


def delta_symmetric_eigenvalue(mass: float = 1.0) -> float:
    """Lowest eigenvalue for q = mass * delta(x - 1/2) from the jump condition.

    The symmetric mode sin(k x) on [0, 1/2] satisfies  tan(k/2) = -2k/mass.
    """
    def f(s):
        return math.tan(s) + 4.0 * s / mass

    s = find_root(f, math.pi / 2 + 1e-12, math.pi, 1e-14)
    return (2.0 * s) ** 2
