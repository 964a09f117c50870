"""Shared numerical kernels on uniform grids.

Quadrature (composite Simpson / trapezoid), a fixed-step classical RK4
integrator and a bracketed bisection/secant root finder.  Everything here is
a pure function of its inputs.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np


class NumericsError(RuntimeError):
    """Base class for failures inside the numerical kernels."""


class IntegrationError(NumericsError):
    def __init__(self, message: str, position: float | None = None):
        super().__init__(message)
        self.position = position


class BracketError(NumericsError):
    """Raised when the initial interval does not bracket a sign change."""

    def __init__(self, message: str, lo=None, hi=None, flo=None, fhi=None):
        super().__init__(message)
        self.lo, self.hi, self.flo, self.fhi = lo, hi, flo, fhi


@dataclass(frozen=True)
class Grid:
    start: float
    stop: float
    count: int
    points: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.count < 3:
            raise ValueError(f"grid needs at least 3 points, got {self.count}")
        if not self.stop > self.start:
            raise ValueError("grid interval must have stop > start")
        pts = np.linspace(self.start, self.stop, self.count)
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    @property
    def h(self) -> float:
        return (self.stop - self.start) / (self.count - 1)

    @property
    def length(self) -> float:
        return self.stop - self.start

    def __len__(self) -> int:
        return self.count


def unit_grid(count: int = 2001) -> Grid:
    return Grid(0.0, 1.0, count)


@dataclass(frozen=True)
class SampledFunction:
    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        vals = np.asarray(self.values)
        if vals.shape[-1] != self.grid.count:
            raise ValueError(
                f"values have {vals.shape[-1]} samples but grid has {self.grid.count}"
            )
        if not np.all(np.isfinite(vals)):
            bad = int(np.flatnonzero(~np.isfinite(vals.reshape(-1, vals.shape[-1])).any(0))[0])
            raise IntegrationError(
                f"non-finite sample at x={self.grid.points[bad]:.6g}", self.grid.points[bad]
            )
        vals = vals.copy()
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    @classmethod
    def from_callable(cls, func: Callable[[np.ndarray], np.ndarray], grid: Grid):
        vals = np.broadcast_to(np.asarray(func(grid.points), dtype=float), (grid.count,))
        return cls(grid, vals)

    @property
    def x(self) -> np.ndarray:
        return self.grid.points

    def l2_norm(self) -> float:
        return float(np.sqrt(integrate(self.values**2 if np.isrealobj(self.values)
                                       else np.abs(self.values) ** 2, self.grid)))

    def sup_norm(self) -> float:
        return float(np.max(np.abs(self.values)))

    def with_values(self, values: np.ndarray) -> "SampledFunction":
        return SampledFunction(self.grid, values)


def quadrature_weights(grid: Grid) -> np.ndarray:
    """Weights of the rule used by :func:`integrate` on ``grid``."""
    n, h = grid.count, grid.h
    w = np.empty(n)
    if n % 2 == 1:
        w[:] = 2.0
        w[1::2] = 4.0
        w[0] = w[-1] = 1.0
        w *= h / 3.0
    else:
        w[:] = h
        w[0] = w[-1] = h / 2.0
    return w


def integrate(f, grid: Grid | None = None) -> float | np.ndarray:
    """Integrate samples over the grid.

    Composite Simpson when the point count is odd, composite trapezoid
    otherwise.  ``f`` may be a :class:`SampledFunction` or a raw array (then
    ``grid`` is required); for 2-D arrays the last axis is integrated.
    """
    if isinstance(f, SampledFunction):
        grid, values = f.grid, f.values
    else:
        if grid is None:
            raise TypeError("integrate() needs a grid when given raw samples")
        values = np.asarray(f)
    if not np.all(np.isfinite(values)):
        idx = np.flatnonzero(~np.isfinite(values.reshape(-1, values.shape[-1])).any(0))[0]
        raise IntegrationError(
            f"non-finite integrand at x={grid.points[idx]:.6g}", float(grid.points[idx])
        )
    out = values @ quadrature_weights(grid)
    return float(out) if np.ndim(out) == 0 else out


def cumulative_integral(values: np.ndarray, grid: Grid) -> np.ndarray:
    """Running integral from the first grid point, fourth-order accurate.

    Even-indexed nodes carry exact composite Simpson partial sums, so the
    last value equals :func:`integrate` whenever the count is odd.  Odd nodes
    use the half-panel rule h/12 (5 f0 + 8 f1 - f2).  Works along the last
    axis.
    """
    f = np.asarray(values, dtype=float)
    n, h = grid.count, grid.h
    out = np.zeros_like(f)
    npair = (n - 1) // 2
    if npair:
        f0 = f[..., 0:2 * npair:2]
        f1 = f[..., 1:2 * npair + 1:2]
        f2 = f[..., 2:2 * npair + 1:2]
        pair = h / 3.0 * (f0 + 4.0 * f1 + f2)
        half = h / 12.0 * (5.0 * f0 + 8.0 * f1 - f2)
        even = np.cumsum(pair, axis=-1)
        out[..., 2:2 * npair + 1:2] = even
        prev = np.concatenate([np.zeros(f.shape[:-1] + (1,)), even[..., :-1]], axis=-1)
        out[..., 1:2 * npair:2] = prev + half
    if n % 2 == 0:
        out[..., -1] = out[..., -2] + h / 12.0 * (-f[..., -3] + 8.0 * f[..., -2] + 5.0 * f[..., -1])
    return out


def cumulative_trapezoid(values: np.ndarray, grid: Grid) -> np.ndarray:
    f = np.asarray(values, dtype=float)
    out = np.zeros_like(f)
    out[..., 1:] = np.cumsum(0.5 * grid.h * (f[..., 1:] + f[..., :-1]), axis=-1)
    return out


def solve_ivp(
    rhs: Callable[[float, np.ndarray], np.ndarray],
    y0,
    span: tuple[float, float],
    step: float,
    tolerance: float = 1e-9,
) -> tuple[Grid, np.ndarray]:
    """Classical fourth-order Runge-Kutta on a fixed grid.

    Returns the grid and the trajectory with shape ``(count, *y0.shape)``.
    ``step`` must divide the span length (checked to ``tolerance`` relative).
    """
    x0, x1 = float(span[0]), float(span[1])
    nsteps_f = (x1 - x0) / step
    nsteps = int(round(nsteps_f))
    if nsteps < 2 or abs(nsteps_f - nsteps) > tolerance * max(1.0, nsteps_f):
        raise ValueError(f"step {step!r} does not divide span [{x0}, {x1}]")
    grid = Grid(x0, x1, nsteps + 1)
    h = grid.h
    y = np.array(y0, dtype=float)
    traj = np.empty((nsteps + 1,) + y.shape)
    traj[0] = y
    xs = grid.points
    for i in range(nsteps):
        x = xs[i]
        k1 = rhs(x, y)
        k2 = rhs(x + 0.5 * h, y + 0.5 * h * k1)
        k3 = rhs(x + 0.5 * h, y + 0.5 * h * k2)
        k4 = rhs(xs[i + 1], y + h * k3)
        y = y + (h / 6.0) * (k1 + 2.0 * (k2 + k3) + k4)
        if not np.all(np.isfinite(y)):
            raise IntegrationError(f"state became non-finite near x={x:.6g}", float(x))
        traj[i + 1] = y
    return grid, traj


def find_roots(
    f: Callable[[np.ndarray], np.ndarray],
    lo,
    hi,
    tolerance,
    max_iter: int = 200,
) -> np.ndarray:
    """Elementwise bracketed root finding for a batch of independent problems.

    ``f`` maps an array of abscissae to an array of values of the same shape.
    Each element runs an Illinois-modified secant step inside its own bracket
    and falls back to bisection whenever the secant point is unsafe or the
    bracket stalls.  Brackets only ever shrink.
    """
    a = np.array(lo, dtype=float, ndmin=1)
    b = np.array(hi, dtype=float, ndmin=1)
    tol = np.broadcast_to(np.asarray(tolerance, dtype=float), a.shape).copy()
    fa = np.asarray(f(a), dtype=float).copy()
    fb = np.asarray(f(b), dtype=float).copy()
    bad = np.sign(fa) * np.sign(fb) > 0
    if np.any(bad):
        i = int(np.flatnonzero(bad)[0])
        raise BracketError(
            f"no sign change on [{a[i]:.6g}, {b[i]:.6g}]: f = ({fa[i]:.3g}, {fb[i]:.3g})",
            lo=a.copy(), hi=b.copy(), flo=fa.copy(), fhi=fb.copy(),
        )
    # orient so that f(a) <= 0 <= f(b)
    flip = fa > 0
    a[flip], b[flip] = b[flip], a[flip]
    fa[flip], fb[flip] = fb[flip], fa[flip]

    done = (fa == 0) | (fb == 0) | (np.abs(b - a) <= tol)
    side = np.zeros(a.shape, dtype=int)  # which end moved last: -1 a, +1 b
    width_ref = np.abs(b - a)
    for it in range(max_iter):
        if np.all(done):
            break
        act = ~done
        with np.errstate(divide="ignore", invalid="ignore"):
            x = b - fb * (b - a) / (fb - fa)
        lo_e, hi_e = np.minimum(a, b), np.maximum(a, b)
        mid = 0.5 * (lo_e + hi_e)
        # bisect when the secant leaves the bracket or three passes failed to halve it
        stalled = (it % 3 == 2) & (hi_e - lo_e > 0.5 * width_ref)
        x = np.where(~np.isfinite(x) | (x <= lo_e) | (x >= hi_e) | stalled, mid, x)
        # stay at least tol/2 inside so the bracket can close
        x = np.clip(x, lo_e + 0.5 * tol, hi_e - 0.5 * tol)
        if it % 3 == 2:
            width_ref = hi_e - lo_e
        x = np.where(act, x, a)
        fx = np.asarray(f(x), dtype=float)
        left = act & (fx <= 0)
        right = act & (fx > 0)
        # Illinois: halve the stale end's value when the same side moves twice
        fb = np.where(left & (side == -1), 0.5 * fb, fb)
        fa = np.where(right & (side == 1), 0.5 * fa, fa)
        a = np.where(left, x, a)
        fa = np.where(left, fx, fa)
        b = np.where(right, x, b)
        fb = np.where(right, fx, fb)
        side = np.where(left, -1, np.where(right, 1, side))
        done = done | (act & ((fx == 0) | (np.abs(b - a) <= tol)))
    else:
        if not np.all(done):
            raise NumericsError("root finder did not converge within max_iter")
    # fa/fb may carry Illinois-scaled values; only exact zeros are trusted
    return np.where(fa == 0, a, np.where(fb == 0, b, 0.5 * (a + b)))


def find_root(f: Callable[[float], float], lo: float, hi: float, tolerance: float = 1e-12) -> float:
    """Scalar wrapper over :func:`find_roots`."""
    def fv(x):
        return np.array([f(float(v)) for v in np.atleast_1d(x)])
    return float(find_roots(fv, lo, hi, tolerance)[0])
