"""Distributional data, Friedrichs mollification and epsilon-net diagnostics.

A :class:`DistributionSpec` describes a coefficient before regularization.
:func:`mollify` turns it into samples of ``f_eps = f~ * psi_eps`` where
``psi_eps(x) = psi(x/eps)/eps``.  Spatial data are extended by zero outside
(0, 1); time coefficients use even reflection at the ends of [0, T] so a
positive floor survives regularization.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from functools import cached_property
from typing import Callable, Sequence

import numpy as np
from scipy.special import erf

from .numerics import Grid, SampledFunction, cumulative_integral, integrate

ZERO = "zero"
REFLECT = "reflect"  # even reflection at both ends
ODD = "odd"  # odd reflection: keeps Dirichlet data vanishing at the ends
CLAMP = "clamp"

# composite Gauss-Legendre used for every kernel integral
_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(24)
_GL_PANELS = 6


class BoundaryClipWarning(UserWarning):
    """A delta's mollified support reaches outside the open interval."""


class ResolutionWarning(UserWarning):
    """Grid spacing is coarse compared with the mollification scale."""


# --------------------------------------------------------------------------
# distribution specs

class DistributionSpec:
    """Base class; concrete variants below."""

    singular = False

    def describe(self) -> str:
        return self.label or type(self).__name__


@dataclass(frozen=True)
class Smooth(DistributionSpec):
    """A function given in closed form (vectorized callable) or as samples."""

    func: Callable[[np.ndarray], np.ndarray] | SampledFunction
    label: str = ""
    breakpoints: tuple[float, ...] = ()

    def evaluate(self, x: np.ndarray) -> np.ndarray:
        return _evaluate(self.func, x)

    def sample(self, grid: Grid) -> SampledFunction:
        if isinstance(self.func, SampledFunction) and self.func.grid == grid:
            return self.func
        return SampledFunction(grid, self.evaluate(grid.points))


@dataclass(frozen=True)
class BoundedFunction(Smooth):
    """An L-infinity function, possibly discontinuous at ``breakpoints``."""


@dataclass(frozen=True)
class DeltaAt(DistributionSpec):
    location: float
    mass: float = 1.0
    label: str = ""
    singular = True

    def describe(self) -> str:
        return self.label or f"delta({self.location:g}, {self.mass:g})"


@dataclass(frozen=True)
class DerivativeOfL2(DistributionSpec):
    """The distribution ``nu'`` for ``nu`` in L2(0, 1)."""

    nu: Callable[[np.ndarray], np.ndarray] | SampledFunction
    label: str = ""
    breakpoints: tuple[float, ...] = ()
    singular = True

    def evaluate_nu(self, x: np.ndarray) -> np.ndarray:
        return _evaluate(self.nu, x)

    def nu_l2_norm(self, grid: Grid | None = None) -> float:
        grid = grid or Grid(0.0, 1.0, 4001)
        return SampledFunction(grid, self.evaluate_nu(grid.points)).l2_norm()


@dataclass(frozen=True)
class SpecSum(DistributionSpec):
    """A finite sum of specs; regularization acts termwise."""

    parts: tuple
    label: str = ""

    @property
    def singular(self) -> bool:
        return any(p.singular for p in self.parts)

    def describe(self) -> str:
        return self.label or " + ".join(p.describe() for p in self.parts)


def split_spec(spec: DistributionSpec) -> tuple[list[Smooth], list[DistributionSpec]]:
    """Separate a spec into its smooth terms and its singular terms."""
    parts = spec.parts if isinstance(spec, SpecSum) else (spec,)
    smooth, singular = [], []
    for p in parts:
        if isinstance(p, SpecSum):
            s, g = split_spec(p)
            smooth += s
            singular += g
        elif isinstance(p, Smooth):
            smooth.append(p)
        else:
            singular.append(p)
    return smooth, singular


def sample_spec(spec: DistributionSpec, grid: Grid) -> SampledFunction:
    """Samples of a spec that needs no regularization."""
    smooth, singular = split_spec(spec)
    if singular:
        raise TypeError(f"{spec.describe()} is singular and must be mollified first")
    vals = np.zeros(grid.count)
    for p in smooth:
        vals = vals + p.evaluate(grid.points)
    return SampledFunction(grid, vals)


def constant(value: float, label: str | None = None) -> Smooth:
    return Smooth(lambda x, v=float(value): np.full(np.shape(x), v), label or f"{value:g}")


def _evaluate(func, x):
    x = np.asarray(x, dtype=float)
    if isinstance(func, SampledFunction):
        return np.interp(x, func.grid.points, func.values)
    return np.broadcast_to(np.asarray(func(x), dtype=float), x.shape)


# --------------------------------------------------------------------------
# kernels

@dataclass(frozen=True)
class Mollifier:
    """Unit-mass kernel supported in [-1, 1].

    ``kind`` is ``"bump"`` (exp(-1/(1-y^2))) or ``"gaussian"`` (a Gaussian of
    width ``sigma`` cut off at |y| = 1).
    """

    kind: str = "bump"
    sigma: float = 1.0 / 3.0

    def __post_init__(self):
        if self.kind not in ("bump", "gaussian"):
            raise ValueError(f"unknown mollifier kind {self.kind!r}")

    @property
    def label(self) -> str:
        return self.kind if self.kind == "bump" else f"gaussian(sigma={self.sigma:g})"

    def _raw(self, y):
        y = np.asarray(y, dtype=float)
        inside = np.abs(y) < 1.0
        out = np.zeros_like(y)
        if self.kind == "bump":
            yi = y[inside]
            out[inside] = np.exp(-1.0 / (1.0 - yi * yi))
        else:
            out[inside] = np.exp(-0.5 * (y[inside] / self.sigma) ** 2)
        return out

    def _raw_derivative(self, y):
        y = np.asarray(y, dtype=float)
        inside = np.abs(y) < 1.0
        out = np.zeros_like(y)
        yi = y[inside]
        if self.kind == "bump":
            d = 1.0 - yi * yi
            out[inside] = np.exp(-1.0 / d) * (-2.0 * yi / (d * d))
        else:
            out[inside] = -yi / self.sigma**2 * np.exp(-0.5 * (yi / self.sigma) ** 2)
        return out

    @cached_property
    def normalization(self) -> float:
        """Integral of the raw kernel over [-1, 1]."""
        if self.kind == "gaussian":
            s = self.sigma
            return s * math.sqrt(2.0 * math.pi) * math.erf(1.0 / (s * math.sqrt(2.0)))
        nodes, weights = _panel_rule(-1.0, 1.0, 4 * _GL_PANELS)
        return float(weights @ self._raw(nodes))

    def __call__(self, y):
        return self._raw(y) / self.normalization

    def derivative(self, y):
        return self._raw_derivative(y) / self.normalization

    @property
    def edge_value(self) -> float:
        """One-sided limit of the kernel at |y| -> 1 (its jump there)."""
        if self.kind == "bump":
            return 0.0
        return math.exp(-0.5 / self.sigma**2) / self.normalization

    def peak(self) -> float:
        return float(self(np.array(0.0)))

    def mass_between(self, lo, hi):
        """Kernel mass on [lo, hi] intersected with [-1, 1] (vectorized)."""
        lo = np.clip(np.asarray(lo, dtype=float), -1.0, 1.0)
        hi = np.clip(np.asarray(hi, dtype=float), -1.0, 1.0)
        if self.kind == "gaussian":
            c = self.sigma * math.sqrt(2.0)
            raw = 0.5 * self.sigma * math.sqrt(2.0 * math.pi) * (erf(hi / c) - erf(lo / c))
            return np.maximum(raw, 0.0) / self.normalization
        lo_b, hi_b = np.broadcast_arrays(lo, hi)
        out = np.zeros(lo_b.shape)
        for idx in np.ndindex(lo_b.shape):
            a, b = lo_b[idx], hi_b[idx]
            if b > a:
                nodes, weights = _panel_rule(a, b, 4 * _GL_PANELS)
                out[idx] = weights @ self(nodes)
        return out if out.ndim else float(out)

    def second_moment(self) -> float:
        nodes, weights = _panel_rule(-1.0, 1.0, 4 * _GL_PANELS)
        return float(weights @ (nodes**2 * self(nodes)))


BUMP = Mollifier("bump")
TRUNCATED_GAUSSIAN = Mollifier("gaussian")


def _panel_rule(a: float, b: float, panels: int = _GL_PANELS):
    edges = np.linspace(a, b, panels + 1)
    half = 0.5 * np.diff(edges)
    mids = 0.5 * (edges[1:] + edges[:-1])
    nodes = (mids[:, None] + half[:, None] * _GL_NODES[None, :]).ravel()
    weights = (half[:, None] * _GL_WEIGHTS[None, :]).ravel()
    return nodes, weights


# --------------------------------------------------------------------------
# mollification

def _check_scale(epsilon: float, grid: Grid) -> None:
    if not epsilon > 0:
        raise ValueError(f"epsilon must be positive, got {epsilon!r}")
    if epsilon > grid.length:
        raise ValueError(f"epsilon={epsilon:g} exceeds the interval length")
    if grid.h > epsilon:
        raise ValueError(
            f"grid spacing h={grid.h:.3g} exceeds epsilon={epsilon:.3g}; refine the grid"
        )
    if grid.h > epsilon / 10:
        warnings.warn(
            f"grid spacing h={grid.h:.3g} > epsilon/10 (epsilon={epsilon:.3g})",
            ResolutionWarning,
            stacklevel=3,
        )


def _kernel_convolution(func, kernel, x, epsilon, a, b, extension, breakpoints=()):
    """Evaluate  int f~(x - eps*y) kernel(y) dy  at every x.

    The y-range [-1, 1] is cut where x - eps*y crosses the interval ends or a
    declared breakpoint, and each piece gets a composite Gauss-Legendre rule,
    so zero-extension jumps and reflection kinks never sit inside a panel.
    """
    x = np.asarray(x, dtype=float)
    cuts = [a, b, *[c for c in breakpoints if a < c < b]]
    if extension in (REFLECT, ODD):
        cuts += [2 * a - c for c in breakpoints if a < c < b]
        cuts += [2 * b - c for c in breakpoints if a < c < b]
    ys = np.clip((x[:, None] - np.asarray(cuts)[None, :]) / epsilon, -1.0, 1.0)
    ys = np.sort(np.concatenate([-np.ones((x.size, 1)), ys, np.ones((x.size, 1))], axis=1), axis=1)
    lo, hi = ys[:, :-1], ys[:, 1:]
    # composite rule on the reference panel [0, 1]
    ref_edges = np.linspace(0.0, 1.0, _GL_PANELS + 1)
    ref_nodes = (0.5 * (ref_edges[1:] + ref_edges[:-1])[:, None]
                 + 0.5 * np.diff(ref_edges)[:, None] * _GL_NODES[None, :]).ravel()
    ref_weights = (0.5 * np.diff(ref_edges)[:, None] * _GL_WEIGHTS[None, :]).ravel()
    span = hi - lo
    y = lo[..., None] + span[..., None] * ref_nodes
    w = span[..., None] * ref_weights
    z = x[:, None, None] - epsilon * y
    if extension == ZERO:
        zmid = x[:, None] - epsilon * 0.5 * (lo + hi)
        inside = ((zmid > a) & (zmid < b))[..., None]
        fz = np.where(inside, _evaluate(func, np.clip(z, a, b)), 0.0)
    elif extension == CLAMP:
        fz = _evaluate(func, np.clip(z, a, b))
    elif extension in (REFLECT, ODD):
        zr = np.where(z < a, 2 * a - z, np.where(z > b, 2 * b - z, z))
        fz = _evaluate(func, zr)
        if extension == ODD:
            fz = np.where((z < a) | (z > b), -fz, fz)
    else:
        raise ValueError(f"unknown extension {extension!r}")
    return np.sum(w * kernel(y) * fz, axis=(1, 2))


def mollify(
    spec: DistributionSpec,
    mollifier: Mollifier,
    epsilon: float,
    grid: Grid,
    extension: str = ZERO,
) -> SampledFunction:
    """Sample ``spec * psi_eps`` on ``grid``.

    ``extension`` selects what happens outside the grid interval: ``"zero"``
    (spatial data), ``"odd"`` (initial data that must vanish at the ends) or
    ``"reflect"`` (time coefficients).
    """
    _check_scale(epsilon, grid)
    a, b, x = grid.start, grid.stop, grid.points
    if isinstance(spec, DeltaAt):
        return SampledFunction(grid, _mollified_delta(spec, mollifier, epsilon, grid, extension))
    if isinstance(spec, DerivativeOfL2):
        if extension != ZERO:
            raise ValueError("derivative-of-L2 specs support zero extension only")
        # q extended by zero  <=>  nu extended by its end values
        vals = _kernel_convolution(spec.nu, mollifier.derivative, x, epsilon, a, b, CLAMP,
                                   spec.breakpoints) / epsilon
        jump = mollifier.edge_value
        if jump:
            def nu_tilde(z):
                return spec.evaluate_nu(np.clip(z, a, b))
            vals = vals + jump / epsilon * (nu_tilde(x + epsilon) - nu_tilde(x - epsilon))
        return SampledFunction(grid, vals)
    if isinstance(spec, SpecSum):
        vals = sum((mollify(p, mollifier, epsilon, grid, extension).values for p in spec.parts),
                   np.zeros(grid.count))
        return SampledFunction(grid, vals)
    if isinstance(spec, Smooth):
        vals = _kernel_convolution(spec.func, mollifier, x, epsilon, a, b, extension,
                                   spec.breakpoints)
        return SampledFunction(grid, vals)
    raise TypeError(f"cannot mollify {type(spec).__name__}")


def _mollified_delta(spec: DeltaAt, mollifier, epsilon, grid, extension):
    a, b, x = grid.start, grid.stop, grid.points
    x0 = spec.location
    if extension == ZERO:
        if not a < x0 < b:
            raise ValueError(f"delta location {x0:g} must lie in the open interval ({a:g}, {b:g})")
        centres = [x0]
        if x0 - epsilon < a or x0 + epsilon > b:
            warnings.warn(
                f"mollified delta at {x0:g} with epsilon={epsilon:g} is clipped by the boundary",
                BoundaryClipWarning,
                stacklevel=3,
            )
        inside_mass = float(mollifier.mass_between((a - x0) / epsilon, (b - x0) / epsilon))
    elif extension == REFLECT:
        if not a <= x0 <= b:
            raise ValueError(f"delta location {x0:g} must lie in [{a:g}, {b:g}]")
        # images keep the full mass inside the interval
        centres = [x0, 2 * a - x0, 2 * b - x0]
        inside_mass = 1.0
    elif extension == ODD:
        if not a < x0 < b:
            raise ValueError(f"delta location {x0:g} must lie in the open interval ({a:g}, {b:g})")
        raw = (mollifier((x - x0) / epsilon) - mollifier((x - 2 * a + x0) / epsilon)
               - mollifier((x - 2 * b + x0) / epsilon)) / epsilon
        return spec.mass * raw
    else:
        raise ValueError(f"unknown extension {extension!r}")
    raw = sum(mollifier((x - c) / epsilon) for c in centres) / epsilon
    total = integrate(raw, grid)
    if total <= 0:
        raise ValueError(f"epsilon={epsilon:g} is not resolved by the grid (no samples in support)")
    # renormalize so the discrete integral carries the exact mass
    return spec.mass * inside_mass * raw / total


def regularize_potential(
    q: DistributionSpec,
    mollifier: Mollifier,
    epsilon: float,
    grid: Grid,
) -> tuple[SampledFunction, SampledFunction]:
    """Mollified potential and its running antiderivative (``nu_eps(0) = 0``)."""
    q_eps = mollify(q, mollifier, epsilon, grid)
    return q_eps, antiderivative(q_eps)


def antiderivative(q: SampledFunction) -> SampledFunction:
    return SampledFunction(q.grid, cumulative_integral(q.values, q.grid))


def sample_potential(q: DistributionSpec | SampledFunction, grid: Grid):
    """Potential samples and antiderivative for data that need no regularization."""
    q_s = q if isinstance(q, SampledFunction) else sample_spec(q, grid)
    return q_s, antiderivative(q_s)


# --------------------------------------------------------------------------
# epsilon-net diagnostics

def geometric_net(k_first: int = 3, k_last: int = 12) -> np.ndarray:
    """Default epsilon net 2^-k for k = k_first..k_last."""
    return 2.0 ** -np.arange(k_first, k_last + 1, dtype=float)


@dataclass(frozen=True)
class ModerateNet:
    epsilons: np.ndarray
    norms: np.ndarray
    N: int
    C: float
    residual: float
    slope: float
    identically_small: bool = False

    def __iter__(self):
        # allows ``N, C, residual = fit_moderateness(...)``
        return iter((self.N, self.C, self.residual))

    def bound(self) -> np.ndarray:
        return self.C * self.epsilons ** (-self.N)


def _check_net(epsilons, values):
    eps = np.asarray(epsilons, dtype=float)
    vals = np.asarray(values, dtype=float)
    if eps.shape != vals.shape or eps.ndim != 1:
        raise ValueError("epsilons and norms must be 1-D arrays of equal length")
    if eps.size < 4:
        raise ValueError("an epsilon net needs at least 4 entries")
    if np.any(eps <= 0):
        raise ValueError("epsilons must be positive")
    if np.any(vals < 0) or not np.all(np.isfinite(vals)):
        raise ValueError("norms must be finite and non-negative")
    decades = math.log10(eps.max() / eps.min())
    if decades < 2.0:
        warnings.warn(f"epsilon net spans only {decades:.2f} decades", RuntimeWarning, stacklevel=3)
    return eps, vals


def _loglog_fit(eps, vals):
    X = np.log(1.0 / eps)
    Y = np.log(vals)
    slope, intercept = np.polyfit(X, Y, 1)
    resid = float(np.max(np.abs(Y - (intercept + slope * X))))
    return float(slope), float(intercept), resid


def fit_moderateness(epsilons: Sequence[float], norms: Sequence[float]) -> ModerateNet:
    """Fit ``norms <= C eps^-N`` by log-log regression with a ceiling on N."""
    eps, vals = _check_net(epsilons, norms)
    if np.any(vals == 0):
        return ModerateNet(eps, vals, 0, float(vals.max()), 0.0, 0.0, identically_small=True)
    slope, _, resid = _loglog_fit(eps, vals)
    N = max(0, math.ceil(slope - 0.1))
    C = float(np.max(vals * eps**N))
    return ModerateNet(eps, vals, N, C, resid, slope)


@dataclass(frozen=True)
class NegligibilityReport:
    epsilons: np.ndarray
    diff_norms: np.ndarray
    orders: tuple[int, ...]
    passed: dict
    constants: dict
    log_residuals: dict
    slope: float

    @property
    def all_passed(self) -> bool:
        return all(self.passed.values())


def check_negligibility(
    epsilons: Sequence[float],
    diff_norms: Sequence[float],
    orders_to_test: Sequence[int] = (1, 2, 3),
    tolerance: float = 0.5,
) -> NegligibilityReport:
    """Test ``diff_norms <= C_M eps^M`` for each order M on a finite net.

    ``C_M`` is anchored at the coarsest epsilon; order M passes when the
    ratio ``diff/eps^M`` never exceeds that anchor by more than ``tolerance``
    in natural log along the net.  ``slope`` is the raw log-log decay rate
    (``+inf`` when all differences vanish).
    """
    eps, d = _check_net(epsilons, diff_norms)
    order = np.argsort(-eps)
    eps, d = eps[order], d[order]
    orders = tuple(int(m) for m in orders_to_test)
    if np.all(d == 0):
        return NegligibilityReport(eps, d, orders, {m: True for m in orders},
                                   {m: 0.0 for m in orders}, {m: 0.0 for m in orders}, math.inf)
    passed, consts, resids = {}, {}, {}
    tiny = np.finfo(float).tiny
    for m in orders:
        logratio = np.log(np.maximum(d, tiny)) - m * np.log(eps)
        resid = float(np.max(logratio) - logratio[0])
        passed[m] = resid <= tolerance
        consts[m] = float(np.exp(np.max(logratio)))
        resids[m] = resid
    positive = d > 0
    if positive.sum() >= 2:
        slope = float(np.polyfit(np.log(eps[positive]), np.log(d[positive]), 1)[0])
    else:
        slope = math.inf
    return NegligibilityReport(eps, d, orders, passed, consts, resids, slope)
