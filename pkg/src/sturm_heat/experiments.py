"""Epsilon sweeps probing very weak solutions: existence, uniqueness, consistency.

Every epsilon is an independent full solve (regularize the data, build the
eigenbasis, evolve), so sweeps can run on a thread pool.
"""

from __future__ import annotations

import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np

from .heat import SpectralSolution, TimeCoefficient, accumulate, solve
from .numerics import Grid, NumericsError, SampledFunction, quadrature_weights
from .regularization import (
    BUMP,
    ODD,
    REFLECT,
    DistributionSpec,
    Mollifier,
    ModerateNet,
    NegligibilityReport,
    check_negligibility,
    fit_moderateness,
    geometric_net,
    mollify,
    regularize_potential,
    sample_potential,
    sample_spec,
    split_spec,
)
from .sturm_liouville import eigenbasis

MODERATE_RESIDUAL = 0.5


@dataclass(frozen=True)
class RegularizationChoice:
    mollifier: Mollifier
    epsilon_net: tuple[float, ...]
    label: str = ""
    # self-test hook: (eps, x) -> extra term added to the regularized u0
    u0_perturbation: Callable[[float, np.ndarray], np.ndarray] | None = field(default=None, compare=False)

    def __post_init__(self):
        net = tuple(float(e) for e in self.epsilon_net)
        if not net:
            raise ValueError("epsilon net is empty")
        if any(not 0 < e <= 1 for e in net):
            raise ValueError("epsilons must lie in (0, 1]")
        if any(b >= a for a, b in zip(net, net[1:])):
            raise ValueError("epsilon net must be strictly decreasing")
        object.__setattr__(self, "epsilon_net", net)
        if not self.label:
            object.__setattr__(self, "label", self.mollifier.label)

    @property
    def complete(self) -> bool:
        """Long enough for slope fitting (at least 4 entries)."""
        return len(self.epsilon_net) >= 4


def default_choice(mollifier: Mollifier = BUMP, k_first: int = 3, k_last: int = 10) -> RegularizationChoice:
    return RegularizationChoice(mollifier, tuple(geometric_net(k_first, k_last)))


@dataclass(frozen=True)
class Problem:
    q: DistributionSpec
    a: DistributionSpec
    u0: DistributionSpec
    f: Callable[[float, np.ndarray], np.ndarray] | None = None
    T: float = 1.0


@dataclass(frozen=True)
class Settings:
    spatial_points: int = 2001
    time_points: int = 2001
    n_max: int = 40
    a_floor: float = 1.0
    max_spatial_points: int = 20001
    max_time_points: int = 20001
    # existence sweeps raise the mode count to ceil(modes_per_inverse_eps / eps)
    modes_per_inverse_eps: float = 2.0
    max_modes: int = 1024
    bracket_width: float = 1.0
    # odd reflection keeps mollified initial data in the operator domain
    u0_extension: str = ODD
    workers: int = 1
    mass_term_diagnostic: bool = False


@dataclass
class EpsilonRecord:
    epsilon: float
    spatial_points: int = 0
    time_points: int = 0
    modes: int = 0
    u_sup: float = math.nan
    ut_sup: float = math.nan
    diff: float = math.nan
    mass_term: float = math.nan
    status: str = "ok"
    message: str = ""

    @property
    def ok(self) -> bool:
        return self.status == "ok"


@dataclass
class ExperimentReport:
    kind: str
    records: list[EpsilonRecord]
    fits: dict
    verdict: str
    passed: bool
    notes: list[str] = field(default_factory=list)
    settings: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        return {
            "kind": self.kind,
            "verdict": self.verdict,
            "passed": self.passed,
            "records": [asdict(r) for r in self.records],
            "fits": self.fits,
            "notes": list(self.notes),
            "settings": dict(self.settings),
        }

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.records if r.ok])


# --------------------------------------------------------------------------
# regularized solves

def _odd(n: int) -> int:
    return n if n % 2 else n + 1


def spatial_grid(eps: float, settings: Settings, modes: int) -> Grid:
    """Grid fine enough for eps (h <= eps/10) and the requested mode count."""
    need = max(settings.spatial_points, math.ceil(10.0 / eps) + 1, 10 * modes + 1)
    return Grid(0.0, 1.0, _odd(min(need, settings.max_spatial_points)))


def time_grid(eps: float | None, T: float, settings: Settings) -> Grid:
    need = settings.time_points
    if eps is not None:
        need = max(need, math.ceil(10.0 * T / eps) + 1)
    return Grid(0.0, T, _odd(min(need, settings.max_time_points)))


def regularize_time_coefficient(a: DistributionSpec, mollifier: Mollifier | None, eps: float | None,
                                grid: Grid, a_floor: float = 1.0) -> tuple[TimeCoefficient, list[str]]:
    """Mollify a(t) with even reflection; pure delta coefficients get the floor added."""
    notes = []
    smooth, singular = split_spec(a)
    if eps is None or mollifier is None:
        vals = sample_spec(a, grid).values
        floor = float(vals.min())
    else:
        vals = np.zeros(grid.count)
        for part in smooth:
            vals = vals + mollify(part, mollifier, eps, grid, REFLECT).values
        if smooth:
            floor = float(vals.min())
        else:
            vals = vals + a_floor
            floor = a_floor
            notes.append(f"time coefficient is purely singular; floor a0={a_floor:g} added")
        for part in singular:
            vals = vals + mollify(part, mollifier, eps, grid, REFLECT).values
    if not floor > 0:
        raise ValueError(f"time coefficient must stay positive (minimum {floor:.6g})")
    return accumulate(SampledFunction(grid, vals), floor), notes


def regularized_solution(problem: Problem, mollifier: Mollifier, eps: float, settings: Settings,
                         modes: int, u0_perturbation=None, grid: Grid | None = None):
    """Regularize every coefficient at scale eps and assemble the truncated series."""
    grid = grid or spatial_grid(eps, settings, modes)
    tg = time_grid(eps, problem.T, settings)
    q_eps, nu_eps = regularize_potential(problem.q, mollifier, eps, grid)
    tc, notes = regularize_time_coefficient(problem.a, mollifier, eps, tg, settings.a_floor)
    u0 = mollify(problem.u0, mollifier, eps, grid, settings.u0_extension)
    if u0_perturbation is not None:
        u0 = u0.with_values(u0.values + u0_perturbation(eps, grid.points))
    basis = eigenbasis(nu_eps, modes, settings.bracket_width)
    return solve(basis, u0, tc, problem.f), q_eps, nu_eps, notes


def classical_solution(problem: Problem, grid: Grid, tg: Grid, settings: Settings, modes: int):
    """Reference solution for bounded data, no regularization."""
    q, nu = sample_potential(problem.q, grid)
    tc, _ = regularize_time_coefficient(problem.a, None, None, tg)
    u0 = sample_spec(problem.u0, grid)
    basis = eigenbasis(nu, modes, settings.bracket_width)
    return solve(basis, u0, tc, problem.f), q, nu


def sup_difference(sol_a: SpectralSolution, sol_b: SpectralSolution, chunk: int = 256) -> float:
    """max over time nodes of ||u_a(t) - u_b(t)||_{L2} (shared grids required)."""
    if sol_a.grid != sol_b.grid or sol_a.time_grid != sol_b.time_grid:
        raise ValueError("solutions must share spatial and time grids")
    w = quadrature_weights(sol_a.grid)
    Ua, Ub = sol_a.amplitudes_on_grid(), sol_b.amplitudes_on_grid()
    best = 0.0
    for s in range(0, Ua.shape[0], chunk):
        d = Ua[s:s + chunk] @ sol_a.basis.phi - Ub[s:s + chunk] @ sol_b.basis.phi
        best = max(best, float(np.sqrt(np.max((d * d) @ w))))
    return best


def _sup_norms(sol: SpectralSolution) -> tuple[float, float]:
    """sup_t ||u|| and sup_t ||u_t|| by Parseval on the orthonormal basis."""
    U = sol.amplitudes_on_grid()
    dU = sol.dt_amplitudes_on_grid()
    return float(np.sqrt(np.max(np.sum(U**2, axis=1)))), float(np.sqrt(np.max(np.sum(dU**2, axis=1))))


def _sweep(fn, epsilons, workers: int):
    """Run fn(eps) over the net, collecting warnings; returns (results, notes)."""
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        if workers > 1:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                results = list(pool.map(fn, epsilons))
        else:
            results = [fn(e) for e in epsilons]
    notes = list(dict.fromkeys(str(w.message) for w in caught))
    return results, notes


def _guard(record: EpsilonRecord, fn):
    try:
        fn()
    except (NumericsError, ValueError) as exc:
        record.status = "failed"
        record.message = f"{type(exc).__name__}: {exc}"
    return record


def _monotone(values, slack: float = 0.1) -> bool:
    v = np.asarray(values, dtype=float)
    return bool(np.all(v[1:] <= v[:-1] * (1.0 + slack)))


def _settings_dict(settings: Settings, choices) -> dict:
    d = asdict(settings)
    d["choices"] = [{"label": c.label, "epsilon_net": list(c.epsilon_net)} for c in choices]
    return d


# --------------------------------------------------------------------------
# experiments

def run_existence(problem: Problem, choice: RegularizationChoice,
                  settings: Settings = Settings()) -> ExperimentReport:
    """Fit moderateness of sup_t ||u_eps|| and sup_t ||d_t u_eps|| along the net."""

    def modes_for(eps):
        want = math.ceil(settings.modes_per_inverse_eps / eps)
        return int(min(max(settings.n_max, want), settings.max_modes))

    def one(eps):
        rec = EpsilonRecord(eps)

        def body():
            m = modes_for(eps)
            sol, _, _, notes = regularized_solution(problem, choice.mollifier, eps, settings, m,
                                                    choice.u0_perturbation)
            rec.spatial_points, rec.time_points, rec.modes = sol.grid.count, sol.time_grid.count, m
            rec.u_sup, rec.ut_sup = _sup_norms(sol)
            rec.message = "; ".join(notes)
        return _guard(rec, body)

    records, notes = _sweep(one, choice.epsilon_net, settings.workers)
    good = [r for r in records if r.ok]
    fits: dict = {}
    if len(good) < 4:
        verdict, passed = "inconclusive (net too short)", False
    else:
        eps = np.array([r.epsilon for r in good])
        fu = fit_moderateness(eps, [r.u_sup for r in good])
        ft = fit_moderateness(eps, [r.ut_sup for r in good])
        fits = {"u": _fit_dict(fu), "ut": _fit_dict(ft)}
        passed = fu.residual <= MODERATE_RESIDUAL and ft.residual <= MODERATE_RESIDUAL
        verdict = (f"moderate (N_u={fu.N}, N_ut={ft.N})" if passed
                   else f"not moderate (residuals {fu.residual:.3g}, {ft.residual:.3g})")
    if len(good) < len(records):
        notes.append(f"{len(records) - len(good)} epsilon point(s) failed")
    notes.append(f"modes per epsilon: max({settings.n_max}, ceil({settings.modes_per_inverse_eps:g}/eps))")
    return ExperimentReport("existence", records, fits, verdict, passed, notes,
                            _settings_dict(settings, [choice]))


def run_uniqueness(problem: Problem, choice_a: RegularizationChoice, choice_b: RegularizationChoice,
                   settings: Settings = Settings(), orders=(1, 2, 3)) -> ExperimentReport:
    """Measure D(eps) = sup_t ||u_eps - u~_eps|| between two regularizations."""
    if choice_a.epsilon_net != choice_b.epsilon_net:
        raise ValueError("both regularization choices must share the epsilon net")
    m = settings.n_max

    def one(eps):
        rec = EpsilonRecord(eps)

        def body():
            grid = spatial_grid(eps, settings, m)
            sa, _, _, na = regularized_solution(problem, choice_a.mollifier, eps, settings, m,
                                                choice_a.u0_perturbation, grid)
            if choice_b == choice_a and choice_b.u0_perturbation is choice_a.u0_perturbation:
                sb, nb = sa, []
            else:
                sb, _, _, nb = regularized_solution(problem, choice_b.mollifier, eps, settings, m,
                                                    choice_b.u0_perturbation, grid)
            rec.spatial_points, rec.time_points, rec.modes = grid.count, sa.time_grid.count, m
            rec.u_sup, rec.ut_sup = _sup_norms(sa)
            rec.diff = sup_difference(sa, sb)
            if settings.mass_term_diagnostic:
                rec.mass_term = _mass_term(sa, sb)
            rec.message = "; ".join(dict.fromkeys(na + nb))
        return _guard(rec, body)

    records, notes = _sweep(one, choice_a.epsilon_net, settings.workers)
    good = [r for r in records if r.ok]
    fits: dict = {}
    if len(good) < 4:
        verdict, passed = "inconclusive (net too short)", False
    else:
        eps = np.array([r.epsilon for r in good])
        D = np.array([r.diff for r in good])
        neg = check_negligibility(eps, D, orders)
        fits = {"negligibility": _neg_dict(neg)}
        if np.all(D == 0):
            passed, drop = True, 0.0
        else:
            drop = D[-1] / D[0] if D[0] > 0 else math.inf
            passed = _monotone(D) and drop <= 1e-2
        fits["final_over_initial"] = drop
        fits["monotone"] = _monotone(D)
        verdict = (f"consistent with uniqueness (slope {neg.slope:.3g})" if passed
                   else f"not consistent with uniqueness (slope {neg.slope:.3g}, final/initial {drop:.3g})")
    notes.append("finitely many regularizations sampled; agreement is evidence, not proof")
    return ExperimentReport("uniqueness", records, fits, verdict, passed, notes,
                            _settings_dict(settings, [choice_a, choice_b]))


def _mass_term(sa: SpectralSolution, sb: SpectralSolution) -> float:
    """max_t |a_eps - a~_eps| * ||d_xx u~_eps(t)||."""
    from .estimates import norm_profiles
    da = np.abs(sa.time_coeff.a.values - sb.time_coeff.a.values)
    if not np.any(da):
        return 0.0
    q = SampledFunction(sb.grid, np.gradient(sb.basis.nu.values, sb.grid.h))
    return float(np.max(da * norm_profiles(sb, q).uxx))


def run_consistency(problem: Problem, choice: RegularizationChoice,
                    settings: Settings = Settings()) -> ExperimentReport:
    """E(eps) = sup_t ||u - u_eps|| against the classical solution of bounded data."""
    m = settings.n_max
    references: dict = {}

    def reference(grid, tg):
        key = (grid.count, tg.count)
        if key not in references:
            references[key] = classical_solution(problem, grid, tg, settings, m)[0]
        return references[key]

    def one(eps):
        rec = EpsilonRecord(eps)

        def body():
            grid = spatial_grid(eps, settings, m)
            sol, _, _, notes = regularized_solution(problem, choice.mollifier, eps, settings, m,
                                                    choice.u0_perturbation, grid)
            ref = reference(grid, sol.time_grid)
            rec.spatial_points, rec.time_points, rec.modes = grid.count, sol.time_grid.count, m
            rec.u_sup, rec.ut_sup = _sup_norms(sol)
            rec.diff = sup_difference(ref, sol)
            rec.message = "; ".join(notes)
        return _guard(rec, body)

    # references are cached per grid, so keep this sweep sequential
    records, notes = _sweep(one, choice.epsilon_net, 1)
    good = [r for r in records if r.ok]
    E = np.array([r.diff for r in good])
    eps = np.array([r.epsilon for r in good])
    fits: dict = {}
    if len(good) >= 2 and np.all(E > 0):
        fits["slope"] = float(np.polyfit(np.log(eps), np.log(E), 1)[0])
    if len(good) < 4:
        verdict, passed = "inconclusive (net too short)", False
    else:
        decreasing = bool(np.all(np.diff(E) < 0))
        passed = decreasing and E[-1] <= E[0] / 10
        fits["strictly_decreasing"] = decreasing
        fits["final_over_initial"] = float(E[-1] / E[0]) if E[0] > 0 else math.nan
        verdict = ("consistent" if passed else "not consistent") + (
            f" (slope {fits['slope']:.3g})" if "slope" in fits else "")
    return ExperimentReport("consistency", records, fits, verdict, passed, notes,
                            _settings_dict(settings, [choice]))


def _fit_dict(fit: ModerateNet) -> dict:
    return {"N": fit.N, "C": fit.C, "residual": fit.residual, "slope": fit.slope,
            "identically_small": fit.identically_small}


def _neg_dict(rep: NegligibilityReport) -> dict:
    return {
        "orders": list(rep.orders),
        "passed": {str(k): v for k, v in rep.passed.items()},
        "constants": {str(k): v for k, v in rep.constants.items()},
        "log_residuals": {str(k): v for k, v in rep.log_residuals.items()},
        "slope": rep.slope,
    }
