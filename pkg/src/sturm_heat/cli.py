"""Command-line entry point: ``sturm-heat <config> [--output DIR] [--threads K] [--verbose]``."""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import logging
import math
import os
import sys
import tempfile
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .config import ConfigError, RunConfig, as_dict, parse_config
from .estimates import (
    norm_profiles,
    suite_passed,
    verify_corollary1,
    verify_corollary2,
    verify_theorem1,
    verify_theorem2,
)
from .experiments import (
    Problem,
    RegularizationChoice,
    Settings,
    classical_solution,
    regularized_solution,
    run_consistency,
    run_existence,
    run_uniqueness,
    time_grid,
)
from .heat import evolve, pde_residual
from .numerics import Grid, NumericsError
from .regularization import mollify, sample_spec, split_spec

SCHEMA_VERSION = 1
EXIT_OK, EXIT_CONFIG, EXIT_SOLVER, EXIT_VERDICT = 0, 2, 3, 4

log = logging.getLogger("sturm_heat")


# --------------------------------------------------------------------------
# output

def _clean(obj):
    """JSON-safe copy: numpy scalars to Python, non-finite floats to strings."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_clean(v) for v in obj.tolist()]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return x
    return obj


def atomic_write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])
    return buf.getvalue()


def report_json(payload: dict) -> str:
    return json.dumps(_clean(payload), indent=2, allow_nan=False) + "\n"


# --------------------------------------------------------------------------
# assembly

def settings_from(cfg: RunConfig, threads: int = 1) -> Settings:
    n = cfg.numerics
    return Settings(
        spatial_points=n.spatial_points,
        time_points=n.time_points,
        n_max=n.n_max,
        a_floor=n.a_floor,
        max_spatial_points=n.max_spatial_points,
        bracket_width=n.bracket_width,
        u0_extension=cfg.regularization.u0_extension,
        workers=max(1, threads),
    )


def problem_from(cfg: RunConfig) -> Problem:
    return Problem(cfg.q_spec(), cfg.a_spec(), cfg.u0_spec(), cfg.f_func(), cfg.T)


def _singular(problem: Problem) -> bool:
    return any(split_spec(s)[1] for s in (problem.q, problem.a, problem.u0))


def single_solve(cfg: RunConfig, settings: Settings):
    """(solution, q, nu, notes) at one regularization scale, or classical when data are bounded."""
    problem = problem_from(cfg)
    m = settings.n_max
    notes: list[str] = []
    if _singular(problem):
        eps = cfg.regularization.epsilon
        moll = cfg.mollifiers()[0]
        sol, q, nu, notes = regularized_solution(problem, moll, eps, settings, m)
        notes = list(notes) + [f"singular data regularized with {moll.label} at epsilon={eps:g}"]
    else:
        grid = Grid(0.0, 1.0, settings.spatial_points)
        sol, q, nu = classical_solution(problem, grid, time_grid(None, cfg.T, settings), settings, m)
    return sol, q, nu, notes


def _digest(cfg: RunConfig) -> str:
    return hashlib.sha256(json.dumps(as_dict(cfg), sort_keys=True).encode()).hexdigest()[:16]


def _run_solve(cfg, settings):
    sol, q, nu, notes = single_solve(cfg, settings)
    times = cfg.output_times()
    rows = []
    x = sol.grid.points
    for t in times:
        u = evolve(sol, t).values
        rows.extend((float(t), float(xi), float(ui)) for xi, ui in zip(x, u))
    eig = [(n + 1, float(lam), float(nrm)) for n, (lam, nrm)
           in enumerate(zip(sol.lambdas, sol.basis.phi_tilde_norms))]
    residuals = [pde_residual(sol, q, t) for t in times] if not sol.has_source else []
    results = {
        "modes": int(sol.lambdas.size),
        "spatial_points": sol.grid.count,
        "time_points": sol.time_grid.count,
        "tail": sol.tail,
        "eigenvalues": [e[1] for e in eig],
        "residual_checks": [{"t": r.t, "residual": r.residual, "bound": r.bound, "passed": r.passed}
                            for r in residuals],
    }
    tables = {
        "field.csv": _csv_text(("t", "x", "u"), rows),
        "eigenvalues.csv": _csv_text(("n", "lambda", "phi_tilde_norm"), eig),
    }
    passed = all(r.passed for r in residuals)
    summary = f"solve: {results['modes']} modes, lambda_1={eig[0][1]:.6g}, " + (
        "residual checks passed" if passed else "residual check FAILED")
    return results, tables, notes, passed, summary


def _run_estimates(cfg, settings):
    sol, q, nu, notes = single_solve(cfg, settings)
    problem = problem_from(cfg)
    if _singular(problem):
        u0s = mollify(problem.u0, cfg.mollifiers()[0], cfg.regularization.epsilon, sol.grid,
                      settings.u0_extension)
    else:
        u0s = sample_spec(problem.u0, sol.grid)
    digest = _digest(cfg)
    prof = norm_profiles(sol, q)
    if sol.has_source:
        reports = verify_theorem2(sol, nu, q, digest, prof) + verify_corollary2(sol, nu, q, u0s, None, digest, prof)
    else:
        reports = verify_theorem1(sol, nu, q, digest, prof) + verify_corollary1(sol, nu, q, u0s, None, digest, prof)
    ceiling = cfg.numerics.ratio_ceiling
    passed = suite_passed(reports, ceiling)
    results = [r.as_dict() for r in reports]
    tables = {"estimates.csv": _csv_text(
        ("estimate_id", "lhs", "rhs", "ratio", "t_at_max", "skipped"),
        [(r.estimate_id, r.lhs, r.rhs, r.ratio, r.t_at_max, int(r.skipped)) for r in reports])}
    worst = max((r.ratio for r in reports if not r.skipped), default=math.nan)
    summary = f"estimates: {len(reports)} reports, max ratio {worst:.4g} " + (
        f"(ceiling {ceiling:g} respected)" if passed else f"EXCEEDS ceiling {ceiling:g}")
    return results, tables, notes, passed, summary


def _run_sweep(cfg, settings):
    problem = problem_from(cfg)
    net = cfg.regularization.epsilon_net
    choices = [RegularizationChoice(m, net) for m in cfg.mollifiers()]
    if cfg.experiment == "existence":
        rep = run_existence(problem, choices[0], settings)
    elif cfg.experiment == "uniqueness":
        rep = run_uniqueness(problem, choices[0], choices[1], settings)
    else:
        rep = run_consistency(problem, choices[0], settings)
    quantities = ("u_sup", "ut_sup") if rep.kind == "existence" else ("diff", "u_sup", "ut_sup")
    rows = [(r.epsilon, name, getattr(r, name)) for r in rep.records if r.ok for name in quantities]
    tables = {f"{rep.kind}.csv": _csv_text(("epsilon", "quantity", "value"), rows)}
    summary = f"{rep.kind}: {rep.verdict}"
    return rep.as_dict(), tables, [], rep.passed, summary


_DISPATCH = {"solve": _run_solve, "estimates": _run_estimates, "existence": _run_sweep,
             "uniqueness": _run_sweep, "consistency": _run_sweep}


def run(cfg: RunConfig, output: str | os.PathLike | None = None, threads: int = 1,
        stream=None) -> int:
    """Execute a parsed config, write artifacts, return the exit status."""
    stream = stream or sys.stdout
    out = Path(output if output is not None else cfg.output.path)
    settings = settings_from(cfg, threads)
    payload = {"schema_version": SCHEMA_VERSION, "experiment": cfg.experiment,
               "config": as_dict(cfg)}
    tables: dict = {}
    try:
        results, tables, notes, passed, summary = _DISPATCH[cfg.experiment](cfg, settings)
        payload.update(status="ok" if passed else "verdict_failed", passed=passed,
                       results=results, notes=notes)
        code = EXIT_OK if passed else EXIT_VERDICT
    except (NumericsError, ValueError, FloatingPointError) as exc:
        log.debug("solver failure", exc_info=True)
        payload.update(status="solver_failed", passed=False,
                       error={"type": type(exc).__name__, "message": str(exc)})
        summary = f"{cfg.experiment}: solver failure: {exc}"
        code = EXIT_SOLVER
    fmt = cfg.output.format
    if fmt in ("json", "both") or code == EXIT_SOLVER:
        atomic_write(out / "report.json", report_json(payload))
    if fmt in ("csv", "both"):
        for name, text in sorted(tables.items()):
            atomic_write(out / name, text)
    meta = {"finished_at": datetime.now(timezone.utc).isoformat(), "version": __version__,
            "threads": settings.workers}
    atomic_write(out / "report.meta.json", json.dumps(meta, indent=2) + "\n")
    print(summary, file=stream)
    return code


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="sturm-heat", description=__doc__.splitlines()[0])
    ap.add_argument("config", help="YAML configuration file")
    ap.add_argument("--output", help="output directory (overrides output.path)")
    ap.add_argument("--threads", type=int, default=1, help="worker threads for epsilon sweeps")
    ap.add_argument("--verbose", action="store_true")
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        text = Path(args.config).read_text(encoding="utf-8")
        cfg = parse_config(text)
    except (OSError, ConfigError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if args.threads < 1:
        print("config error: --threads must be at least 1", file=sys.stderr)
        return EXIT_CONFIG
    log.info("running %s", cfg.experiment)
    return run(cfg, args.output, args.threads)


if __name__ == "__main__":
    sys.exit(main())
