import csv
import json
import math

import pytest

from sturm_heat.cli import main

SMALL = """
numerics:
  spatial_points: 401
  time_points: 201
  n_max: 10
"""


def write(tmp_path, body, name="run.yaml"):
    p = tmp_path / name
    p.write_text(body + SMALL)
    return p


def rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


@pytest.fixture
def solve_cfg(tmp_path):
    return write(tmp_path, 'q: "0"\na: "1"\nu0: "sin(pi*x)"\nexperiment: solve\n')


def test_solve_outputs(tmp_path, solve_cfg, capsys):
    out = tmp_path / "out"
    assert main([str(solve_cfg), "--output", str(out)]) == 0
    report = json.loads((out / "report.json").read_text())
    assert report["schema_version"] == 1 and report["status"] == "ok"
    assert report["results"]["eigenvalues"][0] == pytest.approx(math.pi**2, abs=1e-7)
    assert all(c["passed"] for c in report["results"]["residual_checks"])
    eig = rows(out / "eigenvalues.csv")
    assert len(eig) == 10 and float(eig[0]["lambda"]) == pytest.approx(9.8696, abs=1e-4)
    field = rows(out / "field.csv")
    assert len(field) == 5 * 401 and set(field[0]) == {"t", "x", "u"}
    assert b"\r\n" not in (out / "field.csv").read_bytes()
    assert "lambda_1=9.8696" in capsys.readouterr().out


def test_json_byte_identical(tmp_path, solve_cfg):
    a, b = tmp_path / "a", tmp_path / "b"
    assert main([str(solve_cfg), "--output", str(a)]) == 0
    assert main([str(solve_cfg), "--output", str(b)]) == 0
    assert (a / "report.json").read_bytes() == (b / "report.json").read_bytes()
    assert (a / "field.csv").read_bytes() == (b / "field.csv").read_bytes()
    assert (a / "report.meta.json").exists()


def test_config_error(tmp_path, capsys):
    cfg = write(tmp_path, 'q: "0"\na: "1"\nu0: "x"\nexperiment: solve\nbogus: 1\n')
    assert main([str(cfg), "--output", str(tmp_path / "o")]) == 2
    assert "unknown keys: bogus" in capsys.readouterr().err
    assert not (tmp_path / "o").exists()
    assert main([str(tmp_path / "missing.yaml")]) == 2


def test_solver_failure(tmp_path):
    cfg = write(tmp_path, 'q: "-40"\na: "1"\nu0: "sin(pi*x)"\nexperiment: solve\n')
    out = tmp_path / "o"
    assert main([str(cfg), "--output", str(out)]) == 3
    report = json.loads((out / "report.json").read_text())
    assert report["status"] == "solver_failed" and "lambda_min" in report["error"]["message"]


def test_verdict_failure(tmp_path):
    cfg = write(tmp_path, 'q: "0.3"\na: "1"\nu0: "x*(1-x)"\nexperiment: estimates\n'
                + "regularization:\n  epsilon_net: [0.25, 0.125]\n")
    cfg.write_text(cfg.read_text().replace("  n_max: 10\n", "  n_max: 10\n  ratio_ceiling: 0.01\n"))
    assert main([str(cfg), "--output", str(tmp_path / "o")]) == 4


def test_estimates_delta(tmp_path):
    cfg = write(tmp_path, 'q: "delta(0.5)"\na: "1 + t/2"\nu0: "x*(1-x)"\nf: "sin(pi*x)"\n'
                'experiment: estimates\nregularization:\n  epsilon: 0.05\n')
    out = tmp_path / "o"
    assert main([str(cfg), "--output", str(out)]) == 0
    report = json.loads((out / "report.json").read_text())
    ids = [r["estimate_id"] for r in report["results"]]
    assert ids[:4] == ["T2.1", "T2.2", "T2.3", "T2.4"] and ids[4:] == ["C2.1", "C2.2", "C2.3", "C2.4"]
    assert any("epsilon=0.05" in n for n in report["notes"])
    assert len(rows(out / "estimates.csv")) == 8


def test_consistency_csv(tmp_path):
    cfg = write(tmp_path, 'q: "1 + x"\na: "1"\nu0: "sin(pi*x)"\nexperiment: consistency\n'
                "regularization:\n  epsilon_net: {k_first: 3, k_last: 6}\n")
    out = tmp_path / "o"
    assert main([str(cfg), "--output", str(out), "--threads", "2"]) == 0
    diffs = [float(r["value"]) for r in rows(out / "consistency.csv") if r["quantity"] == "diff"]
    assert len(diffs) == 4 and all(b < a for a, b in zip(diffs, diffs[1:]))


def test_csv_only_format(tmp_path, solve_cfg):
    solve_cfg.write_text(solve_cfg.read_text() + "output:\n  format: csv\n")
    out = tmp_path / "o"
    assert main([str(solve_cfg), "--output", str(out)]) == 0
    assert not (out / "report.json").exists() and (out / "field.csv").exists()
