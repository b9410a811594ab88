import csv
import io
import json
from pathlib import Path

import numpy as np
import pytest

from support import lattice_design

from ordino.dgp import ConfigError, design
from ordino.estimation import FitConfig
from ordino.harness import McSummary, param_vector, render_table, run_mc_study, run_replication, worker_count

FIXTURES = Path(__file__).parent / "fixtures"
QUICK = FitConfig(multistart=2)


def known_summary():
    truth = {"beta1[1]": 1.0, "beta2[1]": 0.5, "rho": 0.33, "A1[1,1]": 1.0}
    rows = [
        {"beta1[1]": 1.01, "beta2[1]": 0.49, "rho": 0.30, "A1[1,1]": 0.98},
        {"beta1[1]": 0.97, "beta2[1]": 0.52, "rho": 0.37, "A1[1,1]": 1.03},
        {"beta1[1]": 1.02, "beta2[1]": 0.5, "rho": 0.31, "A1[1,1]": 1.0},
    ]
    lat = [{k: v + 0.1 for k, v in r.items()} for r in rows[:2]]
    return McSummary("fixture", 3, 100, 9, truth, {"nonlattice": rows, "lattice": lat},
                     {"nonlattice": [], "lattice": [(2, "not converged")]})


def test_param_vector_names():
    vec = param_vector(design(2).truth_params())
    assert list(vec)[:4] == ["beta1[1]", "beta1[2]", "beta2[1]", "rho"]
    assert vec["A1[1,1]"] == design(2).thresholds.a1[1, 0]
    assert len(vec) == 4 + len(list(design(2).thresholds.entries()))


def test_summary_moments():
    s = known_summary()
    assert s.mean("nonlattice")["rho"] == pytest.approx(np.mean([0.30, 0.37, 0.31]))
    assert s.sd("nonlattice")["rho"] == pytest.approx(np.std([0.30, 0.37, 0.31], ddof=1))
    assert s.n_ok("lattice") == 2 and s.failures["lattice"] == [(2, "not converged")]
    assert all(v >= 0 for m in s.models() for v in s.sd(m).values())


def test_single_replication_sd_flagged():
    s = McSummary("one", 1, 10, 0, {"rho": 0.1}, {"nonlattice": [{"rho": 0.2}]}, {"nonlattice": []})
    assert s.sd("nonlattice") == {"rho": 0.0} and not s.sd_defined("nonlattice")
    assert s.to_dict()["summary"]["nonlattice"]["sd_defined"] is False


def test_summary_json_round_trip():
    s = known_summary()
    back = McSummary.from_dict(json.loads(s.to_json()))
    assert back.to_json() == s.to_json()


def test_render_markdown_golden():
    assert render_table(known_summary(), "markdown") == (FIXTURES / "summary_table.md").read_text()


def test_render_csv_golden():
    assert render_table(known_summary(), "csv") == (FIXTURES / "summary_table.csv").read_text()


def test_render_formats_agree():
    s = known_summary()
    rows = list(csv.DictReader(io.StringIO(render_table(s, "csv"))))
    md = render_table(s, "markdown").splitlines()[2:]
    for row, line in zip(rows, md):
        cells = [c.strip() for c in line.strip("|").split("|")]
        assert cells[0] == row["parameter"]
        assert float(cells[1]) == pytest.approx(float(row["truth"]), rel=5e-4)
        mean, sd = cells[2].replace("(", "").replace(")", "").split()
        assert float(mean) == pytest.approx(float(row["nonlattice_mean"]), rel=5e-4)
        assert float(sd) == pytest.approx(float(row["nonlattice_sd"]), rel=5e-4)
    # full precision survives the CSV
    assert float(rows[2]["nonlattice_mean"]) == s.mean("nonlattice")["rho"]


def test_render_empty_summary_is_header_only():
    empty = McSummary("empty", 0, 0, 0, {})
    assert render_table(empty, "markdown") == "| Parameter | Truth |\n|---|---|\n"
    assert render_table(empty, "csv") == "parameter,truth\n"
    with pytest.raises(ValueError):
        render_table(empty, "html")


def test_worker_count(monkeypatch):
    monkeypatch.setenv("ORDINO_THREADS", "3")
    assert worker_count() == 3 and worker_count(8) == 3 and worker_count(2) == 2
    monkeypatch.setenv("ORDINO_THREADS", "0")
    assert worker_count(4) == 1


def test_replication_is_pure():
    a = run_replication(lattice_design(), 2, 400, 11, QUICK)
    b = run_replication(lattice_design(), 2, 400, 11, QUICK)
    assert a == b and a["lattice"][1] is None


def test_mc_deterministic_across_workers(monkeypatch):
    monkeypatch.setenv("ORDINO_THREADS", "8")
    runs = [run_mc_study(lattice_design(), 4, 400, 5, QUICK, workers=w).to_json() for w in (1, 4, 8)]
    assert runs[0] == runs[1] == runs[2]


def test_mc_failures_are_counted():
    # 12 observations leave some cells of the 3x2 grid empty in most replications
    s = run_mc_study(lattice_design(), 3, 12, 1, QUICK, workers=1)
    for m in s.models():
        assert s.n_ok(m) + len(s.failures[m]) == 3
    assert any(s.failures[m] for m in s.models())


def test_mc_rejects_bad_input():
    with pytest.raises(ValueError):
        run_mc_study(lattice_design(), 0, 100, 1, QUICK)
    with pytest.raises(ConfigError):
        run_mc_study("design9", 1, 100, 1, QUICK)
