"""Command-line interface: exit codes, artifacts, and file formats."""

from __future__ import annotations

import json

import pytest

from lafsim.cli import main

SCENARIO = """\
[demand]
1-3 = 900
3-1 = 600

[parameters]
sim_duration = 20
warmup = 0
seed = 5
time_limit = 120
"""

SWEEP_SCENARIO = SCENARIO + """
[sweep]
alpha = 0.5, 1.0
"""


@pytest.fixture()
def scenario_file(tmp_path):
    path = tmp_path / "scenario.ini"
    path.write_text(SCENARIO)
    return str(path)


def test_run_produces_report(tmp_path, scenario_file):
    out = tmp_path / "out"
    rc = main(["run", "--scenario", scenario_file, "--out", str(out),
               "--no-plots"])
    assert rc == 0
    summary = json.loads((out / "summary.json").read_text())
    assert summary["n_finished"] >= 1
    assert not summary["aborted"]
    assert (out / "vehicles.csv").exists()
    assert (out / "events.jsonl").exists()
    assert (out / "plans.json").exists()


def test_run_multi_seed_aggregates(tmp_path, scenario_file):
    out = tmp_path / "multi"
    rc = main(["run", "--scenario", scenario_file, "--out", str(out),
               "--seeds", "5,6", "--no-plots"])
    assert rc == 0
    assert (out / "seed5" / "summary.json").exists()
    assert (out / "seed6" / "summary.json").exists()
    agg = json.loads((out / "aggregate.json").read_text())
    assert agg["n_seeds"] == 2
    assert "mean_delay" in agg
    rows = (out / "runs.csv").read_text().strip().splitlines()
    assert len(rows) == 3


def test_verify_round_trip(tmp_path, scenario_file):
    out = tmp_path / "out"
    assert main(["run", "--scenario", scenario_file, "--out", str(out),
                 "--no-plots"]) == 0
    assert main(["verify", str(out / "plans.json")]) == 0


def test_verify_rejects_tampered_plans(tmp_path, scenario_file):
    out = tmp_path / "out"
    assert main(["run", "--scenario", scenario_file, "--out", str(out),
                 "--no-plots"]) == 0
    doc = json.loads((out / "plans.json").read_text())
    plan = doc["plans"][0]
    arm = str(plan["route"][0]) if isinstance(plan["arms"], dict) else None
    key = arm if arm in plan["arms"] else plan["route"][0]
    plan["arms"][str(key)]["x"][2] += 4.0   # teleport
    tampered = tmp_path / "tampered.json"
    tampered.write_text(json.dumps(doc))
    assert main(["verify", str(tampered)]) == 2


def test_report_prints_summary(tmp_path, scenario_file, capsys):
    out = tmp_path / "out"
    assert main(["run", "--scenario", scenario_file, "--out", str(out),
                 "--no-plots"]) == 0
    assert main(["report", str(out)]) == 0
    text = capsys.readouterr().out
    assert "mean_delay" in text


def test_export_model_lp_and_mps(tmp_path, scenario_file):
    lp = tmp_path / "model.lp"
    mps = tmp_path / "model.mps"
    assert main(["export-model", "--scenario", scenario_file,
                 "--out", str(lp), "--format", "lp"]) == 0
    assert main(["export-model", "--scenario", scenario_file,
                 "--out", str(mps), "--format", "mps"]) == 0
    assert "minimize" in lp.read_text().lower()
    assert "ROWS" in mps.read_text()


def test_solve_lp_subcommand(tmp_path):
    from lafsim.lp_io import write_lp
    from lafsim.model import MilpModel
    m = MilpModel("tiny")
    m.continuous("x", 0.0, 10.0)
    m.obj_add("x", 1.0)
    m.add_ge({"x": 1.0}, 3.0, "demo")
    lp = tmp_path / "model.lp"
    sol = tmp_path / "model.sol"
    write_lp(m, str(lp))
    assert main(["solve-lp", str(lp), str(sol), "60"]) == 0
    text = sol.read_text()
    assert "optimal" in text
    assert "x 3" in text


def test_sweep_runs_configured_axes(tmp_path):
    scen = tmp_path / "sweep.ini"
    scen.write_text(SWEEP_SCENARIO)
    out = tmp_path / "sweep"
    rc = main(["sweep", "--scenario", str(scen), "--out", str(out),
               "--seeds", "5"])
    assert rc == 0
    rows = (out / "sweep.csv").read_text().strip().splitlines()
    assert len(rows) == 3  # header + 2 alpha values


def test_missing_scenario_is_usage_error(tmp_path):
    assert main(["run", "--scenario", str(tmp_path / "nope.ini"),
                 "--out", str(tmp_path / "o")]) == 1


def test_bad_subcommand_is_usage_error():
    with pytest.raises(SystemExit) as exc:
        main(["frobnicate"])
    assert exc.value.code == 1


def test_sweep_without_axes_is_usage_error(tmp_path, scenario_file):
    assert main(["sweep", "--scenario", scenario_file,
                 "--out", str(tmp_path / "s")]) == 1
