"""Round-trip and determinism tests for the LP/MPS/solution file formats."""

from __future__ import annotations

import math

import pytest

from lafsim.builder import build_model
from lafsim.lp_io import (
    export_model, read_lp, read_solution_file, write_lp, write_mps,
    write_solution_file,
)
from lafsim.model import MilpModel
from lafsim.solver import solve, solve_via_file

from conftest import make_snapshot, make_vehicle


def tiny_model() -> MilpModel:
    """min 2x + 3y - z  s.t.  x + y >= 4,  y - z == 1,  x <= 10, z binary."""
    m = MilpModel("tiny")
    m.continuous("x", 0.0, 10.0)
    m.continuous("y", 0.0, math.inf)
    m.binary("z")
    m.obj_add("x", 2.0)
    m.obj_add("y", 3.0)
    m.obj_add("z", -1.0)
    m.add_ge({"x": 1.0, "y": 1.0}, 4.0, "demo")
    m.add_eq({"y": 1.0, "z": -1.0}, 1.0, "demo")
    return m


def models_equivalent(a: MilpModel, b: MilpModel) -> None:
    assert set(a.variables) == set(b.variables)
    for name, va in a.variables.items():
        vb = b.variables[name]
        assert (va.lb, va.ub, va.integer) == (vb.lb, vb.ub, vb.integer)
    assert a.objective == b.objective
    rows_a = sorted((r.lb, r.ub, tuple(sorted(r.coeffs.items())))
                    for r in a.rows)
    rows_b = sorted((r.lb, r.ub, tuple(sorted(r.coeffs.items())))
                    for r in b.rows)
    assert rows_a == rows_b


def test_lp_round_trip(tmp_path):
    m = tiny_model()
    path = tmp_path / "tiny.lp"
    write_lp(m, str(path))
    m2 = read_lp(str(path))
    models_equivalent(m, m2)


def test_lp_round_trip_preserves_optimum(tmp_path):
    m = tiny_model()
    sol = solve(m)
    path = tmp_path / "tiny.lp"
    write_lp(m, str(path))
    sol2 = solve(read_lp(str(path)))
    assert sol.status == sol2.status == "optimal"
    assert sol2.objective_value == pytest.approx(sol.objective_value, abs=1e-9)


def test_mps_output_is_deterministic(tmp_path):
    m = tiny_model()
    p1, p2 = tmp_path / "a.mps", tmp_path / "b.mps"
    write_mps(m, str(p1))
    write_mps(tiny_model(), str(p2))
    text = p1.read_text()
    assert text == p2.read_text()
    assert "ROWS" in text and "COLUMNS" in text and "BOUNDS" in text


def test_export_model_dispatches_on_format(tmp_path):
    m = tiny_model()
    lp = tmp_path / "m.lp"
    mps = tmp_path / "m.mps"
    export_model(m, str(lp), fmt="lp")
    export_model(m, str(mps), fmt="mps")
    assert lp.read_text().lstrip().lower().startswith(("\\", "minimize"))
    assert "ROWS" in mps.read_text()
    with pytest.raises(ValueError):
        export_model(m, str(tmp_path / "m.xyz"), fmt="xyz")


def test_solution_file_round_trip(tmp_path):
    path = tmp_path / "model.sol"
    values = {"x": 3.0, "y": 1.0, "z": 0.0}
    write_solution_file(str(path), "optimal", 8.0, values)
    status, objective, values2 = read_solution_file(str(path))
    assert status == "optimal"
    assert objective == pytest.approx(8.0)
    assert values2 == values


def test_in_process_and_file_paths_agree(tmp_path):
    m = tiny_model()
    direct = solve(m)
    via_file = solve_via_file(tiny_model(), workdir=str(tmp_path))
    assert direct.status == via_file.status == "optimal"
    assert via_file.objective_value == pytest.approx(
        direct.objective_value, abs=1e-6)


def test_empty_model_exports(tmp_path):
    m = MilpModel("empty")
    lp = tmp_path / "empty.lp"
    write_lp(m, str(lp))
    assert lp.read_text().strip()
    sol = solve_via_file(m, workdir=str(tmp_path))
    assert sol.status == "optimal"
    assert sol.objective_value == pytest.approx(0.0)


def test_snapshot_model_lp_round_trip(geo, tmp_path):
    snap = make_snapshot(geo, [make_vehicle(0, 1, 3, fixed_route=(1, 3))],
                         T=12)
    model, _ = build_model(snap)
    path = tmp_path / "snap.lp"
    write_lp(model, str(path))
    m2 = read_lp(str(path))
    assert m2.stats()["n_vars"] == model.stats()["n_vars"]
    assert m2.stats()["n_rows"] == model.stats()["n_rows"]
