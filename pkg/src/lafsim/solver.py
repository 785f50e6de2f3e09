"""Solver adapter: in-process HiGHS (via scipy) and a file-based path.

The file-based path exports the model as LP text, invokes an external
solver command on it and parses a plain-text solution file back.  By
default the external command is this package's own ``solve-lp`` CLI entry
running in a subprocess, so the export -> parse -> solve -> report loop is
exercised end to end; set ``LAFSIM_SOLVER_CMD`` to substitute any solver
that honours the same argument convention::

    $LAFSIM_SOLVER_CMD <model.lp> <out.sol> <time_limit_seconds>

Every ingested solution is re-checked against the original model rows
before it is accepted.
"""

from __future__ import annotations

import os
import shlex
import subprocess
import sys
import tempfile
import time
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.optimize import Bounds, LinearConstraint, milp

from .lp_io import read_solution_file, write_lp, write_solution_file
from .model import MilpModel, Solution

INGEST_TOL = 1e-6

_SCIPY_STATUS = {0: "optimal", 1: "iteration_limit", 2: "infeasible",
                 3: "unbounded", 4: "error"}


class SolverError(RuntimeError):
    pass


def _clean_values(model: MilpModel, x: np.ndarray, names: list[str]) -> dict[str, float]:
    values: dict[str, float] = {}
    for name, val in zip(names, x):
        v = model.variables[name]
        if v.integer:
            val = float(round(val))
        elif abs(val) < 1e-11:
            val = 0.0
        values[name] = float(val)
    return values


def solve(model: MilpModel, time_limit: float = 60.0, mip_gap: float = 0.0) -> Solution:
    """Solve in process with HiGHS.  Returns a checked Solution."""
    t0 = time.perf_counter()
    if not model.variables:
        return Solution("optimal", model.objective_const, {}, 0.0)
    c, a, rlb, rub, vlb, vub, integ, names = model.to_arrays()
    options = {"time_limit": float(time_limit), "presolve": True}
    if mip_gap:
        options["mip_rel_gap"] = float(mip_gap)
    constraints = LinearConstraint(a, rlb, rub) if len(model.rows) else ()
    res = milp(c, constraints=constraints, integrality=integ,
               bounds=Bounds(vlb, vub), options=options)
    elapsed = time.perf_counter() - t0
    status = _SCIPY_STATUS.get(res.status, "error")
    if status == "iteration_limit":
        status = "time_limit" if res.x is None else "optimal"
    if res.x is None:
        return Solution(status if status != "optimal" else "error", None, {},
                        elapsed, res.message or "")
    values = _clean_values(model, res.x, names)
    return ingest(model, "optimal", values, elapsed, res.message or "")


def ingest(model: MilpModel, status: str, values: dict[str, float],
           solve_time: float = 0.0, message: str = "") -> Solution:
    """Re-check a claimed-feasible solution against the model before use."""
    if status != "optimal":
        return Solution(status, None, {}, solve_time, message)
    bad = model.check_solution(values, INGEST_TOL)
    if bad:
        raise SolverError(
            f"solver returned an infeasible point ({len(bad)} violations); first: {bad[0]}")
    return Solution("optimal", model.eval_objective(values), values, solve_time, message)


def _default_command() -> list[str]:
    return [sys.executable, "-m", "lafsim.cli", "solve-lp"]


def solve_via_file(model: MilpModel, time_limit: float = 60.0,
                   workdir: str | None = None) -> Solution:
    """Solve through the LP-file handoff path."""
    t0 = time.perf_counter()
    if not model.variables:
        return Solution("optimal", model.objective_const, {}, 0.0)
    ctx = tempfile.TemporaryDirectory() if workdir is None else None
    base = ctx.name if ctx else workdir
    try:
        lp_path = os.path.join(base, "model.lp")
        sol_path = os.path.join(base, "model.sol")
        write_lp(model, lp_path)
        cmd_env = os.environ.get("LAFSIM_SOLVER_CMD")
        cmd = shlex.split(cmd_env) if cmd_env else _default_command()
        cmd = cmd + [lp_path, sol_path, str(float(time_limit))]
        proc = subprocess.run(cmd, capture_output=True, text=True,
                              timeout=max(time_limit * 4.0, 120.0))
        if proc.returncode not in (0, 1):
            raise SolverError(
                f"external solver failed (rc={proc.returncode}): {proc.stderr[-500:]}")
        if not os.path.exists(sol_path):
            raise SolverError("external solver produced no solution file")
        status, _objective, values = read_solution_file(sol_path)
        elapsed = time.perf_counter() - t0
        if status != "optimal":
            return Solution(status, None, {}, elapsed)
        # keep only variables the model knows; round integers
        filtered = {}
        for name, val in values.items():
            if name in model.variables:
                filtered[name] = float(round(val)) if model.variables[name].integer else val
        for name, var in model.variables.items():
            filtered.setdefault(name, var.lb if var.lb > -np.inf else 0.0)
        return ingest(model, "optimal", filtered, elapsed)
    finally:
        if ctx:
            ctx.cleanup()


def solve_lp_file(lp_path: str, sol_path: str, time_limit: float = 60.0) -> str:
    """Worker for the solve-lp CLI subcommand: read LP, solve, write solution."""
    from .lp_io import read_lp
    model = read_lp(lp_path)
    sol = solve(model, time_limit=time_limit)
    write_solution_file(sol_path, sol.status, sol.objective_value, sol.values)
    return sol.status


# ---------------------------------------------------------------------------
# joint route/trajectory optimization of one snapshot


@dataclass
class SnapshotResult:
    status: str
    objective: float | None
    plans: list            # TrajectoryPlan per decision vehicle
    solve_time: float
    n_leaves: int = 0
    message: str = ""

    @property
    def ok(self) -> bool:
        return self.status == "optimal"


def _route_bound(snapshot, veh, route) -> tuple[float, float]:
    """Sound lower bounds (destination leave time, objective share) for one
    vehicle restricted to one route, ignoring all other traffic.

    Uses only facts the model enforces: link speed limits, exact connector
    travel times, and the position freeze of a turn-around, which delays
    leaving an intermediate arm by (T_turn + 1) steps after entering it.
    """
    geo = snapshot.geometry
    s = snapshot
    h = s.T * s.dt
    turn_dwell = (s.T_turn + 1) * s.dt
    touts: dict[int, float] = {}
    a0 = route[0]
    if veh.in_connector:
        touts[a0] = veh.t_leave_link
    else:
        t0_min = max(0.0, veh.x_now / geo.arms[a0].speed_limit)
        if veh.turn_age is not None:
            t0_min = max(t0_min, (s.T_turn - veh.turn_age + 1) * s.dt)
        touts[a0] = min(t0_min, h) if len(route) > 1 else t0_min
    for i in range(1, len(route)):
        a1, a2 = route[i - 1], route[i]
        if i == 1 and veh.in_connector:
            tt = geo.connectors[veh.committed_hop].travel_time
        else:
            tt = geo.min_connector_time(a1, a2)
        tin = touts[a1] + tt
        arm = geo.arms[a2]
        if a2 == route[-1]:
            touts[a2] = tin + arm.link_length / arm.speed_limit
        else:
            # an intermediate arm needs a turn-around before it can be left
            touts[a2] = min(max(tin, 0.0) + turn_dwell, h)
    if len(route) == 1:
        arm = geo.arms[a0]
        touts[a0] = max(0.0, (arm.link_length - veh.x_now) / arm.speed_limit)
    obj = s.w1 * touts[route[-1]]
    v0 = geo.arms[a0].speed_limit
    for i, a in enumerate(route[:-1]):
        hop_speed = max(c.speed for c in geo.connectors.values()
                        if c.from_arm == a and c.to_arm == route[i + 1])
        for t in range(s.T + 1):
            tdt = t * s.dt
            if tdt <= touts[a]:
                if a == a0 and not veh.in_connector:
                    obj += s.w2 * max(0.0, veh.x_now - v0 * tdt)
            else:
                obj += s.w2 * (-hop_speed * (tdt - touts[a]))
    return touts[route[-1]], obj


def solve_snapshot(snapshot, time_limit: float = 60.0) -> SnapshotResult:
    """Exact joint solve of one optimization instant.

    The arm-sequence space is tiny (simple paths between two arms), so it is
    enumerated here and each candidate assignment is solved as a MILP with
    the route variables pinned.  Candidates are visited in lower-bound order
    and the search stops as soon as the best remaining bound cannot beat the
    incumbent, which makes the result equal to the optimum of the full joint
    model.
    """
    from itertools import product

    from .builder import build_model, enumerate_routes, extract_plans

    t_start = time.perf_counter()
    h = snapshot.T * snapshot.dt
    per_veh = []
    for veh in snapshot.decision:
        routes = enumerate_routes(snapshot, veh)
        if not routes:
            return SnapshotResult("infeasible", None, [],
                                  time.perf_counter() - t_start,
                                  message=f"vehicle {veh.id}: no route")
        scored = []
        for r in routes:
            t_dest, obj_lb = _route_bound(snapshot, veh, r)
            scored.append((obj_lb, t_dest, r))
        scored.sort(key=lambda s: (s[0], s[2]))
        per_veh.append(scored)

    combos = sorted(product(*per_veh),
                    key=lambda c: sum(s[0] for s in c))
    best: Solution | None = None
    best_plans = []
    n_leaves = 0
    timed_out = False
    for combo in combos:
        bound = sum(s[0] for s in combo)
        if best is not None and bound >= best.objective_value - 1e-9:
            break
        if any(s[1] > h + 1e-9 for s in combo):
            continue  # cannot leave within the horizon on this route
        decision = [replace(veh, fixed_route=s[2])
                    for veh, s in zip(snapshot.decision, combo)]
        leaf = replace(snapshot, decision=decision)
        model, ctx = build_model(leaf)
        remaining = time_limit - (time.perf_counter() - t_start)
        if remaining <= 0.5:
            timed_out = True
            break
        sol = solve(model, time_limit=remaining)
        n_leaves += 1
        if sol.status == "time_limit":
            timed_out = True
        if sol.ok and (best is None or sol.objective_value < best.objective_value):
            best = sol
            best_plans = extract_plans(ctx, sol.values)
    elapsed = time.perf_counter() - t_start
    if best is None:
        status = "time_limit" if timed_out else "infeasible"
        return SnapshotResult(status, None, [], elapsed, n_leaves)
    return SnapshotResult("optimal", best.objective_value, best_plans, elapsed,
                          n_leaves)
