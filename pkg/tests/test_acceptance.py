"""End-to-end acceptance gate.

Each test exercises one documented guarantee of the controller at desk
scale: safety soundness, agreement with closed-form reference optima,
free-flow optimality, the routing-freedom delay advantage, throughput
conservation, sensitivity behaviour, horizon adaptation, verifier
mutation coverage, and the file-based solver handoff.

Simulation runs are cached per (mode, alpha, seed, duration, left-turn
ratio, tau) so criteria can share them.  The full module takes a few
hours of wall clock; every test can also be selected individually.
"""

from __future__ import annotations

import dataclasses
import random

import pytest
from scipy import stats

from lafsim.oracle import (
    OracleAmbiguous, OracleVehicle, single_vehicle_optimum,
    two_vehicle_optimum,
)
from lafsim.plan import TrajectoryPlan
from lafsim.scenario import (
    ALAF, LAF, Arrival, default_scenario, with_left_turn_ratio,
)
from lafsim.simulation import run_simulation
from lafsim.solver import solve, solve_snapshot, solve_via_file
from lafsim.builder import build_model
from lafsim.metrics import compute_metrics
from lafsim.verify import VerifyParams, verify

from conftest import (
    D_GAP, DT, T, T_TURN, TAU, W1, W2, make_plan, make_snapshot, make_vehicle,
)

ALL_LANES = (1, 2, 3, 4)
_CACHE: dict[tuple, object] = {}


def sim(mode=LAF, alpha=1.0, seed=1, duration=300, ratio=None, tau=None):
    key = (mode, alpha, seed, duration, ratio, tau)
    if key not in _CACHE:
        cfg = dataclasses.replace(
            default_scenario(), mode=mode, demand_factor=alpha, seed=seed,
            sim_duration=duration, time_limit=60.0)
        if ratio is not None:
            cfg = with_left_turn_ratio(cfg, ratio)
        if tau is not None:
            cfg = dataclasses.replace(cfg, tau=tau)
        _CACHE[key] = run_simulation(cfg)
    return _CACHE[key]


def vparams_for(cfg):
    return VerifyParams(
        tau=cfg.tau, d_gap=cfg.d_gap, T_turn=cfg.T_turn,
        exit_lanes={a: cfg.exit_lanes(a) for a in cfg.geometry.arms},
        approach_lanes={a: cfg.approach_lanes(a) for a in cfg.geometry.arms})


def mean_delay(mode, alpha, seeds, duration, ratio=None, tau=None):
    vals = []
    for seed in seeds:
        res = sim(mode, alpha, seed, duration, ratio, tau)
        assert not res.aborted, f"{mode} a={alpha} seed={seed}: {res.message}"
        vals.append(compute_metrics(res).mean_delay)
    return sum(vals) / len(vals)


# -- 1: safety soundness -----------------------------------------------------------


@pytest.mark.parametrize("alpha", [1.0, 2.0])
@pytest.mark.parametrize("seed", [1, 2, 3, 4, 5])
def test_all_committed_plans_verify_clean(alpha, seed):
    res = sim(LAF, alpha, seed, 300)
    assert not res.aborted, res.message
    cfg = res.config
    violations = verify(list(res.plans.values()), cfg.geometry,
                        vparams_for(cfg))
    assert violations == [], [str(v) for v in violations[:5]]


# -- 2: agreement with the closed-form reference -----------------------------------


def _random_vehicle(rng, used):
    while True:
        a0 = rng.randint(1, 4)
        a_out = rng.choice([a for a in (1, 2, 3, 4) if a != a0])
        steps = rng.randint(1, 10)
        x_now = steps * 5.0        # grid-aligned: v * dt = 5 m per step
        if (a0, x_now) not in used:
            used.add((a0, x_now))
            return OracleVehicle(a0=a0, a_out=a_out, x_now=x_now,
                                 lanes=ALL_LANES)


def test_single_vehicle_optima_match_reference(geo):
    # the reference refuses instances where it cannot prove the direct
    # route optimal (near the stop bar a detour can farm progress reward),
    # so sampling rejects those and keeps drawing
    rng = random.Random(42)
    checked = 0
    for _ in range(400):
        veh = _random_vehicle(rng, set())
        try:
            want = single_vehicle_optimum(geo, veh, T, DT, W1, W2,
                                          T_turn=T_TURN)
        except OracleAmbiguous:
            continue
        snap = make_snapshot(
            geo, [make_vehicle(0, veh.a0, veh.a_out, x_now=veh.x_now)])
        res = solve_snapshot(snap, time_limit=120)
        assert res.ok
        assert res.objective == pytest.approx(want.objective, rel=1e-6)
        checked += 1
        if checked == 35:
            break
    assert checked == 35


def test_pair_optima_match_reference(geo):
    rng = random.Random(43)
    checked = 0
    for _ in range(400):
        used: set = set()
        v1 = _random_vehicle(rng, used)
        v2 = _random_vehicle(rng, used)
        try:
            want = two_vehicle_optimum(geo, v1, v2, T, DT, W1, W2, TAU,
                                       T_turn=T_TURN)
        except OracleAmbiguous:
            continue
        snap = make_snapshot(geo, [
            make_vehicle(0, v1.a0, v1.a_out, x_now=v1.x_now, lane=2),
            make_vehicle(1, v2.a0, v2.a_out, x_now=v2.x_now,
                         lane=3 if v2.a0 == v1.a0 else 2)])
        res = solve_snapshot(snap, time_limit=240)
        assert res.ok
        assert abs(res.objective - want.objective) <= W1 * DT + 1e-6
        checked += 1
        if checked == 15:
            break
    assert checked == 15


# -- 3: free-flow optimality per movement ------------------------------------------


def test_unobstructed_delay_below_one_step(geo, cfg):
    for o in geo.arms:
        for d in geo.arms:
            if o == d:
                continue
            snap = make_snapshot(geo, [make_vehicle(0, o, d)])
            res = solve_snapshot(snap, time_limit=120)
            assert res.ok
            ideal = cfg.free_flow_time(o, d) + cfg.exit_link_time(d)
            delay = res.plans[0].depart_time - snap.t0 - ideal
            assert -1e-6 <= delay < 0.5, f"movement {o}->{d}: {delay:.3f}s"


# -- 4: routing freedom cuts delay -------------------------------------------------


def test_laf_beats_alaf_and_ratio_band():
    seeds = [1, 2, 3, 4, 5]
    laf = mean_delay(LAF, 1.0, seeds, 600)
    alaf = mean_delay(ALAF, 1.0, seeds, 600)
    assert laf < alaf
    # documented target: about one third of the fixed-exit-lane delay,
    # accepted up to a 50% relative band
    assert laf <= 0.5 * alaf, f"laf={laf:.3f} alaf={alaf:.3f}"


# -- 5: throughput tracks admitted demand ------------------------------------------


@pytest.mark.parametrize("mode", [LAF, ALAF])
@pytest.mark.parametrize("alpha", [1.0, 2.0])
def test_throughput_matches_admitted_demand(mode, alpha):
    for seed in (1, 2, 3):
        res = sim(mode, alpha, seed, 300)
        assert not res.aborted, res.message
        cfg = res.config
        m = compute_metrics(res)
        n_demand = sum(1 for r in res.records.values()
                       if r.arrival.time >= cfg.warmup)
        demand_rate = 3600.0 * n_demand / (cfg.sim_duration - cfg.warmup)
        assert m.throughput == pytest.approx(demand_rate, rel=0.10)


# -- 6: left-turn ratio sensitivity ------------------------------------------------


RATIOS = (0.10, 0.25, 0.40)


def test_left_turn_ratio_insensitivity_with_free_routing():
    seeds = [1, 2, 3, 4, 5]
    delays = [mean_delay(LAF, 1.0, seeds, 300, ratio=r) for r in RATIOS]
    assert max(delays) - min(delays) < 0.5, delays


def test_left_turn_ratio_hurts_fixed_exit_lanes():
    seeds = [1, 2, 3, 4, 5]
    delays = [mean_delay(ALAF, 1.0, seeds, 300, ratio=r) for r in RATIOS]
    rho, _ = stats.spearmanr(RATIOS, delays)
    assert rho > 0, delays


# -- 7: temporal gap monotonicity --------------------------------------------------


TAUS = (0.5, 1.0, 1.5, 2.0, 2.5)


def test_delay_non_decreasing_in_temporal_gap():
    seeds = [1, 2, 3]
    curves = {}
    for mode in (LAF, ALAF):
        curves[mode] = [mean_delay(mode, 1.0, seeds, 300, tau=t)
                        for t in TAUS]
        for lo, hi in zip(curves[mode], curves[mode][1:]):
            assert hi >= lo - 1e-9, (mode, curves[mode])
    for laf_d, alaf_d in zip(curves[LAF], curves[ALAF]):
        assert laf_d <= alaf_d + 1e-9, curves


# -- 8: adaptive horizon -----------------------------------------------------------


def test_small_horizon_recovers_within_five_inflations():
    cfg = dataclasses.replace(default_scenario(), T0=10, sim_duration=30,
                              warmup=0, seed=1, time_limit=120.0)
    res = run_simulation(cfg, arrivals=[Arrival(0, 0.0, 1, 3, 2)])
    assert not res.aborted, res.message
    assert res.records[0].finished
    inflations = [e for e in res.events if e["kind"] == "inflate"]
    assert 1 <= len(inflations) <= 5


def test_horizon_never_shrinks_below_active_departures():
    res = sim(LAF, 1.0, 1, 300)
    assert not res.aborted
    cfg = res.config
    for t_solve, T_steps in res.horizon_history:
        latest = max((p.depart_time for p in res.plans.values()
                      if p.arrival_time <= t_solve < p.depart_time),
                     default=None)
        if latest is not None:
            assert T_steps * cfg.dt >= latest - t_solve - 1e-6


# -- 9: verifier mutation coverage -------------------------------------------------


def _clone(plan: TrajectoryPlan) -> TrajectoryPlan:
    return TrajectoryPlan.from_dict(plan.to_dict())


def test_every_constraint_family_mutation_is_detected(geo, vparams,
                                                      solved_pair):
    _, res = solved_pair
    crossing = [_clone(p) for p in res.plans]
    assert verify(crossing, geo, vparams) == []
    detected: dict[str, bool] = {}

    def check(family, plans, kind, params=vparams):
        detected[family] = kind in {v.kind for v in verify(plans, geo, params)}

    # route: pick a connector that does not exist
    p = _clone(crossing[0]); p.hops[0] = (1, 1, 3, 99)
    check("route", [p], "route_illegal")
    # transition: hop that does not match the arm sequence
    p = _clone(crossing[0]); p.hops[0] = geo.connector(2, 2, 3).key
    check("transition", [p], "route_illegal")
    # lane: discontiguous lane set inside the link
    p = _clone(crossing[0])
    arm0 = p.route[0]
    p.arms[arm0].lanes[3] = (1 if p.arms[arm0].lanes[3][0] >= 3 else 4,)
    check("lane", [p], "lane_jump")
    # no_lane_change: lane changes after committing to the stop-bar lane
    p = _clone(crossing[0])
    last = len(p.arms[arm0].lanes) - 1
    p.arms[arm0].lanes[last] = (p.arms[arm0].leave_lane % 4 + 1,)
    check("no_lane_change", [p], "lane_jump")
    # motion: faster than the speed limit between two steps
    p = _clone(crossing[0]); p.arms[arm0].x[2] += 6.0
    check("motion", [p], "speed")
    # boundary: ends on a lane that is not an exit lane
    restricted = VerifyParams(tau=TAU, d_gap=D_GAP, T_turn=T_TURN,
                              exit_lanes={a: (1, 2) for a in geo.arms})
    p = make_plan(geo, 0, 1, 3, lane=1)   # exits on lane 4
    check("boundary", [p], "exit_lane", params=restricted)
    # spatial: squeeze a follower into the leader's bubble
    p1 = make_plan(geo, 0, 1, 3, lane=2)
    p2 = make_plan(geo, 1, 1, 3, lane=2, x_now=45.5)
    check("spatial", [p1, p2], "spatial_gap")
    # temporal: leave times closer than the headway on one stop-bar lane
    p1 = make_plan(geo, 0, 1, 3, lane=2, x_now=35.0)
    p2 = make_plan(geo, 1, 1, 3, lane=2, x_now=45.0)
    check("temporal", [p1, p2], "temporal_gap")
    # conflict: simultaneous release through crossing connectors
    p1 = make_plan(geo, 0, 1, 3, lane=2)
    p2 = make_plan(geo, 1, 2, 4, lane=2)
    check("conflict", [p1, p2], "conflict_point")
    # domain: connector traversal time physically impossible
    p = _clone(crossing[0]); p.arms[p.route[1]].t_enter -= 0.7
    check("domain", [p], "route_illegal")

    missed = [fam for fam, ok in detected.items() if not ok]
    assert len(detected) == 10 and not missed, missed


# -- 10: file handoff round trip ---------------------------------------------------


def test_lp_file_solve_matches_in_process(geo, tmp_path):
    snap = make_snapshot(geo, [make_vehicle(0, 1, 3, fixed_route=(1, 3))],
                         T=24)
    model, _ = build_model(snap)
    direct = solve(model, time_limit=120)
    model2, _ = build_model(snap)
    via_file = solve_via_file(model2, time_limit=120, workdir=str(tmp_path))
    assert direct.status == via_file.status == "optimal"
    assert via_file.objective_value == pytest.approx(
        direct.objective_value, abs=1e-6)
