"""Independent plan verifier: clean plans pass, and each violation kind is
detected when a plan is perturbed in the corresponding way."""

from __future__ import annotations

import pytest

from lafsim.plan import TrajectoryPlan
from lafsim.verify import VerifyParams, verify

from conftest import D_GAP, DT, T_TURN, TAU, make_plan


def clone(plan: TrajectoryPlan) -> TrajectoryPlan:
    return TrajectoryPlan.from_dict(plan.to_dict())


def kinds(violations) -> set[str]:
    return {v.kind for v in violations}


# -- clean plans -------------------------------------------------------------------


def test_single_free_flow_plan_is_clean(geo, vparams):
    plan = make_plan(geo, 0, 1, 3, lane=2)
    assert verify([plan], geo, vparams) == []


def test_non_interacting_pair_is_clean(geo, vparams):
    p1 = make_plan(geo, 0, 1, 3, lane=2)
    p2 = make_plan(geo, 1, 1, 3, lane=3, t_out=8.0)
    assert verify([p1, p2], geo, vparams) == []


def test_solved_plans_are_clean(geo, vparams, solved_pair):
    _, res = solved_pair
    assert verify(list(res.plans), geo, vparams) == []


# -- worked pairwise examples ------------------------------------------------------


def test_spatial_gap_shortfall_has_exact_magnitude(geo, vparams):
    # co-lane followers 4.9 m apart: 0.1 m short of the 5 m bubble
    p1 = make_plan(geo, 0, 1, 3, lane=2, x_now=50.0)
    p2 = make_plan(geo, 1, 1, 3, lane=2, x_now=45.1)
    viols = verify([p1, p2], geo, vparams)
    spatial = [v for v in viols if v.kind == "spatial_gap"]
    assert spatial
    for v in spatial:
        assert v.magnitude == pytest.approx(0.1, abs=1e-9)


def test_temporal_gap_shortfall_has_exact_magnitude(geo, vparams):
    # same stop-bar lane, leave times 1.4 s apart against a 1.5 s headway
    p1 = make_plan(geo, 0, 1, 3, lane=2, x_now=36.0)   # leaves at 3.6 s
    p2 = make_plan(geo, 1, 1, 3, lane=2, x_now=50.0)   # leaves at 5.0 s
    viols = verify([p1, p2], geo, vparams)
    assert kinds(viols) == {"temporal_gap"}
    assert viols[0].magnitude == pytest.approx(0.1, abs=1e-9)


def test_conflict_point_too_close(geo, vparams):
    # two crossing through movements released simultaneously
    p1 = make_plan(geo, 0, 1, 3, lane=2)
    p2 = make_plan(geo, 1, 2, 4, lane=2)
    viols = verify([p1, p2], geo, vparams)
    assert "conflict_point" in kinds(viols)
    # delaying the second vehicle past the headway clears it
    p2b = make_plan(geo, 1, 2, 4, lane=2, t_out=5.0 + TAU + 0.5)
    assert verify([p1, p2b], geo, vparams) == []


def test_head_on_reverse_connectors(geo, vparams):
    p1 = make_plan(geo, 0, 1, 3, lane=2)
    conn = geo.connector(1, 2, 3)
    back = conn.reverse_key
    p2 = make_plan(geo, 1, back[0], back[2], lane=back[1])
    assert p2.hops[0] == back
    viols = verify([p1, p2], geo, vparams)
    assert "head_on" in kinds(viols)


# -- single-plan mutations ---------------------------------------------------------


def test_speed_violation_detected(geo, vparams):
    plan = clone(make_plan(geo, 0, 1, 3, lane=2))
    plan.arms[1].x[2] += 3.0  # teleports beyond v*dt between steps
    assert "speed" in kinds(verify([plan], geo, vparams))


def test_lane_jump_detected(geo, vparams):
    plan = clone(make_plan(geo, 0, 1, 3, lane=2))
    plan.arms[1].lanes[4] = (4,)  # lane 2 -> 4 skips lane 3
    assert "lane_jump" in kinds(verify([plan], geo, vparams))


def test_turnaround_pulse_spacing_detected(geo, vparams):
    plan = clone(make_plan(geo, 0, 1, 3, lane=2, t_out=10.0))
    plan.arms[1].ta_pulses = [2, 3]  # pulses closer than the T_turn dwell
    assert "turnaround" in kinds(verify([plan], geo, vparams))


def test_illegal_route_hop_detected(geo, vparams):
    plan = clone(make_plan(geo, 0, 1, 3, lane=2))
    plan.hops[0] = (1, 1, 3, 99)  # no such connector
    assert "route_illegal" in kinds(verify([plan], geo, vparams))


def test_wrong_exit_lane_detected(geo):
    params = VerifyParams(tau=TAU, d_gap=D_GAP, T_turn=T_TURN,
                          exit_lanes={3: (1, 2)})
    plan = make_plan(geo, 0, 1, 3, lane=1)   # exits arm 3 on lane 4
    assert plan.exit_lane == 4
    assert "exit_lane" in kinds(verify([plan], geo, params))


def test_connector_traversed_too_fast_detected(geo, vparams):
    plan = clone(make_plan(geo, 0, 1, 3, lane=2))
    plan.arms[3].t_enter -= 0.5  # connector crossed in 1.5 s instead of 2.0
    assert "route_illegal" in kinds(verify([plan], geo, vparams))


def test_violations_sorted_by_time(geo, vparams):
    p1 = make_plan(geo, 0, 1, 3, lane=2)
    p2 = make_plan(geo, 1, 2, 4, lane=2)
    p3 = clone(make_plan(geo, 2, 4, 2, lane=2, t_out=20.0))
    p3.arms[4].x[2] += 3.0
    viols = verify([p1, p2, p3], geo, vparams)
    assert len(viols) >= 2
    assert [v.time for v in viols] == sorted(v.time for v in viols)
