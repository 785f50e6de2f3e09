"""Closed-form reference optima: internal arithmetic and agreement with the
MILP on frozen cases."""

from __future__ import annotations

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lafsim.oracle import (
    OracleVehicle, free_flow_objective, progress_sum, single_vehicle_optimum,
    two_vehicle_optimum,
)

from conftest import DT, T, TAU, W1, W2


def brute_progress_sum(x_now, v_link, v_conn, t_out, T_steps, dt):
    total = 0.0
    for t in range(T_steps + 1):
        td = t * dt
        if td <= t_out + 1e-12:
            total += max(x_now - v_link * td, 0.0)
        else:
            total += -v_conn * (td - t_out)
    return total


@given(
    steps_away=st.integers(min_value=0, max_value=10),
    wait=st.floats(min_value=0.0, max_value=10.0),
    v_conn=st.sampled_from([6.0, 8.0, 10.0]),
)
@settings(max_examples=200, deadline=None)
def test_progress_sum_matches_direct_summation(steps_away, wait, v_conn):
    x_now = steps_away * 10.0 * DT
    t_out = x_now / 10.0 + wait
    got = progress_sum(x_now, 10.0, v_conn, t_out, T, DT)
    want = brute_progress_sum(x_now, 10.0, v_conn, t_out, T, DT)
    assert got == pytest.approx(want, abs=1e-9)


def test_progress_sum_rejects_early_leave():
    with pytest.raises(ValueError):
        progress_sum(50.0, 10.0, 10.0, 4.0, T, DT)


def test_single_vehicle_closed_form(geo):
    veh = OracleVehicle(a0=1, a_out=3, x_now=50.0, lanes=(1, 2, 3, 4))
    res = single_vehicle_optimum(geo, veh, T, DT, W1, W2)
    # leaves at 5.0 s, crosses the 2.0 s connector, clears 50 m at 10 m/s
    assert res.t_out == (5.0,)
    assert res.t_dest[0] == pytest.approx(12.0)
    # progress reward: 275 on the way in, -1050 receding past the bar
    assert res.objective == pytest.approx(W1 * 12.0 + W2 * (275.0 - 1050.0))
    assert res.objective == pytest.approx(2825.0)


def test_grid_misalignment_rejected(geo):
    veh = OracleVehicle(a0=1, a_out=3, x_now=47.3, lanes=(2,))
    with pytest.raises(ValueError):
        single_vehicle_optimum(geo, veh, T, DT, W1, W2)


def test_crossing_pair_closed_form(geo):
    v1 = OracleVehicle(a0=1, a_out=3, x_now=50.0, lanes=(1, 2, 3, 4))
    v2 = OracleVehicle(a0=2, a_out=4, x_now=50.0, lanes=(1, 2, 3, 4))
    res = two_vehicle_optimum(geo, v1, v2, T, DT, W1, W2, TAU)
    assert res.objective == pytest.approx(5875.0)
    assert sorted(res.t_out) == pytest.approx([5.0, 5.45])


def test_same_arm_pair_closed_form(geo):
    v1 = OracleVehicle(a0=1, a_out=3, x_now=50.0, lanes=(1, 2, 3, 4))
    v2 = OracleVehicle(a0=1, a_out=3, x_now=40.0, lanes=(1, 2, 3, 4))
    res = two_vehicle_optimum(geo, v1, v2, T, DT, W1, W2, TAU)
    # different lanes let both run free flow
    assert res.objective == pytest.approx(5040.0)
    assert sorted(res.t_out) == pytest.approx([4.0, 5.0])
    assert res.hops[0][1] != res.hops[1][1]


def test_pair_never_beats_free_flow_sum(geo):
    v1 = OracleVehicle(a0=1, a_out=3, x_now=50.0, lanes=(2,))
    v2 = OracleVehicle(a0=3, a_out=1, x_now=50.0, lanes=(3,))
    res = two_vehicle_optimum(geo, v1, v2, T, DT, W1, W2, TAU,
                              certify=False)
    bound = (free_flow_objective(geo, v1, T, DT, W1, W2)
             + free_flow_objective(geo, v2, T, DT, W1, W2))
    assert res.objective >= bound - 1e-9


def test_single_lane_restriction_matters(geo):
    # left turns (to arm 2 from arm 1) run the slower 8 m/s connector,
    # so the destination time grows by the connector-time difference
    left = single_vehicle_optimum(
        geo, OracleVehicle(1, 2, 50.0, (1, 2, 3, 4)), T, DT, W1, W2)
    thru = single_vehicle_optimum(
        geo, OracleVehicle(1, 3, 50.0, (1, 2, 3, 4)), T, DT, W1, W2)
    dt_conn = left.t_dest[0] - thru.t_dest[0]
    assert dt_conn == pytest.approx(
        geo.min_connector_time(1, 2) - geo.min_connector_time(1, 3), abs=1e-9)
