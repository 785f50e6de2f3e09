import math

import pytest

from lafsim.builder import LAF, Snapshot, VehicleSnapshot
from lafsim.geometry import default_intersection
from lafsim.plan import ArmPassage, TrajectoryPlan
from lafsim.scenario import default_scenario
from lafsim.solver import solve_snapshot
from lafsim.verify import VerifyParams

DT = 0.5
T = 30
W1 = 300.0
W2 = 1.0
TAU = 1.5
D_GAP = 5.0
T_TURN = 4


@pytest.fixture(scope="session")
def geo():
    return default_intersection()


@pytest.fixture()
def cfg():
    return default_scenario()


@pytest.fixture(scope="session")
def vparams():
    return VerifyParams(tau=TAU, d_gap=D_GAP, T_turn=T_TURN)


def make_snapshot(geo, vehicles, t0=0.0, T=T, mode=LAF, frozen=(), **kw):
    return Snapshot(geometry=geo, t0=t0, dt=DT, T=T, tau=TAU, d_gap=D_GAP,
                    T_turn=T_TURN, w1=W1, w2=W2, mode=mode,
                    decision=list(vehicles), frozen=list(frozen), **kw)


def make_vehicle(vid, a0, a_out, x_now=50.0, lane=2, t_enter=0.0, **kw):
    return VehicleSnapshot(id=vid, a0=a0, a_out=a_out, x_now=x_now,
                           lane_now=lane, dir_now=0, t_enter_link=t_enter,
                           arrival_time=t_enter, **kw)


def make_plan(geo, vid, a0, a_out, lane, *, x_now=50.0, t_out=None,
              t0=0.0, horizon=T, dt=DT):
    """Analytic direct-route plan: full speed to the stop bar, wait until
    t_out (relative seconds; default free flow), cross, clear the exit
    link.  Mirrors the trajectory a solver would commit, built without any
    solver code so tests can fabricate exact scenarios."""
    arm_o = geo.arms[a0]
    arm_d = geo.arms[a_out]
    v = arm_o.speed_limit
    conn = geo.connector(a0, lane, a_out)
    assert conn is not None, f"no connector {a0}->{a_out} from lane {lane}"
    free = x_now / v
    if t_out is None:
        t_out = free
    assert t_out >= free - 1e-9
    t_in_d = t_out + conn.travel_time
    t_dest = t_in_d + arm_d.link_length / arm_d.speed_limit
    k2 = conn.to_lane

    x_o, x_d, lanes_o, lanes_d = [], [], [], []
    for t in range(horizon + 1):
        td = t * dt
        if td <= t_out + 1e-12:
            x_o.append(max(x_now - v * td, 0.0))
        else:
            x_o.append(-conn.speed * (td - t_out))
        lanes_o.append((lane,))
        if td >= t_in_d - 1e-12:
            x_d.append(arm_d.speed_limit * (td - t_in_d))
            lanes_d.append((k2,))
        else:
            x_d.append(0.0)
            lanes_d.append(())

    origin = ArmPassage(
        arm=a0, t_enter=t0 - (arm_o.link_length - x_now) / v,
        t_leave=t0 + t_out, is_destination=False, x=x_o,
        lanes=lanes_o, dir=[0] * (horizon + 1), leave_lane=lane,
        conn_speed=conn.speed)
    dest = ArmPassage(
        arm=a_out, t_enter=t0 + t_in_d, t_leave=t0 + t_dest,
        is_destination=True, x=x_d, lanes=lanes_d,
        dir=[1] * (horizon + 1), leave_lane=None)
    obj = W1 * t_dest + W2 * sum(x_o)
    return TrajectoryPlan(
        vehicle_id=vid, t0=t0, dt=dt, horizon=horizon, route=[a0, a_out],
        hops=[conn.key], arms={a0: origin, a_out: dest}, a_out=a_out,
        exit_lane=k2, arrival_time=t0, objective=obj)


@pytest.fixture(scope="session")
def solved_single(geo):
    """One free vehicle 1->3, solved to optimality (shared: solves once)."""
    snap = make_snapshot(geo, [make_vehicle(0, 1, 3)])
    res = solve_snapshot(snap, time_limit=120)
    assert res.status == "optimal"
    return snap, res


@pytest.fixture(scope="session")
def solved_pair(geo):
    """Two crossing vehicles (1->3, 2->4), solved to optimality."""
    snap = make_snapshot(geo, [make_vehicle(0, 1, 3),
                               make_vehicle(1, 2, 4)])
    res = solve_snapshot(snap, time_limit=240)
    assert res.status == "optimal"
    return snap, res
