"""Closed-form reference optima for small instances.

For one or two vehicles on direct routes the optimization problem has a
closed-form solution: each vehicle drives at the link speed limit to the
stop bar, waits there if a safety rule forces it to, leaves at the earliest
feasible moment and proceeds at the connector speed.  These references are
computed here from first principles (geometry + safety rules only), with
none of the optimization model's code involved, so they can pin down the
solver's answers in tests.

The formulas assume a grid-aligned start: the initial position must be an
integer number of per-step displacements from the stop bar.  Off-grid
starts make the earliest leaving time depend on discretization details and
are rejected.

A caveat on routes: the objective's progress term keeps accruing (as a
negative, rewarded quantity) on every visited arm after the vehicle leaves
it.  Close to the stop bar this can make a multi-arm detour with a
turn-around strictly better than the direct movement, because each extra
arm visited farms additional progress reward for the rest of the horizon.
The closed forms here cover direct routes only, so every optimum is
guarded by a dominance certificate: a sound lower bound on the objective
of every detour route.  If some detour cannot be ruled out the functions
raise OracleAmbiguous instead of returning a possibly-wrong value.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

from .geometry import ConnKey, IntersectionGeometry


@dataclass(frozen=True)
class OracleVehicle:
    a0: int
    a_out: int
    x_now: float          # distance to the stop bar at step 0, m
    lanes: tuple[int, ...]   # leave lanes the vehicle may use


@dataclass(frozen=True)
class OracleResult:
    objective: float
    t_out: tuple[float, ...]      # stop-bar leaving time per vehicle, s
    t_dest: tuple[float, ...]     # destination clearing time per vehicle, s
    hops: tuple[ConnKey, ...]     # connector chosen per vehicle


def _check_grid(x_now: float, v: float, dt: float) -> None:
    steps = x_now / (v * dt)
    if abs(steps - round(steps)) > 1e-9:
        raise ValueError(
            f"start {x_now} m is not a whole number of steps from the stop "
            f"bar at {v} m/s, {dt} s; the reference optimum is only exact "
            "for grid-aligned starts")


def progress_sum(x_now: float, v_link: float, v_conn: float, t_out: float,
                 T: int, dt: float) -> float:
    """Sum over grid steps 0..T of the distance to the stop bar for the
    lowest feasible trajectory: full speed to the bar, wait there, leave at
    t_out, then recede at the connector speed (negative past the bar)."""
    if t_out < x_now / v_link - 1e-9:
        raise ValueError("leaving time earlier than the free-flow minimum")
    total = 0.0
    for t in range(T + 1):
        td = t * dt
        if td <= t_out + 1e-12:
            total += max(x_now - v_link * td, 0.0)
        else:
            total += -v_conn * (td - t_out)
    return total


class OracleAmbiguous(ValueError):
    """A detour route could tie or beat the direct closed form."""


def _detour_routes(geo: IntersectionGeometry, a0: int, a_out: int):
    others = [a for a in geo.arms if a not in (a0, a_out)]
    for n in (1, 2):
        for mids in itertools.permutations(others, n):
            yield (a0, *mids, a_out)


def _detour_objective_bound(geo: IntersectionGeometry, veh: OracleVehicle,
                            route: tuple[int, ...], T: int, dt: float,
                            w1: float, w2: float, T_turn: int) -> float:
    """Sound lower bound on the objective of one detour route.

    Earliest-possible chain: free flow to the bar, fastest connector
    between consecutive arms, and at least a (T_turn + 1)-step dwell on
    each intermediate arm for the mandatory turn-around.  The progress
    term is bounded below by receding at the fastest outgoing connector
    speed from the earliest possible leave time of each arm."""
    h = T * dt
    v0 = geo.arms[route[0]].speed_limit
    t_out = {route[0]: veh.x_now / v0}
    t_dest = None
    for i in range(1, len(route)):
        prev, arm = route[i - 1], route[i]
        tin = t_out[prev] + geo.min_connector_time(prev, arm)
        if arm == route[-1]:
            t_dest = tin + geo.arms[arm].link_length / geo.arms[arm].speed_limit
        else:
            t_out[arm] = tin + (T_turn + 1) * dt
    assert t_dest is not None
    if t_dest > h + 1e-9:
        return math.inf        # cannot finish within the horizon
    bound = w1 * t_dest
    for arm in route[:-1]:
        v_fast = max(c.speed for c in geo.connectors.values()
                     if c.from_arm == arm)
        x0 = veh.x_now if arm == route[0] else 0.0
        bound += w2 * progress_sum(x0, geo.arms[arm].speed_limit, v_fast,
                                   t_out[arm], T, dt)
    return bound


def _best_detour_bound(geo: IntersectionGeometry, veh: OracleVehicle,
                       T: int, dt: float, w1: float, w2: float,
                       T_turn: int) -> float:
    return min((_detour_objective_bound(geo, veh, r, T, dt, w1, w2, T_turn)
                for r in _detour_routes(geo, veh.a0, veh.a_out)),
               default=math.inf)


def _vehicle_cost(geo: IntersectionGeometry, veh: OracleVehicle,
                  conn, t_out: float, T: int, dt: float,
                  w1: float, w2: float) -> tuple[float, float]:
    """(objective contribution, destination clearing time) for one vehicle
    leaving its origin at t_out through the given connector."""
    dest = geo.arms[veh.a_out]
    t_dest = t_out + conn.travel_time + dest.link_length / dest.speed_limit
    xsum = progress_sum(veh.x_now, geo.arms[veh.a0].speed_limit, conn.speed,
                        t_out, T, dt)
    return w1 * t_dest + w2 * xsum, t_dest


def single_vehicle_optimum(geo: IntersectionGeometry, veh: OracleVehicle,
                           T: int, dt: float, w1: float, w2: float,
                           T_turn: int = 4, certify: bool = True
                           ) -> OracleResult:
    """Exact optimum for one vehicle: free flow on the best direct
    connector.  Detour routes cost at least one extra intersection pass and
    are dominated, so only direct connectors are considered."""
    v = geo.arms[veh.a0].speed_limit
    _check_grid(veh.x_now, v, dt)
    t_out = veh.x_now / v
    best = None
    for k in veh.lanes:
        conn = geo.connector(veh.a0, k, veh.a_out)
        if conn is None:
            continue
        obj, t_dest = _vehicle_cost(geo, veh, conn, t_out, T, dt, w1, w2)
        if best is None or obj < best.objective - 1e-9:
            best = OracleResult(obj, (t_out,), (t_dest,), (conn.key,))
    if best is None:
        raise ValueError(f"no connector from arm {veh.a0} to {veh.a_out}")
    if certify:
        detour = _best_detour_bound(geo, veh, T, dt, w1, w2, T_turn)
        if detour <= best.objective + 1e-6:
            raise OracleAmbiguous(
                f"vehicle {veh.a0}->{veh.a_out} at {veh.x_now} m: a detour "
                f"route bound ({detour:.3f}) is not dominated by the direct "
                f"optimum ({best.objective:.3f})")
    return best


def _follower_t_out(geo: IntersectionGeometry, lead_conn, follow_conn,
                    t_out_lead: float, free: float, tau: float) -> float:
    """Earliest leaving time for the second vehicle given the first one's
    schedule: conflict points, head-on exclusion and stop-bar headway."""
    t = free
    if geo.is_reverse_pair(lead_conn.key, follow_conn.key):
        t = max(t, t_out_lead + lead_conn.travel_time + tau)
    for pt in geo.conflicts_between(lead_conn.key, follow_conn.key):
        pass_lead = t_out_lead + pt.dist_a / lead_conn.speed
        t = max(t, pass_lead + tau - pt.dist_b / follow_conn.speed)
    same_bar = (lead_conn.from_arm == follow_conn.from_arm
                and lead_conn.from_lane == follow_conn.from_lane)
    if same_bar:
        t = max(t, t_out_lead + tau)
    return t


def two_vehicle_optimum(geo: IntersectionGeometry,
                        v1: OracleVehicle, v2: OracleVehicle,
                        T: int, dt: float, w1: float, w2: float,
                        tau: float, T_turn: int = 4,
                        certify: bool = True) -> OracleResult:
    """Exact optimum for two vehicles on direct routes: the leader runs
    free flow, the follower leaves at the earliest time every pairwise
    safety rule allows; all lane choices and both orders are enumerated.

    Vehicles sharing an origin arm are assumed to approach in different
    lanes (always possible here), so only stop-bar headway, conflict points
    and head-on exclusion can delay the follower."""
    vehicles = (v1, v2)
    free = []
    for veh in vehicles:
        v = geo.arms[veh.a0].speed_limit
        _check_grid(veh.x_now, v, dt)
        free.append(veh.x_now / v)
    best: OracleResult | None = None
    conns = [
        [c for c in (geo.connector(veh.a0, k, veh.a_out) for k in veh.lanes)
         if c is not None]
        for veh in vehicles
    ]
    if not conns[0] or not conns[1]:
        raise ValueError("a vehicle has no direct connector")
    for c1, c2 in itertools.product(*conns):
        for lead, follow in ((0, 1), (1, 0)):
            cl, cf = (c1, c2) if lead == 0 else (c2, c1)
            t_lead = free[lead]
            t_follow = _follower_t_out(geo, cl, cf, t_lead, free[follow], tau)
            obj_l, dest_l = _vehicle_cost(geo, vehicles[lead], cl, t_lead,
                                          T, dt, w1, w2)
            obj_f, dest_f = _vehicle_cost(geo, vehicles[follow], cf, t_follow,
                                          T, dt, w1, w2)
            t_out = [0.0, 0.0]
            t_dest = [0.0, 0.0]
            hops: list[ConnKey] = [c1.key, c2.key]
            t_out[lead], t_out[follow] = t_lead, t_follow
            t_dest[lead], t_dest[follow] = dest_l, dest_f
            obj = obj_l + obj_f
            if best is None or obj < best.objective - 1e-9:
                best = OracleResult(obj, tuple(t_out), tuple(t_dest),
                                    tuple(hops))
    assert best is not None
    if certify:
        # a joint solution where vehicle i detours costs at least that
        # vehicle's detour bound plus the other's unconstrained optimum
        singles = [
            single_vehicle_optimum(geo, veh, T, dt, w1, w2,
                                   T_turn=T_turn, certify=False).objective
            for veh in vehicles
        ]
        for i, veh in enumerate(vehicles):
            other_share = min(
                singles[1 - i],
                _best_detour_bound(geo, vehicles[1 - i], T, dt, w1, w2,
                                   T_turn))
            detour = _best_detour_bound(geo, veh, T, dt, w1, w2, T_turn)
            if detour + other_share <= best.objective + 1e-6:
                raise OracleAmbiguous(
                    f"pair {veh.a0}->{veh.a_out} at {veh.x_now} m: a "
                    f"detour route is not dominated "
                    f"({detour + other_share:.3f} vs {best.objective:.3f})")
    return best


def free_flow_objective(geo: IntersectionGeometry, veh: OracleVehicle,
                        T: int, dt: float, w1: float, w2: float) -> float:
    """Objective of the unconstrained single-vehicle direct-route optimum
    (lower bound for any direct-route instance containing this vehicle)."""
    return single_vehicle_optimum(geo, veh, T, dt, w1, w2,
                                  certify=False).objective


