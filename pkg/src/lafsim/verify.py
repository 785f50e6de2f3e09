"""Independent safety and consistency checks on committed trajectories.

The checks re-derive every safety rule directly from the geometry and the
physical plan data (positions, lanes, times), without reusing any of the
optimization model's machinery, so a bug in the model formulation cannot
hide a violation here.

Check kinds:
  speed          per-step displacement exceeds the speed limit
  lane_jump      occupied lanes change illegally between steps
  turnaround     malformed turn-around (window, direction, lane pair)
  route_illegal  route uses a missing connector or inconsistent lanes
  exit_lane      destination is left from a lane not allowed to exit
  spatial_gap    same-lane spacing inside a link below the minimum
  temporal_gap   stop-bar departures from one lane too close in time
  conflict_point crossing connector paths passed too close in time
  head_on        opposite traversals of one connector path overlap
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

from .geometry import IntersectionGeometry
from .plan import TrajectoryPlan

EPS = 1e-6          # boundary tolerance on in-link membership
NUM_TOL = 1e-6      # numerical slack on all inequality checks
MIN_MOVE = 1e-2 - NUM_TOL   # smallest displacement that permits a lane change


@dataclass(frozen=True)
class Violation:
    kind: str
    vehicles: tuple[int, ...]
    time: float
    arm: int | None
    detail: str
    magnitude: float = 0.0

    def __str__(self):
        who = "/".join(str(v) for v in self.vehicles)
        return f"[{self.kind}] veh {who} t={self.time:.3f} arm={self.arm}: {self.detail}"


@dataclass
class VerifyParams:
    tau: float
    d_gap: float
    T_turn: int
    exit_lanes: dict[int, tuple[int, ...]] = field(default_factory=dict)
    approach_lanes: dict[int, tuple[int, ...]] = field(default_factory=dict)


def _steps(plan: TrajectoryPlan):
    return range(plan.horizon + 1)


def _in_link(plan: TrajectoryPlan, arm: int, step: int) -> bool:
    return plan.in_link(arm, plan.time_of(step), eps=EPS)


# ---------------------------------------------------------------------------
# single-plan checks


def check_route(plan: TrajectoryPlan, geo: IntersectionGeometry,
                params: VerifyParams) -> list[Violation]:
    out = []
    v = (plan.vehicle_id,)
    if len(plan.hops) != len(plan.route) - 1:
        out.append(Violation("route_illegal", v, plan.t0, None,
                             f"{len(plan.hops)} hops for {len(plan.route)} arms"))
        return out
    if len(set(plan.route)) != len(plan.route):
        out.append(Violation("route_illegal", v, plan.t0, None,
                             f"route revisits an arm: {plan.route}"))
    if plan.route[-1] != plan.a_out:
        out.append(Violation("route_illegal", v, plan.t0, None,
                             f"route ends at {plan.route[-1]}, not {plan.a_out}"))
    for (a1, a2), key in zip(itertools.pairwise(plan.route), plan.hops):
        conn = geo.connectors.get(key)
        p1, p2 = plan.arms[a1], plan.arms[a2]
        if conn is None or (key[0], key[2]) != (a1, a2):
            out.append(Violation("route_illegal", v, p1.t_leave, a1,
                                 f"hop {key} does not connect {a1}->{a2}"))
            continue
        if p1.leave_lane != key[1]:
            out.append(Violation("route_illegal", v, p1.t_leave, a1,
                                 f"leaves in lane {p1.leave_lane}, hop uses {key[1]}"))
        gap = p2.t_enter - p1.t_leave - conn.travel_time
        if abs(gap) > 1e-4:
            out.append(Violation("route_illegal", v, p1.t_leave, a1,
                                 f"connector time off by {gap:.4f}s", abs(gap)))
        # at the first grid step at or after entry the vehicle must sit in
        # the connector's end lane (it may change lanes afterwards)
        step_in = math.ceil((p2.t_enter - plan.t0) / plan.dt - 1e-9)
        if 0 <= step_in <= plan.horizon and \
                key[3] not in plan.arms[a2].lanes[step_in]:
            out.append(Violation("route_illegal", v, p2.t_enter, a2,
                                 f"in lanes {plan.arms[a2].lanes[step_in]} at "
                                 f"entry, connector ends in {key[3]}"))
    exit_ok = params.exit_lanes.get(plan.a_out)
    if exit_ok is not None and plan.exit_lane not in exit_ok:
        out.append(Violation("exit_lane", v, plan.depart_time, plan.a_out,
                             f"exits in lane {plan.exit_lane}, allowed {exit_ok}"))
    return out


def check_motion(plan: TrajectoryPlan, geo: IntersectionGeometry,
                 params: VerifyParams) -> list[Violation]:
    out = []
    v = (plan.vehicle_id,)
    for arm in plan.route:
        p = plan.arms[arm]
        limit = geo.arms[arm].speed_limit * plan.dt
        for t in range(plan.horizon):
            if not (_in_link(plan, arm, t) and _in_link(plan, arm, t + 1)):
                continue
            move = abs(p.x[t + 1] - p.x[t])
            if move > limit + NUM_TOL:
                out.append(Violation("speed", v, plan.time_of(t), arm,
                                     f"|dx|={move:.3f} > {limit:.3f}",
                                     move - limit))
    return out


def check_lanes(plan: TrajectoryPlan, geo: IntersectionGeometry,
                params: VerifyParams) -> list[Violation]:
    out = []
    v = (plan.vehicle_id,)
    for arm in plan.route:
        p = plan.arms[arm]
        window = set()
        for pulse in p.ta_pulses:
            window.update(range(pulse, pulse + params.T_turn + 1))
        for t in _steps(plan):
            if not _in_link(plan, arm, t):
                continue
            occ = p.lanes[t]
            if len(occ) not in (1, 2):
                out.append(Violation("lane_jump", v, plan.time_of(t), arm,
                                     f"occupies {len(occ)} lanes"))
            if len(occ) == 2 and abs(occ[0] - occ[1]) != 1:
                out.append(Violation("lane_jump", v, plan.time_of(t), arm,
                                     f"occupies non-adjacent lanes {occ}"))
            if len(occ) == 2 and t not in window and (t - 1) not in window:
                out.append(Violation("turnaround", v, plan.time_of(t), arm,
                                     f"two lanes {occ} outside a turn-around"))
        for t in range(plan.horizon):
            if not (_in_link(plan, arm, t) and _in_link(plan, arm, t + 1)):
                continue
            l0, l1 = set(p.lanes[t]), set(p.lanes[t + 1])
            if not l0 or not l1:
                continue
            if max(abs(a - b) for a in l0 for b in l1) > 1:
                out.append(Violation("lane_jump", v, plan.time_of(t), arm,
                                     f"lanes {sorted(l0)} -> {sorted(l1)}"))
            moved = abs(p.x[t + 1] - p.x[t])
            in_window = t in window or (t + 1) in window
            if l0 != l1 and moved < MIN_MOVE and not in_window:
                out.append(Violation("lane_jump", v, plan.time_of(t), arm,
                                     f"lane change {sorted(l0)}->{sorted(l1)} "
                                     f"while moving {moved:.4f}m"))
        # lanes are frozen once the vehicle has left the link
        if p.leave_lane is not None:
            for t in _steps(plan):
                if plan.time_of(t) <= p.t_leave + EPS:
                    continue
                if p.lanes[t] != (p.leave_lane,):
                    out.append(Violation("lane_jump", v, plan.time_of(t), arm,
                                         f"lanes {p.lanes[t]} after leaving "
                                         f"in lane {p.leave_lane}"))
                    break
    return out


def check_turnarounds(plan: TrajectoryPlan, geo: IntersectionGeometry,
                      params: VerifyParams) -> list[Violation]:
    out = []
    v = (plan.vehicle_id,)
    for arm in plan.route:
        p = plan.arms[arm]
        for p1, p2 in itertools.pairwise(sorted(p.ta_pulses)):
            if p2 - p1 <= params.T_turn:
                out.append(Violation("turnaround", v, plan.time_of(p1), arm,
                                     f"pulses {p1},{p2} closer than the window"))
        for pulse in p.ta_pulses:
            end = min(pulse + params.T_turn + 1, plan.horizon)
            for t in range(pulse, end):
                if abs(p.x[t + 1] - p.x[t]) > NUM_TOL:
                    out.append(Violation("turnaround", v, plan.time_of(t), arm,
                                         "position not frozen during turn-around"))
                    break
            if pulse + 1 <= plan.horizon and p.dir[pulse + 1] == p.dir[pulse]:
                out.append(Violation("turnaround", v, plan.time_of(pulse), arm,
                                     "direction did not flip at the pulse"))
        # direction flips require a pulse
        flips = [t for t in range(plan.horizon) if p.dir[t + 1] != p.dir[t]]
        for t in flips:
            if t not in p.ta_pulses:
                out.append(Violation("turnaround", v, plan.time_of(t), arm,
                                     "direction flip without a turn-around"))
    return out


# ---------------------------------------------------------------------------
# pairwise checks


def _grid_union(p1: TrajectoryPlan, p2: TrajectoryPlan):
    """Common absolute step indices of two aligned plans (may be empty)."""
    if abs(p1.dt - p2.dt) > 1e-12:
        raise ValueError("plans on different time steps cannot be compared")
    off = (p2.t0 - p1.t0) / p1.dt
    if abs(off - round(off)) > 1e-6:
        raise ValueError("plan grids are misaligned")
    off = round(off)
    lo = max(0, off)
    hi = min(p1.horizon, p2.horizon + off)
    return [(t, t - off) for t in range(lo, hi + 1)]


def check_spatial(p1: TrajectoryPlan, p2: TrajectoryPlan,
                  geo: IntersectionGeometry, params: VerifyParams) -> list[Violation]:
    out = []
    v = (p1.vehicle_id, p2.vehicle_id)
    common = set(p1.route) & set(p2.route)
    for arm in sorted(common):
        for t1, t2 in _grid_union(p1, p2):
            t_abs = p1.time_of(t1)
            if not (p1.in_link(arm, t_abs, EPS) and p2.in_link(arm, t_abs, EPS)):
                continue
            l1, l2 = set(p1.arms[arm].lanes[t1]), set(p2.arms[arm].lanes[t2])
            if not (l1 & l2):
                continue
            gap = abs(p1.arms[arm].x[t1] - p2.arms[arm].x[t2])
            if gap < params.d_gap - NUM_TOL:
                out.append(Violation("spatial_gap", v, t_abs, arm,
                                     f"gap {gap:.3f} < {params.d_gap} in lane "
                                     f"{sorted(l1 & l2)}", params.d_gap - gap))
    return out


def check_temporal(p1: TrajectoryPlan, p2: TrajectoryPlan,
                   geo: IntersectionGeometry, params: VerifyParams) -> list[Violation]:
    out = []
    v = (p1.vehicle_id, p2.vehicle_id)
    for arm in sorted(set(p1.route) & set(p2.route)):
        a1, a2 = p1.arms[arm], p2.arms[arm]
        if a1.is_destination or a2.is_destination:
            continue
        if a1.leave_lane is None or a1.leave_lane != a2.leave_lane:
            continue
        gap = abs(a1.t_leave - a2.t_leave)
        if gap < params.tau - NUM_TOL:
            out.append(Violation("temporal_gap", v, min(a1.t_leave, a2.t_leave),
                                 arm, f"departures {gap:.3f}s apart in lane "
                                 f"{a1.leave_lane}", params.tau - gap))
    return out


def check_conflicts(p1: TrajectoryPlan, p2: TrajectoryPlan,
                    geo: IntersectionGeometry, params: VerifyParams) -> list[Violation]:
    out = []
    v = (p1.vehicle_id, p2.vehicle_id)
    for i, k1 in enumerate(p1.hops):
        c1 = geo.connectors.get(k1)
        if c1 is None:      # reported by the route check
            continue
        enter1 = p1.arms[p1.route[i]].t_leave
        exit1 = p1.arms[p1.route[i + 1]].t_enter
        for j, k2 in enumerate(p2.hops):
            c2 = geo.connectors.get(k2)
            if c2 is None:
                continue
            enter2 = p2.arms[p2.route[j]].t_leave
            exit2 = p2.arms[p2.route[j + 1]].t_enter
            if geo.is_reverse_pair(k1, k2):
                sep = max(enter1 - exit2, enter2 - exit1)
                if sep < params.tau - NUM_TOL:
                    out.append(Violation(
                        "head_on", v, min(enter1, enter2), k1[0],
                        f"opposite traversals of {k1} / {k2} separated by "
                        f"{sep:.3f}s", params.tau - sep))
                continue
            for pt in geo.conflicts_between(k1, k2):
                pass1 = enter1 + pt.dist_a / c1.speed
                pass2 = enter2 + pt.dist_b / c2.speed
                gap = abs(pass1 - pass2)
                if gap < params.tau - NUM_TOL:
                    out.append(Violation(
                        "conflict_point", v, min(pass1, pass2), k1[0],
                        f"{k1} x {k2} passed {gap:.3f}s apart",
                        params.tau - gap))
    return out


# ---------------------------------------------------------------------------


SINGLE_CHECKS = (check_route, check_motion, check_lanes, check_turnarounds)
PAIR_CHECKS = (check_spatial, check_temporal, check_conflicts)


def verify(plans: list[TrajectoryPlan], geo: IntersectionGeometry,
           params: VerifyParams) -> list[Violation]:
    """All violations in a set of committed plans (empty list = safe)."""
    out: list[Violation] = []
    for plan in plans:
        for chk in SINGLE_CHECKS:
            out.extend(chk(plan, geo, params))
    for p1, p2 in itertools.combinations(plans, 2):
        for chk in PAIR_CHECKS:
            out.extend(chk(p1, p2, geo, params))
    out.sort(key=lambda x: (x.time, x.kind))
    return out
