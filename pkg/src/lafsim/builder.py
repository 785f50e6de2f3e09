"""MILP formulation of the joint route / trajectory problem.

One model covers a single optimization instant: a set of *decision*
vehicles (newly admitted, trajectories free) and a set of *frozen* vehicles
(existing committed plans, entering every pairwise constraint as
constants).  Time is discretized into steps of length dt over a horizon of
T steps; positions are signed distances to the stop bar of each arm
(positive in the link, negative while crossing the intersection on a
connector, above the link length after leaving through the exit link).

Constraint families (tags used on rows):
  domain       variable domains, never-visited conventions, position laws
  boundary     initial state pins and the must-leave condition
  route        route-graph degree/conservation constraints on gamma/beta
  motion       longitudinal dynamics, direction gating, turn-around freeze
  lane         lane occupancy counts, adjacency, idling, turn-around lanes
  transition   entering/leaving an arm: time coupling, lane handoff, mu links
  no_lane_change  lane frozen once the link has been left
  spatial      same-lane spacing inside links
  temporal     stop-bar departure separation per lane
  conflict     conflict-point passing-time separation and head-on ordering
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field

from .geometry import ConnKey, Connector, IntersectionGeometry
from .model import MilpModel, default_big_m
from .plan import ArmPassage, TrajectoryPlan

LAF = "laf"
ALAF = "alaf"

IDLE_SCALE = 100.0   # min |dx| enabling a lane change is 1/IDLE_SCALE metres


class BuildError(ValueError):
    pass


@dataclass(frozen=True)
class VehicleSnapshot:
    """State of one decision vehicle at the optimization instant."""
    id: int
    a0: int                        # current arm (coordinate frame while in connector)
    a_out: int
    x_now: float                   # signed distance to a0's stop bar
    lane_now: int | None           # occupied lane (None only while in a connector)
    dir_now: int                   # 1 = moving away from the stop line
    t_enter_link: float            # relative s (<= 0): when a0's link was entered
    remaining: frozenset[int] = frozenset()   # A0: unvisited arms incl. a0
    in_connector: bool = False
    t_leave_link: float | None = None         # relative s (<= 0) if in_connector
    committed_hop: ConnKey | None = None      # connector being traversed
    arrival_time: float = 0.0      # absolute s (delay reference)
    turn_age: int | None = None    # steps since an in-progress turn-around pulse
    turn_lanes: tuple[int, int] | None = None
    fixed_route: tuple[int, ...] | None = None  # pin the arm sequence if set

    def a_set(self, geometry: IntersectionGeometry) -> frozenset[int]:
        return self.remaining or frozenset(geometry.arms)


@dataclass
class Snapshot:
    """Everything build_model needs for one optimization instant."""
    geometry: IntersectionGeometry
    t0: float
    dt: float
    T: int
    tau: float
    d_gap: float
    T_turn: int
    w1: float
    w2: float
    mode: str = LAF
    decision: list[VehicleSnapshot] = field(default_factory=list)
    frozen: list[TrajectoryPlan] = field(default_factory=list)
    approach_lanes: dict[int, tuple[int, ...]] = field(default_factory=dict)
    exit_lanes: dict[int, tuple[int, ...]] = field(default_factory=dict)

    def __post_init__(self):
        for arm in self.geometry.arms.values():
            self.approach_lanes.setdefault(arm.id, tuple(arm.lanes))
            self.exit_lanes.setdefault(arm.id, tuple(arm.lanes))

    # -- (de)serialization for model dumps ---------------------------------------
    def to_dict(self) -> dict:
        return {
            "t0": self.t0, "dt": self.dt, "T": self.T, "tau": self.tau,
            "d_gap": self.d_gap, "T_turn": self.T_turn, "w1": self.w1,
            "w2": self.w2, "mode": self.mode,
            "approach_lanes": {str(a): list(v) for a, v in self.approach_lanes.items()},
            "exit_lanes": {str(a): list(v) for a, v in self.exit_lanes.items()},
            "decision": [{
                "id": v.id, "a0": v.a0, "a_out": v.a_out, "x_now": v.x_now,
                "lane_now": v.lane_now, "dir_now": v.dir_now,
                "t_enter_link": v.t_enter_link, "remaining": sorted(v.remaining),
                "in_connector": v.in_connector, "t_leave_link": v.t_leave_link,
                "committed_hop": list(v.committed_hop) if v.committed_hop else None,
                "arrival_time": v.arrival_time, "turn_age": v.turn_age,
                "turn_lanes": list(v.turn_lanes) if v.turn_lanes else None,
                "fixed_route": list(v.fixed_route) if v.fixed_route else None,
            } for v in self.decision],
            "frozen": [p.to_dict() for p in self.frozen],
        }

    @classmethod
    def from_dict(cls, d: dict, geometry: IntersectionGeometry) -> "Snapshot":
        decision = [VehicleSnapshot(
            id=v["id"], a0=v["a0"], a_out=v["a_out"], x_now=v["x_now"],
            lane_now=v["lane_now"], dir_now=v["dir_now"],
            t_enter_link=v["t_enter_link"], remaining=frozenset(v["remaining"]),
            in_connector=v["in_connector"], t_leave_link=v["t_leave_link"],
            committed_hop=tuple(v["committed_hop"]) if v["committed_hop"] else None,
            arrival_time=v["arrival_time"], turn_age=v.get("turn_age"),
            turn_lanes=tuple(v["turn_lanes"]) if v.get("turn_lanes") else None,
            fixed_route=tuple(v["fixed_route"]) if v.get("fixed_route") else None,
        ) for v in d["decision"]]
        frozen = [TrajectoryPlan.from_dict(p) for p in d["frozen"]]
        return cls(geometry=geometry, t0=d["t0"], dt=d["dt"], T=d["T"],
                   tau=d["tau"], d_gap=d["d_gap"], T_turn=d["T_turn"],
                   w1=d["w1"], w2=d["w2"], mode=d["mode"],
                   decision=decision, frozen=frozen,
                   approach_lanes={int(a): tuple(v) for a, v in d["approach_lanes"].items()},
                   exit_lanes={int(a): tuple(v) for a, v in d["exit_lanes"].items()})

    def dump(self, path: str):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, sort_keys=True, indent=1)


def enumerate_routes(snapshot: Snapshot, veh: VehicleSnapshot) -> list[tuple[int, ...]]:
    """All arm sequences the vehicle may follow, shortest first.

    Any integral route assignment satisfying the route constraints is a
    simple path from the current arm to the destination along existing
    connectors (cycles are ruled out by the arm time coupling), so these
    tuples cover the full route space of the model.
    """
    geo = snapshot.geometry
    a_set = veh.a_set(geo)
    if veh.a0 == veh.a_out:
        return [(veh.a0,)]
    if snapshot.mode == ALAF:
        return [(veh.a0, veh.a_out)]
    routes: list[tuple[int, ...]] = []

    def extend(path: tuple[int, ...]):
        if path[-1] == veh.a_out:
            routes.append(path)
            return
        for a2 in sorted(a_set):
            if a2 in path or a2 == veh.a0 or not geo.lanes_between(path[-1], a2):
                continue
            if path[-1] == veh.a_out:
                continue
            extend(path + (a2,))

    if veh.in_connector:
        extend((veh.a0, veh.committed_hop[2]))
    else:
        extend((veh.a0,))
    routes.sort(key=lambda r: (len(r), r))
    return routes


# ---------------------------------------------------------------------------
# frozen plans as constants


@dataclass
class FrozenView:
    """Per-step / per-event constants of a committed plan, relative to the
    snapshot's grid."""
    vehicle_id: int
    in_link: dict[tuple[int, int], list[tuple[int, float]]]  # (arm, step) -> [(lane, x)]
    leave_events: list[tuple[int, float, int]]               # (arm, t_out rel, lane)
    hops: list[tuple[ConnKey, float, float, Connector]]      # key, enter rel, exit rel
    arms_visited: set[int]


def freeze_vehicle(snapshot: Snapshot, plan: TrajectoryPlan) -> FrozenView:
    """Project a committed plan onto the snapshot grid as constants."""
    geo = snapshot.geometry
    off = plan.grid_offset(snapshot.t0)
    in_link: dict[tuple[int, int], list[tuple[int, float]]] = {}
    for t in range(snapshot.T + 1):
        t_abs = snapshot.t0 + t * snapshot.dt
        step = t + off
        for arm in plan.route:
            p = plan.arms[arm]
            if not plan.in_link(arm, t_abs):
                continue
            if not (0 <= step < len(p.x)):
                continue
            entries = [(k, p.x[step]) for k in p.lanes[step]]
            if entries:
                in_link[(arm, t)] = entries
    leave_events = []
    hops = []
    horizon_s = snapshot.T * snapshot.dt
    for i, arm in enumerate(plan.route):
        p = plan.arms[arm]
        t_out = p.t_leave - snapshot.t0
        if not p.is_destination and p.leave_lane is not None:
            if -snapshot.tau < t_out < horizon_s + snapshot.tau:
                leave_events.append((arm, t_out, p.leave_lane))
        if i < len(plan.hops):
            key = plan.hops[i]
            conn = geo.connectors[key]
            exit_rel = plan.arms[plan.route[i + 1]].t_enter - snapshot.t0
            max_pass = horizon_s + conn.travel_time + snapshot.tau
            if -max_pass < t_out < max_pass:
                hops.append((key, t_out, exit_rel, conn))
    return FrozenView(plan.vehicle_id, in_link, leave_events, hops, set(plan.route))


# ---------------------------------------------------------------------------
# builder


class _Ctx:
    """Per-build bookkeeping shared by the family emitters."""

    def __init__(self, snapshot: Snapshot):
        self.s = snapshot
        geo = snapshot.geometry
        v_max = max(max(a.speed_limit for a in geo.arms.values()),
                    max(c.speed for c in geo.connectors.values()))
        total_l = sum(a.link_length for a in geo.arms.values())
        self.model = MilpModel(
            name=f"laf_t{snapshot.t0:g}",
            big_m=default_big_m(snapshot.T, snapshot.dt, v_max, total_l))
        self.frozen_views = [freeze_vehicle(snapshot, p) for p in snapshot.frozen]
        self.a_sets: dict[int, frozenset[int]] = {}
        self.candidates: dict[int, list[tuple[int, int, Connector]]] = {}
        self._abs_counter = itertools.count()

    def abs_bin(self, family: str) -> str:
        return self.model.binary(f"ab.{next(self._abs_counter)}", family="linearization")

    # variable names -----------------------------------------------------------
    @staticmethod
    def x(w, a, t): return f"x.{w}.{a}.{t}"
    @staticmethod
    def d(w, a, k, t): return f"d.{w}.{a}.{k}.{t}"
    @staticmethod
    def tin(w, a): return f"tin.{w}.{a}"
    @staticmethod
    def tout(w, a): return f"tout.{w}.{a}"
    @staticmethod
    def g(w, a1, a2): return f"g.{w}.{a1}.{a2}"
    @staticmethod
    def beta(w, a): return f"b.{w}.{a}"
    @staticmethod
    def mi(w, a, t): return f"mi.{w}.{a}.{t}"
    @staticmethod
    def mo(w, a, t): return f"mo.{w}.{a}.{t}"
    @staticmethod
    def dir(w, a, t): return f"dr.{w}.{a}.{t}"
    @staticmethod
    def ta(w, a, t): return f"ta.{w}.{a}.{t}"
    @staticmethod
    def tal(w, a, t): return f"tal.{w}.{a}.{t}"
    @staticmethod
    def tar(w, a, t): return f"tar.{w}.{a}.{t}"
    @staticmethod
    def vconn(w, a): return f"vc.{w}.{a}"
    @staticmethod
    def yx(w, a): return f"yx.{w}.{a}"


def _virtual_window(veh: VehicleSnapshot, snapshot: Snapshot, t: int) -> int:
    """1 if a pre-horizon turn-around pulse still covers step t."""
    if veh.turn_age is None:
        return 0
    return 1 if t + veh.turn_age <= snapshot.T_turn else 0


def _gamma_fixed_zero(ctx: _Ctx, w: int, a1: int, a2: int) -> bool:
    var = ctx.model.variables[ctx.g(w, a1, a2)]
    return var.ub == 0.0


def add_variables(ctx: _Ctx, veh: VehicleSnapshot):
    s, m = ctx.s, ctx.model
    geo = s.geometry
    w = veh.id
    a_set = veh.a_set(geo)
    ctx.a_sets[w] = a_set
    big = m.big_m
    horizon_s = s.T * s.dt
    v_hi = max(max(arm.speed_limit for arm in geo.arms.values()),
               max(c.speed for c in geo.connectors.values()))
    tt_max = max(c.travel_time for c in geo.connectors.values())
    x_lb = -v_hi * (horizon_s + 2 * tt_max)
    for a in sorted(geo.arms):
        if a in a_set:
            m.continuous(ctx.tin(w, a), -big, 2 * horizon_s, family="t_in")
            m.continuous(ctx.tout(w, a), -big, 2 * horizon_s, family="t_out")
            if a == veh.a_out:
                # never negative: entered at the stop bar, leaves at the far end
                x_rng = (0.0, geo.arms[a].link_length
                         + geo.arms[a].speed_limit * horizon_s)
            else:
                # never beyond the stop bar ... never beyond the link far end
                x_rng = (x_lb, geo.arms[a].link_length)
            for t in range(s.T + 1):
                m.continuous(ctx.x(w, a, t), x_rng[0], x_rng[1], family="x")
            for k in geo.arms[a].lanes:
                for t in range(s.T + 1):
                    m.binary(ctx.d(w, a, k, t), family="delta")
            for t in range(s.T + 1):
                m.binary(ctx.mi(w, a, t), family="mu_in")
                m.binary(ctx.mo(w, a, t), family="mu_out")
                m.binary(ctx.dir(w, a, t), family="dir")
                m.binary(ctx.ta(w, a, t), family="ta")
                m.binary(ctx.tal(w, a, t), family="tal")
                m.binary(ctx.tar(w, a, t), family="tar")
            if a != veh.a_out:
                vmax_conn = max((c.speed for c in geo.connectors.values()
                                 if c.from_arm == a), default=0.0)
                m.continuous(ctx.vconn(w, a), 0.0, vmax_conn, family="v_conn")
                # y stands for v_conn * t_out of this arm
                if veh.in_connector and a == veh.a0:
                    y_lo = min(0.0, vmax_conn * veh.t_leave_link)
                else:
                    y_lo = 0.0
                m.continuous(ctx.yx(w, a), y_lo, vmax_conn * 2 * horizon_s,
                             family="linearization")
    for a1 in sorted(geo.arms):
        for a2 in sorted(geo.arms):
            if a1 != a2:
                m.binary(ctx.g(w, a1, a2), family="gamma")
    for a in sorted(geo.arms):
        m.binary(ctx.beta(w, a), family="beta")

    # structural fixes on the route variables
    for a1 in sorted(geo.arms):
        for a2 in sorted(geo.arms):
            if a1 == a2:
                continue
            name = ctx.g(w, a1, a2)
            if (a1 not in a_set or a2 not in a_set or a2 == veh.a0
                    or a1 == veh.a_out or not geo.lanes_between(a1, a2)):
                m.fix(name, 0.0)
    for a in sorted(geo.arms):
        if a not in a_set:
            m.fix(ctx.beta(w, a), 0.0)
    m.fix(ctx.beta(w, veh.a0), 1.0)
    m.fix(ctx.beta(w, veh.a_out), 1.0)
    # the current arm's link was entered before the horizon started
    for t in range(s.T + 1):
        m.fix(ctx.mi(w, veh.a0, t), 1.0)
        if veh.in_connector:
            m.fix(ctx.mo(w, veh.a0, t), 1.0)
    if veh.a_out != veh.a0:
        # the destination link is entered at its stop bar and left at the far
        # end, so the vehicle always faces away from the stop line there
        for t in range(s.T + 1):
            m.fix(ctx.dir(w, veh.a_out, t), 1.0)
            m.fix(ctx.ta(w, veh.a_out, t), 0.0)
            m.fix(ctx.tal(w, veh.a_out, t), 0.0)
            m.fix(ctx.tar(w, veh.a_out, t), 0.0)
    if veh.in_connector:
        if veh.committed_hop is None:
            raise BuildError(f"vehicle {w}: in_connector without committed hop")
        _, _, a2_next, _ = veh.committed_hop
        for a2 in sorted(geo.arms):
            if a2 != veh.a0 and not _gamma_fixed_zero(ctx, w, veh.a0, a2):
                m.fix(ctx.g(w, veh.a0, a2), 1.0 if a2 == a2_next else 0.0)
    if veh.fixed_route is not None:
        r = veh.fixed_route
        if (r[0] != veh.a0 or r[-1] != veh.a_out or len(set(r)) != len(r)
                or any(a not in a_set for a in r)):
            raise BuildError(f"vehicle {w}: invalid fixed route {r}")
        on_route = set(zip(r, r[1:]))
        for a1, a2 in on_route:
            if _gamma_fixed_zero(ctx, w, a1, a2):
                raise BuildError(f"vehicle {w}: route {r} uses a missing connector")
        for a1 in sorted(geo.arms):
            for a2 in sorted(geo.arms):
                if a1 != a2 and not _gamma_fixed_zero(ctx, w, a1, a2):
                    m.fix(ctx.g(w, a1, a2), 1.0 if (a1, a2) in on_route else 0.0)
        for a in sorted(geo.arms):
            if a in a_set and not m.variables[ctx.beta(w, a)].lb == 1.0:
                m.fix(ctx.beta(w, a), 1.0 if a in r else 0.0)
    if s.mode == ALAF:
        # allocated-lane restriction: direct route, no turn-arounds, lane
        # roles split between approaching and exiting halves
        if veh.fixed_route is not None and veh.fixed_route != (veh.a0, veh.a_out):
            raise BuildError(f"vehicle {w}: only direct routes are allowed here")
        for a1 in sorted(geo.arms):
            for a2 in sorted(geo.arms):
                if a1 != a2 and not _gamma_fixed_zero(ctx, w, a1, a2):
                    m.fix(ctx.g(w, a1, a2),
                          1.0 if (a1, a2) == (veh.a0, veh.a_out) else 0.0)
        for a in sorted(geo.arms):
            if a in a_set:
                for t in range(s.T + 1):
                    m.fix(ctx.ta(w, a, t), 0.0)
                    m.fix(ctx.tal(w, a, t), 0.0)
                    m.fix(ctx.tar(w, a, t), 0.0)
        allowed = {veh.a0: set(s.approach_lanes[veh.a0]),
                   veh.a_out: set(s.exit_lanes[veh.a_out])}
        for a, lanes_ok in allowed.items():
            if a in a_set:
                for k in geo.arms[a].lanes:
                    if k not in lanes_ok:
                        for t in range(s.T + 1):
                            m.fix(ctx.d(w, a, k, t), 0.0)

    # candidate connectors: hops whose selection variable is not pinned to 0
    cands: list[tuple[int, int, Connector]] = []
    for a1 in sorted(a_set):
        if a1 == veh.a_out:
            continue
        for a2 in sorted(a_set):
            if a2 == a1 or _gamma_fixed_zero(ctx, w, a1, a2):
                continue
            for k1 in geo.lanes_between(a1, a2):
                conn = geo.connector(a1, k1, a2)
                if s.mode == ALAF and k1 not in s.approach_lanes[a1]:
                    continue
                cands.append((a1, k1, conn))
    ctx.candidates[w] = cands


def add_variable_domains(ctx: _Ctx, veh: VehicleSnapshot):
    s, m, geo = ctx.s, ctx.model, ctx.s.geometry
    w, a_set = veh.id, ctx.a_sets[veh.id]
    horizon_s = s.T * s.dt
    for a in sorted(a_set):
        tin, tout = ctx.tin(w, a), ctx.tout(w, a)
        beta = ctx.beta(w, a)
        if a == veh.a0:
            m.fix(tin, veh.t_enter_link)
            if veh.in_connector:
                m.fix(tout, veh.t_leave_link)
            else:
                m.set_bounds(tout, 0.0, horizon_s)
        else:
            m.set_bounds(tin, 0.0, 2 * horizon_s)
            m.set_bounds(tout, 0.0, 2 * horizon_s)
            m.add_le({tin: 1.0}, horizon_s, "domain", gate={beta: -1.0}, gate_const=1.0)
            m.add_le({tout: 1.0}, horizon_s, "domain", gate={beta: -1.0}, gate_const=1.0)
            m.add_le({tin: 1.0, tout: -1.0}, 0.0, "domain")
            m.add_ge({tin: 1.0}, 2 * horizon_s, "domain", gate={beta: 1.0})
            m.add_le({tin: 1.0}, 2 * horizon_s, "domain", gate={beta: 1.0})
            m.add_ge({tout: 1.0}, 2 * horizon_s, "domain", gate={beta: 1.0})
            m.add_le({tout: 1.0}, 2 * horizon_s, "domain", gate={beta: 1.0})
        link_l = geo.arms[a].link_length
        v_link = geo.arms[a].speed_limit
        x_lo = m.variables[ctx.x(w, a, 0)].lb
        x_hi = m.variables[ctx.x(w, a, 0)].ub
        for t in range(s.T + 1):
            x, mi, mo = ctx.x(w, a, t), ctx.mi(w, a, t), ctx.mo(w, a, t)
            # zero before entering
            m.add_le({x: 1.0}, 0.0, "domain", gate={mi: 1.0})
            m.add_ge({x: 1.0}, 0.0, "domain", gate={mi: 1.0})
            # inside the link: 0 <= x <= L
            m.add_le({x: 1.0}, link_l, "domain", gate={mi: -1.0, mo: 1.0}, gate_const=1.0)
            m.add_ge({x: 1.0}, 0.0, "domain", gate={mi: -1.0, mo: 1.0}, gate_const=1.0)
            # coupling of the position range to the entered/left indicators
            m.add_row({x: 1.0, mi: -x_hi}, -math.inf, 0.0, "domain")
            if x_lo < 0.0:
                m.add_row({x: 1.0, mo: -x_lo}, 0.0, math.inf, "domain")
            if a != veh.a0:
                m.add_le({mi: 1.0, beta: -1.0}, 0.0, "domain")
                m.add_le({mo: 1.0, beta: -1.0}, 0.0, "domain")
        if a == veh.a_out:
            # after leaving: x = L + V (t dt - t_out)
            for t in range(s.T + 1):
                x, mo = ctx.x(w, a, t), ctx.mo(w, a, t)
                rhs = link_l + v_link * t * s.dt
                m.add_le({x: 1.0, ctx.tout(w, a): v_link}, rhs, "domain",
                         gate={mo: -1.0}, gate_const=1.0)
                m.add_ge({x: 1.0, ctx.tout(w, a): v_link}, rhs, "domain",
                         gate={mo: -1.0}, gate_const=1.0)
        else:
            # after leaving: x = -v_conn (t dt - t_out);   y := v_conn * t_out
            y, vc = ctx.yx(w, a), ctx.vconn(w, a)
            for a1c, k1, conn in ctx.candidates[w]:
                if a1c != a:
                    continue
                gam = ctx.g(w, a, conn.to_arm)
                dT = ctx.d(w, a, k1, s.T)
                gate = {gam: -1.0, dT: -1.0}
                m.add_le({y: 1.0, tout: -conn.speed}, 0.0, "domain",
                         gate=gate, gate_const=2.0)
                m.add_ge({y: 1.0, tout: -conn.speed}, 0.0, "domain",
                         gate=gate, gate_const=2.0)
                m.add_le({vc: 1.0}, conn.speed, "domain", gate=gate, gate_const=2.0)
                m.add_ge({vc: 1.0}, conn.speed, "domain", gate=gate, gate_const=2.0)
            vmax_conn = m.variables[vc].ub
            if not (veh.in_connector and a == veh.a0):
                m.add_le({y: 1.0, tout: -vmax_conn}, 0.0, "domain")
            for t in range(s.T + 1):
                x, mo = ctx.x(w, a, t), ctx.mo(w, a, t)
                m.add_le({x: 1.0, vc: t * s.dt, y: -1.0}, 0.0, "domain",
                         gate={mo: -1.0}, gate_const=1.0)
                m.add_ge({x: 1.0, vc: t * s.dt, y: -1.0}, 0.0, "domain",
                         gate={mo: -1.0}, gate_const=1.0)
                # after leaving, x recedes no faster than the fastest connector
                m.add_ge({x: 1.0, tout: -vmax_conn}, -vmax_conn * t * s.dt,
                         "domain", gate={mo: -1.0}, gate_const=1.0)


def add_boundary_conditions(ctx: _Ctx, veh: VehicleSnapshot):
    s, m, geo = ctx.s, ctx.model, ctx.s.geometry
    w, a_set = veh.id, ctx.a_sets[veh.id]
    m.fix(ctx.x(w, veh.a0, 0), veh.x_now)
    if veh.in_connector:
        lane0 = veh.committed_hop[1]
    else:
        lane0 = veh.lane_now
    if lane0 is None:
        raise BuildError(f"vehicle {w}: no current lane")
    occupied0 = {lane0}
    if veh.turn_lanes is not None and _virtual_window(veh, s, 0):
        occupied0 = set(veh.turn_lanes)
    for k in geo.arms[veh.a0].lanes:
        m.fix(ctx.d(w, veh.a0, k, 0), 1.0 if k in occupied0 else 0.0)
    m.fix(ctx.dir(w, veh.a0, 0), float(veh.dir_now))
    for a in sorted(a_set):
        if a != veh.a0:
            m.fix(ctx.dir(w, a, 0), 1.0)
    m.add_ge({ctx.x(w, veh.a_out, s.T): 1.0},
             geo.arms[veh.a_out].link_length, "boundary")
    if veh.turn_age is not None:
        # a turn-around in progress: positions frozen and the lane pair held
        # for the remainder of the window, no new pulse meanwhile
        rem = s.T_turn - veh.turn_age
        for t in range(0, min(rem + 1, s.T)):
            m.add_eq({ctx.x(w, veh.a0, t): 1.0, ctx.x(w, veh.a0, t + 1): -1.0},
                     0.0, "boundary")
        for t in range(0, min(rem, s.T) + 1):
            for k in veh.turn_lanes or ():
                m.fix(ctx.d(w, veh.a0, k, t), 1.0)
        for t in range(0, min(rem, s.T) + 1):
            m.fix(ctx.ta(w, veh.a0, t), 0.0)
        if veh.turn_age == 0 and s.T >= 1:
            m.fix(ctx.dir(w, veh.a0, 1), 1.0 - veh.dir_now)


def add_route_constraints(ctx: _Ctx, veh: VehicleSnapshot):
    s, m, geo = ctx.s, ctx.model, ctx.s.geometry
    w, a_set = veh.id, ctx.a_sets[veh.id]
    arms = sorted(geo.arms)
    def outs(a): return [ctx.g(w, a, b) for b in arms if b != a]
    def ins(a): return [ctx.g(w, b, a) for b in arms if b != a]
    for a in arms:
        m.add_le({v: 1.0 for v in outs(a)}, 1.0, "route")
        m.add_le({v: 1.0 for v in ins(a)}, 1.0, "route")
    if veh.a0 != veh.a_out:
        m.add_eq({v: 1.0 for v in outs(veh.a0)}, 1.0, "route")
        m.add_eq({v: 1.0 for v in ins(veh.a_out)}, 1.0, "route")
    for a in sorted(a_set):
        if a in (veh.a0, veh.a_out):
            continue
        coeffs = {v: 1.0 for v in outs(a)}
        for v in ins(a):
            coeffs[v] = coeffs.get(v, 0.0) - 1.0
        m.add_eq(coeffs, 0.0, "route")
    for a in arms:
        if a == veh.a0 or a not in a_set:
            continue
        beta = ctx.beta(w, a)
        # visited <=> entered; the destination is entered, others also leave
        m.add_le({**{v: -1.0 for v in ins(a)}, beta: 1.0}, 0.0, "route")
        if a != veh.a_out:
            m.add_le({**{v: -1.0 for v in outs(a)}, beta: 1.0}, 0.0, "route")
        m.add_le({**{v: 1.0 for v in outs(a)}, beta: -1.0}, 0.0, "route")
        m.add_le({**{v: 1.0 for v in ins(a)}, beta: -1.0}, 0.0, "route")


def add_motion_constraints(ctx: _Ctx, veh: VehicleSnapshot):
    s, m, geo = ctx.s, ctx.model, ctx.s.geometry
    w, a_set = veh.id, ctx.a_sets[veh.id]
    v_hi = max(max(arm.speed_limit for arm in geo.arms.values()),
               max(c.speed for c in geo.connectors.values()))
    step_jump = 2.0 * v_hi * s.dt   # bound on |dx| across any single step
    for a in sorted(a_set):
        v = geo.arms[a].speed_limit
        link_l = geo.arms[a].link_length
        tin, tout = ctx.tin(w, a), ctx.tout(w, a)
        for t in range(s.T):
            x0, x1 = ctx.x(w, a, t), ctx.x(w, a, t + 1)
            mi0, mi1 = ctx.mi(w, a, t), ctx.mi(w, a, t + 1)
            mo0, mo1 = ctx.mo(w, a, t), ctx.mo(w, a, t + 1)
            dr = ctx.dir(w, a, t)
            # bounded entry-step travel (the current arm was entered pre-horizon)
            if a != veh.a0:
                m.add_le({x1: 1.0, tin: v}, v * (t + 1) * s.dt, "motion",
                         gate={mi0: 1.0, mi1: -1.0}, gate_const=1.0)
            # speed limit while in the link
            m.add_le({x1: 1.0, x0: -1.0}, v * s.dt, "motion",
                     gate={mi0: -1.0, mo1: 1.0}, gate_const=1.0)
            m.add_le({x0: 1.0, x1: -1.0}, v * s.dt, "motion",
                     gate={mi0: -1.0, mo1: 1.0}, gate_const=1.0)
            # bounded leave-step travel
            if a != veh.a_out:
                m.add_le({x0: 1.0, tout: -v}, -v * t * s.dt, "motion",
                         gate={mo0: 1.0, mo1: -1.0}, gate_const=1.0)
            else:
                m.add_le({x0: -1.0, tout: -v}, -link_l - v * t * s.dt, "motion",
                         gate={mo0: 1.0, mo1: -1.0}, gate_const=1.0)
            # direction gates the sign of movement
            m.add_le({x1: 1.0, x0: -1.0}, 0.0, "motion", gate={dr: 1.0})
            m.add_le({x0: 1.0, x1: -1.0}, 0.0, "motion", gate={dr: -1.0}, gate_const=1.0)
            # position frozen during a turn-around window
            for sdx in range(0, s.T_turn + 1):
                p = t - sdx
                if p < 0:
                    continue
                tap = ctx.ta(w, a, p)
                m.add_row({x0: 1.0, x1: -1.0, tap: step_jump},
                          -math.inf, step_jump, "motion")
                m.add_row({x1: 1.0, x0: -1.0, tap: step_jump},
                          -math.inf, step_jump, "motion")
            # direction flips exactly at a pulse, never otherwise
            dr1 = ctx.dir(w, a, t + 1)
            tat = ctx.ta(w, a, t)
            m.add_row({dr: 1.0, dr1: 1.0, tat: 1.0}, -math.inf, 2.0, "motion")
            m.add_row({dr: 1.0, dr1: 1.0, tat: -1.0}, 0.0, math.inf, "motion")
            m.add_le({dr1: 1.0, dr: -1.0, tat: -1.0}, 0.0, "motion")
            m.add_le({dr: 1.0, dr1: -1.0, tat: -1.0}, 0.0, "motion")
        # pulses separated by more than the turn-around window
        for t in range(s.T):
            tat = ctx.ta(w, a, t)
            prev = {ctx.ta(w, a, t - 1): 1.0} if t >= 1 else {}
            for sdx in range(1, s.T_turn + 1):
                if t + sdx > s.T:
                    break
                coeffs = {ctx.ta(w, a, t + sdx): 1.0, tat: 1.0}
                for vn, c in prev.items():
                    coeffs[vn] = coeffs.get(vn, 0.0) - c
                m.add_le(coeffs, 1.0, "motion")
        # pulses only while physically inside the link
        for t in range(s.T + 1):
            m.add_le({ctx.ta(w, a, t): 1.0, ctx.mi(w, a, t): -1.0}, 0.0, "motion")
            m.add_le({ctx.ta(w, a, t): 1.0, ctx.mo(w, a, t): 1.0}, 1.0, "motion")


def _window_terms(ctx: _Ctx, veh: VehicleSnapshot, a: int, t: int) -> tuple[dict[str, float], float]:
    """Sum of turn-around pulses covering step t, as (coeffs, const)."""
    s = ctx.s
    coeffs: dict[str, float] = {}
    for sdx in range(0, s.T_turn + 1):
        p = t - sdx
        if p >= 0:
            coeffs[ctx.ta(veh.id, a, p)] = 1.0
    const = float(_virtual_window(veh, s, t)) if a == veh.a0 else 0.0
    return coeffs, const


def add_lane_choice_constraints(ctx: _Ctx, veh: VehicleSnapshot):
    s, m, geo = ctx.s, ctx.model, ctx.s.geometry
    w, a_set = veh.id, ctx.a_sets[veh.id]
    idle_m = IDLE_SCALE * max(a.speed_limit for a in geo.arms.values()) * s.dt + 2.0
    for a in sorted(a_set):
        lanes = list(geo.arms[a].lanes)
        beta = ctx.beta(w, a)
        for t in range(s.T + 1):
            win, win_c = _window_terms(ctx, veh, a, t)
            sum_d = {ctx.d(w, a, k, t): 1.0 for k in lanes}
            # occupancy count: one lane, two during a turn-around window
            coeffs = dict(sum_d)
            for vn, c in win.items():
                coeffs[vn] = coeffs.get(vn, 0.0) - c
            m.add_row(coeffs, -math.inf, 1.0 + win_c, "lane")
            lo = dict(coeffs)
            lo[beta] = lo.get(beta, 0.0) - 3.0
            m.add_row(lo, 1.0 + win_c - 3.0, math.inf, "lane")
            up = dict(sum_d)
            up[beta] = up.get(beta, 0.0) - 2.0
            m.add_row(up, -math.inf, 0.0, "lane")
            # occupied lanes are adjacent within a step
            for k1, k2 in itertools.combinations(lanes, 2):
                if k2 - k1 >= 2:
                    m.add_le({ctx.d(w, a, k1, t): 1.0, ctx.d(w, a, k2, t): 1.0},
                             1.0, "lane")
        for t in range(s.T):
            # adjacency across steps
            for k1 in lanes:
                for k2 in lanes:
                    if abs(k2 - k1) >= 2:
                        m.add_le({ctx.d(w, a, k1, t): 1.0, ctx.d(w, a, k2, t + 1): 1.0},
                                 1.0, "lane")
            # lane changes require longitudinal movement (except in windows)
            win, win_c = _window_terms(ctx, veh, a, t + 1)
            wp, wpc = _window_terms(ctx, veh, a, t)
            for vn, c in wp.items():
                win[vn] = max(win.get(vn, 0.0), c)
            win_c = max(win_c, wpc)
            x0, x1, dr = ctx.x(w, a, t), ctx.x(w, a, t + 1), ctx.dir(w, a, t)
            for k in lanes:
                d0, d1 = ctx.d(w, a, k, t), ctx.d(w, a, k, t + 1)
                for lhs in ({d0: 1.0, d1: -1.0}, {d1: 1.0, d0: -1.0}):
                    c1 = dict(lhs)
                    c1[x0] = c1.get(x0, 0.0) - IDLE_SCALE
                    c1[x1] = c1.get(x1, 0.0) + IDLE_SCALE
                    c1[dr] = c1.get(dr, 0.0) - idle_m
                    for vn, c in win.items():
                        c1[vn] = c1.get(vn, 0.0) - idle_m * c
                    m.add_row(c1, -math.inf, idle_m * win_c, "lane")
                    c2 = dict(lhs)
                    c2[x1] = c2.get(x1, 0.0) - IDLE_SCALE
                    c2[x0] = c2.get(x0, 0.0) + IDLE_SCALE
                    c2[dr] = c2.get(dr, 0.0) + idle_m
                    for vn, c in win.items():
                        c2[vn] = c2.get(vn, 0.0) - idle_m * c
                    m.add_row(c2, -math.inf, idle_m + idle_m * win_c, "lane")
        # a lane pair occupied at a pulse stays occupied through the window
        for p in range(s.T + 1):
            tap = ctx.ta(w, a, p)
            for sdx in range(1, s.T_turn + 1):
                t = p + sdx
                if t > s.T:
                    break
                for k in lanes[:-1]:
                    m.add_row(
                        {ctx.d(w, a, k, t): 1.0, ctx.d(w, a, k + 1, t): 1.0,
                         ctx.d(w, a, k, p): -2.0, ctx.d(w, a, k + 1, p): -2.0,
                         tap: -2.0},
                        -4.0, math.inf, "lane")
        # turn-around side consistency and edge-lane prohibitions
        kl, kr = lanes[0], lanes[-1]
        for t in range(s.T + 1):
            m.add_eq({ctx.tal(w, a, t): 1.0, ctx.tar(w, a, t): 1.0,
                      ctx.ta(w, a, t): -1.0}, 0.0, "lane")
            dr = ctx.dir(w, a, t)
            m.add_le({ctx.tal(w, a, t): 1.0, ctx.d(w, a, kl, t): 1.0, dr: -1.0},
                     1.0, "lane")
            m.add_le({ctx.tal(w, a, t): 1.0, ctx.d(w, a, kr, t): 1.0, dr: 1.0},
                     2.0, "lane")
            m.add_le({ctx.tar(w, a, t): 1.0, ctx.d(w, a, kr, t): 1.0, dr: -1.0},
                     1.0, "lane")
            m.add_le({ctx.tar(w, a, t): 1.0, ctx.d(w, a, kl, t): 1.0, dr: 1.0},
                     2.0, "lane")
        # exit-lane restriction in the destination arm
        if a == veh.a_out:
            k_out = s.exit_lanes[a]
            for t in range(s.T + 1):
                mo = ctx.mo(w, a, t)
                m.add_row({**{ctx.d(w, a, k, t): 1.0 for k in k_out}, mo: -1.0},
                          0.0, math.inf, "lane")
                m.add_le({**{ctx.d(w, a, k, t): 1.0 for k in k_out}, mo: 1.0},
                         2.0, "lane")


def add_arm_transition_constraints(ctx: _Ctx, veh: VehicleSnapshot):
    s, m, geo = ctx.s, ctx.model, ctx.s.geometry
    w, a_set = veh.id, ctx.a_sets[veh.id]
    # time coupling and lane handoff per candidate connector
    for a1, k1, conn in ctx.candidates[w]:
        a2, k2 = conn.to_arm, conn.to_lane
        gam = ctx.g(w, a1, a2)
        dT = ctx.d(w, a1, k1, s.T)
        gate = {gam: -1.0, dT: -1.0}
        tt = conn.travel_time
        m.add_le({ctx.tin(w, a2): 1.0, ctx.tout(w, a1): -1.0}, tt, "transition",
                 gate=gate, gate_const=2.0)
        m.add_ge({ctx.tin(w, a2): 1.0, ctx.tout(w, a1): -1.0}, tt, "transition",
                 gate=gate, gate_const=2.0)
        # lane handoff: occupied lane of a2 at step 0 equals the connector end
        d20 = ctx.d(w, a2, k2, 0)
        m.add_le({d20: 1.0, dT: -1.0, gam: 1.0}, 1.0, "transition")
        m.add_le({dT: 1.0, d20: -1.0, gam: 1.0}, 1.0, "transition")
    # leave-lane restriction: delta(T) of a1 must lie in K_{a1}^{a2} when chosen
    for a1 in sorted(a_set):
        if a1 == veh.a_out:
            continue
        for a2 in sorted(a_set):
            if a2 == a1 or _gamma_fixed_zero(ctx, w, a1, a2):
                continue
            gam = ctx.g(w, a1, a2)
            lanes_k = geo.lanes_between(a1, a2)
            if s.mode == ALAF:
                lanes_k = [k for k in lanes_k if k in s.approach_lanes[a1]]
            coeffs = {ctx.d(w, a1, k, s.T): 1.0 for k in lanes_k}
            m.add_row({**coeffs, gam: -1.0}, 0.0, math.inf, "transition")
            m.add_le({**coeffs, gam: 1.0}, 2.0, "transition")
    for a in sorted(a_set):
        # lane kept over the entry step
        if a != veh.a0:
            for t in range(s.T):
                mi0, mi1 = ctx.mi(w, a, t), ctx.mi(w, a, t + 1)
                for k in geo.arms[a].lanes:
                    d0, d1 = ctx.d(w, a, k, t), ctx.d(w, a, k, t + 1)
                    m.add_le({d0: 1.0, d1: -1.0, mi0: -1.0, mi1: 1.0}, 1.0, "transition")
                    m.add_le({d1: 1.0, d0: -1.0, mi0: -1.0, mi1: 1.0}, 1.0, "transition")
        # mu indicator linking (skipped where the indicator is pinned: the
        # current arm was entered, and possibly left, before the horizon)
        tin, tout = ctx.tin(w, a), ctx.tout(w, a)
        skip_in = a == veh.a0
        skip_out = a == veh.a0 and veh.in_connector
        for t in range(s.T + 1):
            mi, mo = ctx.mi(w, a, t), ctx.mo(w, a, t)
            tdt = t * s.dt
            if not skip_in:
                m.add_le({tin: -1.0}, -tdt, "transition", gate={mi: 1.0})
                m.add_ge({tin: -1.0}, -tdt, "transition", gate={mi: -1.0}, gate_const=1.0)
            if not skip_out:
                m.add_le({tout: -1.0}, -tdt, "transition", gate={mo: 1.0})
                m.add_ge({tout: -1.0}, -tdt, "transition", gate={mo: -1.0}, gate_const=1.0)
            m.add_le({mo: 1.0, mi: -1.0}, 0.0, "transition")
            if t < s.T:
                m.add_le({mi: 1.0, ctx.mi(w, a, t + 1): -1.0}, 0.0, "transition")
                m.add_le({mo: 1.0, ctx.mo(w, a, t + 1): -1.0}, 0.0, "transition")


def add_no_lane_change_zone(ctx: _Ctx, veh: VehicleSnapshot):
    s, m, geo = ctx.s, ctx.model, ctx.s.geometry
    w, a_set = veh.id, ctx.a_sets[veh.id]
    for a in sorted(a_set):
        for t in range(s.T):
            mo1 = ctx.mo(w, a, t + 1)
            for k in geo.arms[a].lanes:
                m.add_le({ctx.d(w, a, k, t + 1): 1.0, ctx.d(w, a, k, t): -1.0,
                          mo1: 1.0}, 1.0, "no_lane_change")


# -- pairwise families -------------------------------------------------------


def _in_link_expr(ctx: _Ctx, w: int, a: int, t: int) -> dict[str, float]:
    return {ctx.mi(w, a, t): 1.0, ctx.mo(w, a, t): -1.0}


def add_spatial_gap_between(ctx: _Ctx, v1: VehicleSnapshot, v2: VehicleSnapshot):
    s, m, geo = ctx.s, ctx.model, ctx.s.geometry
    w1, w2 = v1.id, v2.id
    for a in sorted(ctx.a_sets[w1] & ctx.a_sets[w2]):
        for t in range(s.T + 1):
            rho = m.binary(f"rho.{w1}.{w2}.{a}.{t}", family="rho")
            b = ctx.abs_bin("spatial")
            x1, x2 = ctx.x(w1, a, t), ctx.x(w2, a, t)
            m.add_ge({x1: 1.0, x2: -1.0}, s.d_gap, "spatial",
                     gate={rho: -1.0, b: 1.0}, gate_const=1.0)
            m.add_ge({x2: 1.0, x1: -1.0}, s.d_gap, "spatial",
                     gate={rho: -1.0, b: -1.0}, gate_const=2.0)
            il1, il2 = _in_link_expr(ctx, w1, a, t), _in_link_expr(ctx, w2, a, t)
            for k in geo.arms[a].lanes:
                coeffs = {rho: 1.0, ctx.d(w1, a, k, t): -1.0, ctx.d(w2, a, k, t): -1.0}
                coeffs.update({vn: coeffs.get(vn, 0.0) - c for vn, c in il1.items()})
                coeffs.update({vn: coeffs.get(vn, 0.0) - c for vn, c in il2.items()})
                m.add_ge(coeffs, -3.0, "spatial")


def add_spatial_gap_frozen(ctx: _Ctx, v1: VehicleSnapshot, fz: FrozenView):
    s, m = ctx.s, ctx.model
    w1 = v1.id
    for (a, t), entries in sorted(fz.in_link.items()):
        if a not in ctx.a_sets[w1]:
            continue
        x_f = entries[0][1]
        rho = m.binary(f"rho.{w1}.f{fz.vehicle_id}.{a}.{t}", family="rho")
        b = ctx.abs_bin("spatial")
        x1 = ctx.x(w1, a, t)
        m.add_ge({x1: 1.0}, s.d_gap + x_f, "spatial",
                 gate={rho: -1.0, b: 1.0}, gate_const=1.0)
        m.add_ge({x1: -1.0}, s.d_gap - x_f, "spatial",
                 gate={rho: -1.0, b: -1.0}, gate_const=2.0)
        il1 = _in_link_expr(ctx, w1, a, t)
        for k_f, _xf in entries:
            coeffs = {rho: 1.0, ctx.d(w1, a, k_f, t): -1.0}
            coeffs.update({vn: coeffs.get(vn, 0.0) - c for vn, c in il1.items()})
            m.add_ge(coeffs, -1.0, "spatial")


def add_temporal_gap_between(ctx: _Ctx, v1: VehicleSnapshot, v2: VehicleSnapshot):
    s, m, geo = ctx.s, ctx.model, ctx.s.geometry
    w1, w2 = v1.id, v2.id
    common = sorted((ctx.a_sets[w1] & ctx.a_sets[w2]) - {v1.a_out, v2.a_out})
    for a in common:
        b = ctx.abs_bin("temporal")
        t1, t2 = ctx.tout(w1, a), ctx.tout(w2, a)
        be1, be2 = ctx.beta(w1, a), ctx.beta(w2, a)
        for k in geo.arms[a].lanes:
            gate = {be1: -1.0, be2: -1.0,
                    ctx.d(w1, a, k, s.T): -1.0, ctx.d(w2, a, k, s.T): -1.0}
            m.add_ge({t1: 1.0, t2: -1.0}, s.tau, "temporal",
                     gate={**gate, b: 1.0}, gate_const=4.0)
            m.add_ge({t2: 1.0, t1: -1.0}, s.tau, "temporal",
                     gate={**gate, b: -1.0}, gate_const=5.0)


def add_temporal_gap_frozen(ctx: _Ctx, v1: VehicleSnapshot, fz: FrozenView):
    s, m = ctx.s, ctx.model
    w1 = v1.id
    for (a, t_out_f, k_f) in fz.leave_events:
        if a not in ctx.a_sets[w1] or a == v1.a_out:
            continue
        b = ctx.abs_bin("temporal")
        t1 = ctx.tout(w1, a)
        gate = {ctx.beta(w1, a): -1.0, ctx.d(w1, a, k_f, s.T): -1.0}
        m.add_ge({t1: 1.0}, s.tau + t_out_f, "temporal",
                 gate={**gate, b: 1.0}, gate_const=2.0)
        m.add_ge({t1: -1.0}, s.tau - t_out_f, "temporal",
                 gate={**gate, b: -1.0}, gate_const=3.0)


def add_conflict_between(ctx: _Ctx, v1: VehicleSnapshot, v2: VehicleSnapshot):
    s, m, geo = ctx.s, ctx.model, ctx.s.geometry
    w1, w2 = v1.id, v2.id
    for a1, k1, c1 in ctx.candidates[w1]:
        g1 = ctx.g(w1, a1, c1.to_arm)
        d1 = ctx.d(w1, a1, k1, s.T)
        t1 = ctx.tout(w1, a1)
        for a3, k3, c2 in ctx.candidates[w2]:
            g2 = ctx.g(w2, a3, c2.to_arm)
            d2 = ctx.d(w2, a3, k3, s.T)
            t2 = ctx.tout(w2, a3)
            pts = geo.conflicts_between(c1.key, c2.key)
            if pts:
                b = ctx.abs_bin("conflict")
                gate = {g1: -1.0, d1: -1.0, g2: -1.0, d2: -1.0}
                for p in pts:
                    off = p.dist_a / c1.speed - p.dist_b / c2.speed
                    m.add_ge({t1: 1.0, t2: -1.0}, s.tau - off, "conflict",
                             gate={**gate, b: 1.0}, gate_const=4.0)
                    m.add_ge({t2: 1.0, t1: -1.0}, s.tau + off, "conflict",
                             gate={**gate, b: -1.0}, gate_const=5.0)
            if c2.key == c1.reverse_key:
                # head-on: opposite traversals of one path must not overlap
                pi = m.binary(f"pi.{w1}.{w2}.{a1}.{k1}.{c1.to_arm}.{c1.to_lane}",
                              family="pi")
                gate = {g1: -1.0, d1: -1.0, g2: -1.0, d2: -1.0}
                # either w1 enters the path at least tau after w2 has left it
                m.add_ge({ctx.tout(w1, a1): 1.0, ctx.tin(w2, a1): -1.0}, s.tau,
                         "conflict", gate={**gate, pi: 1.0}, gate_const=4.0)
                # or w2 enters it at least tau after w1 has left it
                m.add_ge({ctx.tout(w2, a3): 1.0, ctx.tin(w1, a3): -1.0}, s.tau,
                         "conflict", gate={**gate, pi: -1.0}, gate_const=5.0)


def add_conflict_frozen(ctx: _Ctx, v1: VehicleSnapshot, fz: FrozenView):
    s, m, geo = ctx.s, ctx.model, ctx.s.geometry
    w1 = v1.id
    for a1, k1, c1 in ctx.candidates[w1]:
        g1 = ctx.g(w1, a1, c1.to_arm)
        d1 = ctx.d(w1, a1, k1, s.T)
        t1 = ctx.tout(w1, a1)
        for (key_f, enter_f, exit_f, conn_f) in fz.hops:
            pts = geo.conflicts_between(c1.key, key_f)
            if pts:
                b = ctx.abs_bin("conflict")
                gate = {g1: -1.0, d1: -1.0}
                for p in pts:
                    # frozen passing time at the conflict point is a constant
                    pass_f = enter_f + p.dist_b / conn_f.speed
                    m.add_ge({t1: 1.0}, s.tau + pass_f - p.dist_a / c1.speed,
                             "conflict", gate={**gate, b: 1.0}, gate_const=2.0)
                    m.add_ge({t1: -1.0}, s.tau - pass_f + p.dist_a / c1.speed,
                             "conflict", gate={**gate, b: -1.0}, gate_const=3.0)
            if key_f == c1.reverse_key:
                pi = m.binary(
                    f"pi.{w1}.f{fz.vehicle_id}.{a1}.{k1}.{c1.to_arm}.{c1.to_lane}",
                    family="pi")
                gate = {g1: -1.0, d1: -1.0}
                m.add_ge({t1: 1.0}, s.tau + exit_f, "conflict",
                         gate={**gate, pi: 1.0}, gate_const=2.0)
                m.add_ge({ctx.tin(w1, c1.to_arm): -1.0}, s.tau - enter_f, "conflict",
                         gate={**gate, pi: -1.0}, gate_const=3.0)


def set_objective(ctx: _Ctx):
    s, m = ctx.s, ctx.model
    for veh in ctx.s.decision:
        w = veh.id
        m.obj_add(ctx.tout(w, veh.a_out), s.w1)
        for a in sorted(ctx.a_sets[w]):
            if a == veh.a_out:
                continue
            for t in range(s.T + 1):
                m.obj_add(ctx.x(w, a, t), s.w2)


def build_model(snapshot: Snapshot) -> tuple[MilpModel, _Ctx]:
    """Assemble the full MILP for one optimization instant."""
    ids = [v.id for v in snapshot.decision]
    if len(set(ids)) != len(ids):
        raise BuildError("duplicate decision vehicle ids")
    for veh in snapshot.decision:
        if veh.a0 not in snapshot.geometry.arms or veh.a_out not in snapshot.geometry.arms:
            raise BuildError(f"vehicle {veh.id}: unknown arm")
        a_set = veh.a_set(snapshot.geometry)
        if veh.a0 not in a_set:
            raise BuildError(f"vehicle {veh.id}: current arm not in remaining set")
        if veh.a_out not in a_set:
            raise BuildError(f"vehicle {veh.id}: destination already visited")
    ctx = _Ctx(snapshot)
    for veh in snapshot.decision:
        add_variables(ctx, veh)
    for veh in snapshot.decision:
        add_variable_domains(ctx, veh)
        add_boundary_conditions(ctx, veh)
        add_route_constraints(ctx, veh)
        add_motion_constraints(ctx, veh)
        add_lane_choice_constraints(ctx, veh)
        add_arm_transition_constraints(ctx, veh)
        add_no_lane_change_zone(ctx, veh)
    for v1, v2 in itertools.combinations(snapshot.decision, 2):
        add_spatial_gap_between(ctx, v1, v2)
        add_temporal_gap_between(ctx, v1, v2)
        add_conflict_between(ctx, v1, v2)
    for v1 in snapshot.decision:
        for fz in ctx.frozen_views:
            add_spatial_gap_frozen(ctx, v1, fz)
            add_temporal_gap_frozen(ctx, v1, fz)
            add_conflict_frozen(ctx, v1, fz)
    set_objective(ctx)
    return ctx.model, ctx


# ---------------------------------------------------------------------------
# solution -> plans


def extract_plans(ctx: _Ctx, values: dict[str, float]) -> list[TrajectoryPlan]:
    s, geo = ctx.s, ctx.s.geometry
    out = []
    for veh in s.decision:
        w = veh.id
        route = [veh.a0]
        hops: list[ConnKey] = []
        while route[-1] != veh.a_out:
            a1 = route[-1]
            nxt = [a2 for a2 in sorted(geo.arms)
                   if a2 != a1 and values.get(ctx.g(w, a1, a2), 0.0) > 0.5]
            if len(nxt) != 1:
                raise BuildError(f"vehicle {w}: ill-formed route out of arm {a1}")
            a2 = nxt[0]
            k1s = [k for k in geo.lanes_between(a1, a2)
                   if values.get(ctx.d(w, a1, k, s.T), 0.0) > 0.5]
            if len(k1s) != 1:
                raise BuildError(f"vehicle {w}: ambiguous leave lane in arm {a1}")
            conn = geo.connector(a1, k1s[0], a2)
            hops.append(conn.key)
            route.append(a2)
            if len(route) > len(geo.arms):
                raise BuildError(f"vehicle {w}: route does not terminate")
        arms: dict[int, ArmPassage] = {}
        for i, a in enumerate(route):
            lanes = []
            for t in range(s.T + 1):
                occ = tuple(k for k in geo.arms[a].lanes
                            if values.get(ctx.d(w, a, k, t), 0.0) > 0.5)
                lanes.append(occ)
            x = [values[ctx.x(w, a, t)] for t in range(s.T + 1)]
            drs = [int(round(values[ctx.dir(w, a, t)])) for t in range(s.T + 1)]
            pulses = [t for t in range(s.T + 1)
                      if values.get(ctx.ta(w, a, t), 0.0) > 0.5]
            is_dest = a == veh.a_out
            leave_lane = None
            conn_speed = None
            if not is_dest:
                leave_lane = hops[i][1]
                conn_speed = geo.connectors[hops[i]].speed
            else:
                k_out = [k for k in s.exit_lanes[a]
                         if values.get(ctx.d(w, a, k, s.T), 0.0) > 0.5]
                leave_lane = k_out[0] if k_out else None
            arms[a] = ArmPassage(
                arm=a,
                t_enter=s.t0 + values[ctx.tin(w, a)],
                t_leave=s.t0 + values[ctx.tout(w, a)],
                is_destination=is_dest, x=x, lanes=lanes, dir=drs,
                ta_pulses=pulses, leave_lane=leave_lane, conn_speed=conn_speed)
        obj = s.w1 * values[ctx.tout(w, veh.a_out)] + s.w2 * sum(
            values[ctx.x(w, a, t)]
            for a in sorted(ctx.a_sets[w]) if a != veh.a_out
            for t in range(s.T + 1))
        out.append(TrajectoryPlan(
            vehicle_id=w, t0=s.t0, dt=s.dt, horizon=s.T, route=route, hops=hops,
            arms=arms, a_out=veh.a_out,
            exit_lane=arms[veh.a_out].leave_lane,
            arrival_time=veh.arrival_time, objective=obj))
    return out
