"""Committed vehicle trajectories.

A TrajectoryPlan is the physical interpretation of one vehicle's slice of a
MILP solution: the route (ordered arms + connectors), per-arm entry/leaving
times (continuous, absolute seconds), and per-step position / lane /
direction series on the plan's time grid.  Plans are immutable once
committed; later optimizations treat them as constants.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

from .geometry import ConnKey


@dataclass
class ArmPassage:
    arm: int
    t_enter: float                 # absolute s; entering the arm's link
    t_leave: float                 # absolute s; leaving the link (or the zone, if dest)
    is_destination: bool
    x: list[float]                 # signed distance to stop bar per step, full grid
    lanes: list[tuple[int, ...]]   # occupied lanes per step
    dir: list[int]                 # 1 = moving away from the stop line
    ta_pulses: list[int] = field(default_factory=list)  # turn-around start steps
    leave_lane: int | None = None  # lane in which the link is left
    conn_speed: float | None = None  # speed on the outgoing connector


@dataclass
class TrajectoryPlan:
    vehicle_id: int
    t0: float                      # absolute time of grid step 0, s
    dt: float
    horizon: int                   # grid covers steps 0..horizon
    route: list[int]               # arms in visiting order (first = arm at t0)
    hops: list[ConnKey]            # connector per consecutive arm pair
    arms: dict[int, ArmPassage]
    a_out: int
    exit_lane: int | None
    arrival_time: float            # scheduled control-zone entry (delay reference)
    objective: float | None = None

    # -- time helpers -----------------------------------------------------------
    def step_of(self, t_abs: float) -> float:
        return (t_abs - self.t0) / self.dt

    def time_of(self, step: int) -> float:
        return self.t0 + step * self.dt

    @property
    def depart_time(self) -> float:
        return self.arms[self.a_out].t_leave

    def grid_offset(self, t0_new: float) -> int:
        off = (t0_new - self.t0) / self.dt
        r = round(off)
        if abs(off - r) > 1e-6:
            raise ValueError(f"plan grid misaligned: offset {off} steps")
        return r

    # -- per-step physical state -------------------------------------------------
    def in_link(self, arm: int, t_abs: float, eps: float = 1e-6) -> bool:
        p = self.arms.get(arm)
        return p is not None and p.t_enter + eps < t_abs < p.t_leave - eps

    def x_at(self, arm: int, step_abs: int) -> float | None:
        """x in `arm` at an absolute grid step (None outside the stored grid)."""
        p = self.arms.get(arm)
        if p is None:
            return None
        i = step_abs
        if 0 <= i < len(p.x):
            return p.x[i]
        return None

    def lanes_at(self, arm: int, step: int) -> tuple[int, ...]:
        p = self.arms.get(arm)
        if p is None or not (0 <= step < len(p.lanes)):
            return ()
        return p.lanes[step]

    def current_arm(self, t_abs: float) -> int | None:
        """Arm whose link the vehicle occupies at t_abs (None if in a
        connector or departed)."""
        for arm in self.route:
            p = self.arms[arm]
            if t_abs < p.t_enter - 1e-9:
                return None  # still in the connector towards this arm
            if t_abs <= p.t_leave + 1e-9 if p.is_destination else t_abs < p.t_leave - 1e-9:
                return arm
        return None

    def visited_before(self, t_abs: float) -> list[int]:
        """Arms whose link has been entered at or before t_abs."""
        return [a for a in self.route if self.arms[a].t_enter <= t_abs + 1e-9]

    def hop_after(self, arm: int) -> ConnKey | None:
        try:
            i = self.route.index(arm)
        except ValueError:
            return None
        return self.hops[i] if i < len(self.hops) else None

    # -- serialization -------------------------------------------------------------
    def to_dict(self) -> dict:
        return {
            "vehicle_id": self.vehicle_id, "t0": self.t0, "dt": self.dt,
            "horizon": self.horizon, "route": self.route,
            "hops": [list(h) for h in self.hops],
            "a_out": self.a_out, "exit_lane": self.exit_lane,
            "arrival_time": self.arrival_time, "objective": self.objective,
            "arms": {
                str(a): {
                    "arm": p.arm, "t_enter": p.t_enter, "t_leave": p.t_leave,
                    "is_destination": p.is_destination, "x": p.x,
                    "lanes": [list(l) for l in p.lanes], "dir": p.dir,
                    "ta_pulses": p.ta_pulses, "leave_lane": p.leave_lane,
                    "conn_speed": p.conn_speed,
                } for a, p in self.arms.items()
            },
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TrajectoryPlan":
        arms = {
            int(a): ArmPassage(
                arm=p["arm"], t_enter=p["t_enter"], t_leave=p["t_leave"],
                is_destination=p["is_destination"], x=list(p["x"]),
                lanes=[tuple(l) for l in p["lanes"]], dir=list(p["dir"]),
                ta_pulses=list(p.get("ta_pulses", [])),
                leave_lane=p.get("leave_lane"), conn_speed=p.get("conn_speed"),
            ) for a, p in d["arms"].items()
        }
        return cls(vehicle_id=d["vehicle_id"], t0=d["t0"], dt=d["dt"],
                   horizon=d["horizon"], route=list(d["route"]),
                   hops=[tuple(h) for h in d["hops"]], arms=arms,
                   a_out=d["a_out"], exit_lane=d.get("exit_lane"),
                   arrival_time=d["arrival_time"], objective=d.get("objective"))

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def occupied_x(plan: TrajectoryPlan, arm: int, t_abs: float) -> float | None:
    """x of the vehicle in `arm`'s link at absolute time t_abs, on-grid, or
    None when it is not strictly inside the link then."""
    if not plan.in_link(arm, t_abs):
        return None
    step = (t_abs - plan.t0) / plan.dt
    i = round(step)
    if abs(step - i) > 1e-6 or not (0 <= i < len(plan.arms[arm].x)):
        return None
    return plan.arms[arm].x[i]


def plans_consistent(plan: TrajectoryPlan, tol: float = 1e-6) -> list[str]:
    """Internal consistency: event times ordered, x matches the entry/leave
    envelope at the boundary steps, lanes non-empty while in the link."""
    bad: list[str] = []
    for arm in plan.route:
        p = plan.arms[arm]
        if p.t_leave < p.t_enter - tol:
            bad.append(f"arm {arm}: t_leave < t_enter")
        if not math.isfinite(p.t_enter) or not math.isfinite(p.t_leave):
            bad.append(f"arm {arm}: non-finite event time")
    for i, hop in enumerate(plan.hops):
        a1, _, a2, _ = hop
        if (a1, a2) != (plan.route[i], plan.route[i + 1]):
            bad.append(f"hop {i} {hop} does not match route {plan.route}")
    return bad
