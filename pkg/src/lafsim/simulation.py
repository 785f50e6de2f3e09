"""Rolling-horizon simulation of the intersection controller.

Vehicles arrive on a sampled schedule, queue outside the control zone until
their entry lane is clear, and are planned jointly the moment they are
admitted.  Each solve optimizes the newly admitted vehicles against the
committed trajectories of everyone already inside, which are frozen as
constants.  The planning horizon adapts: it inflates when a solve is
infeasible and shrinks toward the longest remaining committed trajectory.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .builder import Snapshot, VehicleSnapshot, freeze_vehicle  # noqa: F401
from .plan import TrajectoryPlan
from .scenario import Arrival, ScenarioConfig, generate_arrivals
from .solver import solve_snapshot
from .verify import VerifyParams, verify

ENTRY_BLOCK_STEPS = 3       # lane must be clear now and this many steps ahead
DRAIN_GRACE = 600.0         # extra simulated seconds allowed to empty the zone


class SimulationError(RuntimeError):
    pass


def inflate_horizon(T: int, dT: int) -> int:
    """Horizon after an infeasible solve."""
    return T + 2 * dT


def shrink_horizon(T: int, remaining: float, dt: float, dT: int) -> int:
    """Horizon after a successful solve: never below the steps needed by
    the latest committed departure, never shrinking by more than dT."""
    return max(math.ceil(remaining / dt), T - dT, dT)


@dataclass
class VehicleRecord:
    arrival: Arrival
    admitted: float | None = None     # control-zone entry, s
    entry_lane: int | None = None
    departed: float | None = None     # cleared the exit link, s
    delay: float | None = None

    @property
    def finished(self) -> bool:
        return self.departed is not None


@dataclass
class SimulationResult:
    config: ScenarioConfig
    records: dict[int, VehicleRecord]
    plans: dict[int, TrajectoryPlan]
    events: list[dict]
    horizon_history: list[tuple[float, int]]
    aborted: bool = False
    message: str = ""
    failed_snapshot: dict | None = None   # dump of the instant that failed

    @property
    def finished_records(self) -> list[VehicleRecord]:
        return [r for r in self.records.values() if r.finished]


def _blocked_lanes(active: list[TrajectoryPlan], now: float, dt: float,
                   d_gap: float, geo) -> set[tuple[int, int]]:
    """(arm, lane) pairs too close to the control-zone entry for a new
    admission, now or within the next few steps."""
    blocked: set[tuple[int, int]] = set()
    for plan in active:
        arm = plan.route[0]
        L = geo.arms[arm].link_length
        p = plan.arms[arm]
        for j in range(ENTRY_BLOCK_STEPS + 1):
            t = now + j * dt
            if not plan.in_link(arm, t, eps=-1e-9):
                continue
            step = round((t - plan.t0) / plan.dt)
            if not 0 <= step <= plan.horizon:
                continue
            if p.x[step] >= L - d_gap - 1e-9:
                for lane in p.lanes[step]:
                    blocked.add((arm, lane))
    return blocked


def _pick_entry_lane(arrival: Arrival, blocked: set[tuple[int, int]],
                     approach: tuple[int, ...]) -> int | None:
    if (arrival.origin, arrival.entry_lane) not in blocked:
        return arrival.entry_lane
    for lane in approach:
        if (arrival.origin, lane) not in blocked:
            return lane
    return None


def run_simulation(config: ScenarioConfig,
                   arrivals: list[Arrival] | None = None) -> SimulationResult:
    geo = config.geometry
    dt = config.dt
    if arrivals is None:
        arrivals = generate_arrivals(config)
    arrivals = sorted(arrivals, key=lambda a: (a.time, a.vehicle_id))
    approach = {a: tuple(config.approach_lanes(a)) for a in geo.arms}
    exits = {a: tuple(config.exit_lanes(a)) for a in geo.arms}

    records = {a.vehicle_id: VehicleRecord(arrival=a) for a in arrivals}
    plans: dict[int, TrajectoryPlan] = {}
    active: list[TrajectoryPlan] = []
    events: list[dict] = []
    horizon_history: list[tuple[float, int]] = []
    T = config.T0
    next_arrival = 0
    queue: list[Arrival] = []
    aborted = False
    message = ""
    failed_snapshot: dict | None = None
    vparams = VerifyParams(tau=config.tau, d_gap=config.d_gap,
                           T_turn=config.T_turn, exit_lanes=exits,
                           approach_lanes=approach)

    def log(kind: str, t: float, **data):
        events.append({"t": round(t, 6), "kind": kind, **data})

    max_time = config.sim_duration + (DRAIN_GRACE if config.drain else 0.0)
    step = 0
    while True:
        now = step * dt
        if now > max_time + 1e-9:
            if config.drain and (queue or active):
                aborted = True
                message = (f"zone did not drain within {DRAIN_GRACE}s past "
                           "the demand end")
            break

        # departures
        still = []
        for plan in active:
            rec = records[plan.vehicle_id]
            if rec.departed is None and plan.depart_time <= now + 1e-9:
                rec.departed = plan.depart_time
                rec.delay = (plan.depart_time - rec.arrival.time
                             - config.free_flow_time(rec.arrival.origin,
                                                     rec.arrival.destination)
                             - config.exit_link_time(rec.arrival.destination))
                log("departure", plan.depart_time, vehicle=plan.vehicle_id,
                    delay=round(rec.delay, 6))
            # keep recently departed plans: their last moves can still
            # constrain a vehicle admitted within the safety gap
            if plan.depart_time + config.tau > now:
                still.append(plan)
        active = still

        # newly scheduled arrivals join the queue
        while next_arrival < len(arrivals) and \
                arrivals[next_arrival].time <= now + 1e-9:
            arr = arrivals[next_arrival]
            next_arrival += 1
            queue.append(arr)
            log("arrival", arr.time, vehicle=arr.vehicle_id,
                origin=arr.origin, destination=arr.destination)

        # admissions
        blocked = _blocked_lanes(active, now, dt, config.d_gap, geo)
        admitted: list[VehicleSnapshot] = []
        waiting: list[Arrival] = []
        for arr in queue:
            lane = _pick_entry_lane(arr, blocked, approach[arr.origin])
            if lane is None:
                waiting.append(arr)
                continue
            blocked.add((arr.origin, lane))
            records[arr.vehicle_id].entry_lane = lane
            admitted.append(VehicleSnapshot(
                id=arr.vehicle_id, a0=arr.origin, a_out=arr.destination,
                x_now=geo.arms[arr.origin].link_length, lane_now=lane,
                dir_now=0, t_enter_link=0.0, arrival_time=arr.time))
        queue = waiting

        if admitted:
            snap = Snapshot(
                geometry=geo, t0=now, dt=dt, T=T, tau=config.tau,
                d_gap=config.d_gap, T_turn=config.T_turn, w1=config.w1,
                w2=config.w2, mode=config.mode, decision=admitted,
                frozen=list(active), approach_lanes=approach,
                exit_lanes=exits)
            result = None
            for attempt in range(config.max_inflations + 1):
                snap.T = T
                result = solve_snapshot(snap, time_limit=config.time_limit)
                if result.ok:
                    break
                if result.status == "infeasible":
                    T = inflate_horizon(T, config.dT)
                    log("inflate", now, T=T)
                    continue
                break   # time limit with no incumbent: inflating cannot help
            if result is None or not result.ok:
                aborted = True
                message = (f"solve failed at t={now}: "
                           f"{result.status if result else 'no attempt'}")
                failed_snapshot = snap.to_dict()
                log("abort", now, status=result.status if result else "none",
                    detail=result.message if result else "")
                break
            # independent safety check before committing the new plans
            bad = verify(list(result.plans) + active, geo, vparams)
            if bad:
                aborted = True
                message = (f"verifier rejected the solution at t={now}: "
                           f"{bad[0]}")
                failed_snapshot = snap.to_dict()
                log("abort", now, status="verify_failed",
                    detail=str(bad[0]), count=len(bad))
                break
            for plan in result.plans:
                plans[plan.vehicle_id] = plan
                active.append(plan)
                rec = records[plan.vehicle_id]
                rec.admitted = now
                log("admission", now, vehicle=plan.vehicle_id,
                    lane=rec.entry_lane, route=plan.route)
            log("solve", now, T=T, vehicles=[v.id for v in admitted],
                objective=round(result.objective, 6),
                leaves=result.n_leaves,
                solve_time=round(result.solve_time, 3))

            # shrink the horizon toward the longest remaining trajectory
            remaining = max((p.depart_time - now for p in active),
                            default=0.0)
            T = shrink_horizon(T, remaining, dt, config.dT)
            horizon_history.append((now, T))

        done_demand = next_arrival >= len(arrivals)
        if done_demand and not queue and not active:
            break
        if not config.drain and now >= config.sim_duration:
            break
        step += 1

    return SimulationResult(config=config, records=records, plans=plans,
                            events=events, horizon_history=horizon_history,
                            aborted=aborted, message=message,
                            failed_snapshot=failed_snapshot)
