"""Scenario configuration: demand, control parameters and arrival streams.

A scenario bundles the intersection geometry, an origin-destination demand
matrix (veh/h), and the control/simulation parameters.  Arrivals are drawn
from independent Poisson processes per OD pair; the generator enforces a
minimum same-lane entry headway by deferring the later vehicle.
"""

from __future__ import annotations

import configparser
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .geometry import GeometryError, IntersectionGeometry, default_intersection, load_geometry

LAF = "laf"
ALAF = "alaf"

#: demand matrix of the standard four-arm case, veh/h (origin -> destination)
DEFAULT_DEMAND: dict[tuple[int, int], float] = {
    (1, 2): 90.0, (1, 3): 150.0, (1, 4): 30.0,
    (2, 1): 30.0, (2, 3): 40.0, (2, 4): 50.0,
    (3, 1): 150.0, (3, 2): 30.0, (3, 4): 90.0,
    (4, 1): 40.0, (4, 2): 50.0, (4, 3): 20.0,
}


class ScenarioError(ValueError):
    pass


@dataclass(frozen=True)
class Arrival:
    vehicle_id: int
    time: float          # scheduled control-zone entry time, s
    origin: int
    destination: int
    entry_lane: int      # preferred lane; the simulation may reassign if blocked


@dataclass
class ScenarioConfig:
    geometry: IntersectionGeometry
    demand: dict[tuple[int, int], float]
    dt: float = 0.5
    demand_factor: float = 1.0     # alpha: scales the whole demand matrix
    sim_duration: float = 300.0
    warmup: float = 20.0
    seed: int = 1
    tau: float = 1.5               # temporal safety gap, s
    d_gap: float = 5.0             # spatial safety gap, m
    T0: int = 30                   # initial horizon, steps
    dT: int = 2                    # horizon adaptation increment, steps
    T_turn: int = 4                # steps a turn-around blocks two lanes
    w1: float = 300.0              # weight on leaving times
    w2: float = 1.0                # weight on distances to stop bars
    time_limit: float = 60.0       # per-solve wall clock limit, s
    mode: str = LAF                # "laf" or "alaf"
    max_inflations: int = 10
    drain: bool = True             # let admitted vehicles finish after sim_duration
    sweep: dict[str, list[float]] = field(default_factory=dict)

    def __post_init__(self):
        if self.mode not in (LAF, ALAF):
            raise ScenarioError(f"unknown mode {self.mode!r}")
        if self.dt <= 0 or self.T0 <= 0 or self.dT <= 0:
            raise ScenarioError("dt, T0 and dT must be positive")
        if self.tau < 0 or self.d_gap < 0:
            raise ScenarioError("safety gaps must be non-negative")
        if not self.w1 > self.w2 > 0:
            raise ScenarioError("w1 must exceed w2 and both must be positive")
        arms = self.geometry.arms
        for (o, d), rate in self.demand.items():
            if o not in arms or d not in arms:
                raise ScenarioError(f"demand references unknown arm in {(o, d)}")
            if o == d:
                raise ScenarioError(f"self-loop demand {(o, d)} is not supported")
            if rate < 0:
                raise ScenarioError(f"negative demand for {(o, d)}")
            if not self.geometry.lanes_between(o, d):
                raise ScenarioError(f"demand {(o, d)} has no connector")

    # -- lane roles -----------------------------------------------------------
    def approach_lanes(self, arm: int) -> list[int]:
        """Lanes a vehicle may occupy while approaching the stop bar.

        Free mode: every lane.  Allocated mode: the right half of the arm
        (higher indices) approaches, the left half is reserved for exiting."""
        lanes = list(self.geometry.arms[arm].lanes)
        if self.mode == ALAF:
            return lanes[len(lanes) // 2:]
        return lanes

    def exit_lanes(self, arm: int) -> list[int]:
        """K_out: lanes in which a vehicle may leave through the exit link."""
        lanes = list(self.geometry.arms[arm].lanes)
        if self.mode == ALAF:
            return lanes[: len(lanes) // 2]
        return lanes

    # -- derived quantities ---------------------------------------------------
    def free_flow_time(self, origin: int, destination: int) -> float:
        """Unobstructed origin-link + fastest-connector travel time for the
        direct movement (the exit link is accounted separately)."""
        arm = self.geometry.arms[origin]
        return arm.link_length / arm.speed_limit + self.geometry.min_connector_time(
            origin, destination)

    def exit_link_time(self, destination: int) -> float:
        arm = self.geometry.arms[destination]
        return arm.link_length / arm.speed_limit

    def scaled_demand(self) -> dict[tuple[int, int], float]:
        return {od: self.demand_factor * r for od, r in self.demand.items()}

    def entry_headway(self, arm: int) -> float:
        """Minimum same-lane headway between scheduled entries."""
        a = self.geometry.arms[arm]
        return self.d_gap / a.speed_limit


def generate_arrivals(config: ScenarioConfig) -> list[Arrival]:
    """Sample the arrival stream for one run.

    Each OD pair is an independent Poisson process over [0, sim_duration).
    Entry lanes are drawn uniformly among the approach lanes of the origin
    arm.  Two arrivals scheduled into the same lane of the same arm closer
    than the entry headway are separated by deferring the later one.
    Deterministic for a fixed (seed, demand, duration)."""
    rng = np.random.default_rng(config.seed)
    raw: list[tuple[float, int, int]] = []
    for (o, d) in sorted(config.demand):
        rate = config.demand_factor * config.demand[(o, d)] / 3600.0  # veh/s
        if rate <= 0:
            continue
        t = 0.0
        while True:
            t += rng.exponential(1.0 / rate)
            if t >= config.sim_duration:
                break
            raw.append((t, o, d))
    raw.sort()
    arrivals: list[Arrival] = []
    last_entry: dict[tuple[int, int], float] = {}
    for i, (t, o, d) in enumerate(raw):
        lanes = config.approach_lanes(o)
        lane = int(rng.choice(lanes))
        headway = config.entry_headway(o)
        t_eff = max(t, last_entry.get((o, lane), -math.inf) + headway)
        last_entry[(o, lane)] = t_eff
        arrivals.append(Arrival(i, t_eff, o, d, lane))
    arrivals.sort(key=lambda a: (a.time, a.vehicle_id))
    return arrivals


# ---------------------------------------------------------------------------
# file format


def _parse_demand(cp: configparser.ConfigParser) -> dict[tuple[int, int], float]:
    if not cp.has_section("demand"):
        return dict(DEFAULT_DEMAND)
    sec = cp["demand"]
    arms = [int(x) for x in sec.get("arms", "1 2 3 4").split()]
    demand: dict[tuple[int, int], float] = {}
    for key, val in sec.items():
        if key == "arms":
            continue
        if "-" in key:
            # single-pair form: "o-d = veh/h"
            try:
                o, d = (int(x) for x in key.split("-"))
                demand[(o, d)] = float(val)
            except ValueError as exc:
                raise ScenarioError(f"bad demand entry {key!r}") from exc
            continue
        try:
            o = int(key)
        except ValueError as exc:
            raise ScenarioError(f"bad demand row key {key!r}") from exc
        cells = val.split()
        if len(cells) != len(arms):
            raise ScenarioError(
                f"demand row {o}: expected {len(arms)} cells, got {len(cells)}")
        for d, cell in zip(arms, cells):
            if cell in ("-", "."):
                continue
            try:
                rate = float(cell)
            except ValueError as exc:
                raise ScenarioError(f"bad demand cell {cell!r} in row {o}") from exc
            if rate > 0:
                demand[(o, d)] = rate
    return demand


_PARAM_TYPES = {
    "dt": float, "demand_factor": float, "sim_duration": float, "warmup": float,
    "seed": int, "tau": float, "d_gap": float, "T0": int, "dT": int,
    "T_turn": int, "w1": float, "w2": float, "time_limit": float,
    "mode": str, "max_inflations": int, "drain": None,
}


def load_scenario(path: str) -> ScenarioConfig:
    """Read a scenario file (INI-style; see README for the format)."""
    cp = configparser.ConfigParser()
    if not cp.read(path):
        raise ScenarioError(f"cannot read scenario file {path}")
    params: dict = {}
    if cp.has_section("parameters"):
        for key, val in cp.items("parameters"):
            if key not in _PARAM_TYPES:
                raise ScenarioError(f"unknown parameter {key!r}")
            if key == "drain":
                params[key] = cp["parameters"].getboolean("drain")
            else:
                params[key] = _PARAM_TYPES[key](val)
    if cp.has_section("geometry"):
        sec = cp["geometry"]
        if "file" in sec:
            geometry = load_geometry(sec["file"])
        else:
            from .geometry import build_intersection
            geometry = build_intersection({k: v for k, v in sec.items()})
    else:
        geometry = default_intersection()
    sweep: dict[str, list[float]] = {}
    if cp.has_section("sweep"):
        for key, val in cp.items("sweep"):
            sweep[key] = [float(x) for x in val.replace(",", " ").split()]
    try:
        return ScenarioConfig(geometry=geometry, demand=_parse_demand(cp),
                              sweep=sweep, **params)
    except GeometryError as exc:
        raise ScenarioError(str(exc)) from exc


def with_left_turn_ratio(config: ScenarioConfig, ratio: float) -> ScenarioConfig:
    """Reshape the demand so that `ratio` of each origin's volume turns
    left, keeping per-origin totals fixed.  The remaining volume is split
    over the origin's other movements in proportion to their base rates."""
    if not 0.0 <= ratio < 1.0:
        raise ScenarioError(f"left-turn ratio {ratio} outside [0, 1)")
    from .geometry import LEFT, classify_movement
    arms = config.geometry.arms
    new_demand: dict[tuple[int, int], float] = {}
    for o in sorted({o for o, _ in config.demand}):
        rows = {d: r for (oo, d), r in config.demand.items() if oo == o}
        total = sum(rows.values())
        lefts = [d for d in rows
                 if classify_movement(arms[o], arms[d]) == LEFT]
        if not lefts:
            lefts = [d for d in arms
                     if d != o and config.geometry.lanes_between(o, d)
                     and classify_movement(arms[o], arms[d]) == LEFT]
            if not lefts:
                raise ScenarioError(f"arm {o} has no left-turn movement")
        left_base = sum(rows.get(d, 0.0) for d in lefts)
        other = {d: r for d, r in rows.items() if d not in lefts}
        other_base = sum(other.values())
        for d in lefts:
            share = rows.get(d, 0.0) / left_base if left_base else 1.0 / len(lefts)
            new_demand[(o, d)] = ratio * total * share
        for d, r in other.items():
            new_demand[(o, d)] = (1.0 - ratio) * total * r / other_base
    new_demand = {od: r for od, r in new_demand.items() if r > 0}
    return replace(config, demand=new_demand)


def left_turn_ratio(config: ScenarioConfig) -> float:
    """Share of total demand on left-turn movements."""
    from .geometry import LEFT, classify_movement
    arms = config.geometry.arms
    total = sum(config.demand.values())
    left = sum(r for (o, d), r in config.demand.items()
               if classify_movement(arms[o], arms[d]) == LEFT)
    return left / total if total else 0.0


def default_scenario(**overrides) -> ScenarioConfig:
    geometry = overrides.pop("geometry", None) or default_intersection()
    cfg = ScenarioConfig(geometry=geometry, demand=dict(DEFAULT_DEMAND))
    return replace(cfg, **overrides) if overrides else cfg
