"""Intersection geometry: arms, lanes, connectors and conflict points.

An intersection is a set of *arms* (bidirectional road segments radiating
from a central area).  Each arm carries ``n_lanes`` lanes that are not
pre-allocated to a driving direction.  Lanes are indexed 1..n_lanes from the
left when facing the stop line.  Vehicles cross the central area on
*connectors*: curves that join a lane of one arm (at its stop bar) to a lane
of another arm.  Through connectors are straight segments; turns are
circular arcs tangent to the approach/exit headings.

Conflict points between connector pairs are computed analytically
(segment/segment, segment/arc, arc/arc) and stored with the arc-length
distance from the start of each connector.
"""

from __future__ import annotations

import configparser
import math
from dataclasses import dataclass, field

TOL = 1e-6

LEFT = "left"
THROUGH = "through"
RIGHT = "right"


class GeometryError(ValueError):
    pass


# ---------------------------------------------------------------------------
# centerline primitives


@dataclass(frozen=True)
class Segment:
    x0: float
    y0: float
    x1: float
    y1: float

    @property
    def length(self) -> float:
        return math.hypot(self.x1 - self.x0, self.y1 - self.y0)

    def point_at(self, s: float) -> tuple[float, float]:
        f = s / self.length
        return (self.x0 + f * (self.x1 - self.x0), self.y0 + f * (self.y1 - self.y0))


@dataclass(frozen=True)
class Arc:
    cx: float
    cy: float
    radius: float
    ang0: float      # angle of the start point, radians
    sweep: float     # signed sweep; positive = counter-clockwise
    span: float = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "span", abs(self.sweep))

    @property
    def length(self) -> float:
        return self.radius * self.span

    def angle_at(self, s: float) -> float:
        return self.ang0 + math.copysign(s / self.radius, self.sweep)

    def point_at(self, s: float) -> tuple[float, float]:
        a = self.angle_at(s)
        return (self.cx + self.radius * math.cos(a), self.cy + self.radius * math.sin(a))

    def param_of_angle(self, ang: float) -> float | None:
        """Arc length of the point at absolute angle ``ang``, or None if the
        angle lies outside the swept range (with tolerance)."""
        d = (ang - self.ang0) * math.copysign(1.0, self.sweep)
        d = d % (2.0 * math.pi)
        if d > self.span + TOL / max(self.radius, TOL):
            # also accept points a hair before the start
            if d > 2.0 * math.pi - TOL / max(self.radius, TOL):
                d = 0.0
            else:
                return None
        return min(d, self.span) * self.radius


Curve = Segment | Arc


def _seg_seg(a: Segment, b: Segment) -> list[tuple[float, float]]:
    dax, day = a.x1 - a.x0, a.y1 - a.y0
    dbx, dby = b.x1 - b.x0, b.y1 - b.y0
    den = dax * dby - day * dbx
    if abs(den) < 1e-12:
        return []  # parallel (collinear overlap not treated as a point conflict)
    t = ((b.x0 - a.x0) * dby - (b.y0 - a.y0) * dbx) / den
    u = ((b.x0 - a.x0) * day - (b.y0 - a.y0) * dax) / den
    if -TOL <= t <= 1 + TOL and -TOL <= u <= 1 + TOL:
        t = min(max(t, 0.0), 1.0)
        u = min(max(u, 0.0), 1.0)
        return [(t * a.length, u * b.length)]
    return []


def _seg_arc(seg: Segment, arc: Arc) -> list[tuple[float, float]]:
    # circle/line intersection, then filter by both parameter ranges
    dx, dy = seg.x1 - seg.x0, seg.y1 - seg.y0
    fx, fy = seg.x0 - arc.cx, seg.y0 - arc.cy
    a = dx * dx + dy * dy
    b = 2.0 * (fx * dx + fy * dy)
    c = fx * fx + fy * fy - arc.radius * arc.radius
    disc = b * b - 4.0 * a * c
    if disc < -1e-9:
        return []
    disc = max(disc, 0.0)
    out = []
    for sign in (-1.0, 1.0):
        t = (-b + sign * math.sqrt(disc)) / (2.0 * a)
        if t < -TOL or t > 1 + TOL:
            continue
        t = min(max(t, 0.0), 1.0)
        px, py = seg.x0 + t * dx, seg.y0 + t * dy
        s2 = arc.param_of_angle(math.atan2(py - arc.cy, px - arc.cx))
        if s2 is not None:
            out.append((t * seg.length, s2))
    return out


def _arc_arc(a: Arc, b: Arc) -> list[tuple[float, float]]:
    dx, dy = b.cx - a.cx, b.cy - a.cy
    d = math.hypot(dx, dy)
    if d < 1e-12:
        return []  # concentric: either disjoint or overlapping, no point conflicts
    if d > a.radius + b.radius + 1e-9 or d < abs(a.radius - b.radius) - 1e-9:
        return []
    # distance from a's center to the radical line
    h2 = a.radius * a.radius - ((d * d + a.radius * a.radius - b.radius * b.radius) / (2 * d)) ** 2
    h = math.sqrt(max(h2, 0.0))
    mx = a.cx + dx / d * (d * d + a.radius * a.radius - b.radius * b.radius) / (2 * d)
    my = a.cy + dy / d * (d * d + a.radius * a.radius - b.radius * b.radius) / (2 * d)
    pts = {(mx + h * (-dy / d), my + h * (dx / d)), (mx - h * (-dy / d), my - h * (dx / d))}
    out = []
    for px, py in pts:
        sa = a.param_of_angle(math.atan2(py - a.cy, px - a.cx))
        sb = b.param_of_angle(math.atan2(py - b.cy, px - b.cx))
        if sa is not None and sb is not None:
            out.append((sa, sb))
    return out


def curve_intersections(c1: Curve, c2: Curve) -> list[tuple[float, float]]:
    """All intersection points of two centerlines as (arc length on c1,
    arc length on c2) pairs."""
    if isinstance(c1, Segment) and isinstance(c2, Segment):
        return _seg_seg(c1, c2)
    if isinstance(c1, Segment) and isinstance(c2, Arc):
        return _seg_arc(c1, c2)
    if isinstance(c1, Arc) and isinstance(c2, Segment):
        return [(s1, s2) for (s2, s1) in _seg_arc(c2, c1)]
    return _arc_arc(c1, c2)


# ---------------------------------------------------------------------------
# arms / connectors


@dataclass(frozen=True)
class Arm:
    id: int
    n_lanes: int
    link_length: float
    speed_limit: float
    heading_deg: float  # outward direction of the arm, degrees CCW from +x

    @property
    def lanes(self) -> range:
        return range(1, self.n_lanes + 1)

    @property
    def u(self) -> tuple[float, float]:
        a = math.radians(self.heading_deg)
        return (math.cos(a), math.sin(a))


ConnKey = tuple[int, int, int, int]  # (from_arm, from_lane, to_arm, to_lane)


@dataclass(frozen=True)
class Connector:
    from_arm: int
    from_lane: int
    to_arm: int
    to_lane: int
    length: float
    speed: float
    movement: str  # left / through / right
    centerline: Curve | None = None

    @property
    def key(self) -> ConnKey:
        return (self.from_arm, self.from_lane, self.to_arm, self.to_lane)

    @property
    def reverse_key(self) -> ConnKey:
        return (self.to_arm, self.to_lane, self.from_arm, self.from_lane)

    @property
    def travel_time(self) -> float:
        return self.length / self.speed

    def point_at(self, s: float) -> tuple[float, float]:
        if self.centerline is None:
            raise GeometryError(f"connector {self.key} has no centerline")
        # declared length may override the geometric one; rescale the parameter
        g = self.centerline.length
        return self.centerline.point_at(min(max(s / self.length, 0.0), 1.0) * g)


@dataclass(frozen=True)
class ConflictPoint:
    a: ConnKey
    b: ConnKey
    dist_a: float  # arc length from the start of connector a
    dist_b: float


def _left(v: tuple[float, float]) -> tuple[float, float]:
    return (-v[1], v[0])


def classify_movement(from_arm: Arm, to_arm: Arm) -> str:
    """Classify a movement by the turn angle from the approach heading
    (-u of the origin arm) to the exit heading (+u of the destination)."""
    h = (-from_arm.u[0], -from_arm.u[1])
    e = to_arm.u
    cross = h[0] * e[1] - h[1] * e[0]
    dot = h[0] * e[0] + h[1] * e[1]
    ang = math.degrees(math.atan2(cross, dot))
    for target, name in ((0.0, THROUGH), (90.0, LEFT), (-90.0, RIGHT)):
        if abs(ang - target) < 1.0:
            return name
    raise GeometryError(
        f"cannot classify movement {from_arm.id}->{to_arm.id}: turn angle {ang:.1f} deg"
    )


def stopbar_point(arm: Arm, lane: int, radius: float, lane_width: float) -> tuple[float, float]:
    """Position of the stop-bar end of a lane's centerline.  Lane 1 is the
    leftmost lane when facing the stop line."""
    off = ((arm.n_lanes + 1) / 2.0 - lane) * lane_width
    lx, ly = _left((-arm.u[0], -arm.u[1]))
    return (radius * arm.u[0] + off * lx, radius * arm.u[1] + off * ly)


@dataclass
class IntersectionGeometry:
    arms: dict[int, Arm]
    connectors: dict[ConnKey, Connector]
    stopbar_radius: float = 0.0
    lane_width: float = 3.5
    successor: dict[tuple[int, int, int], int] = field(default_factory=dict)
    conflict_index: dict[tuple[ConnKey, ConnKey], tuple[ConflictPoint, ...]] = field(
        default_factory=dict
    )
    reverse_pairs: frozenset[frozenset[ConnKey]] = frozenset()

    def __post_init__(self):
        self._validate()
        if not self.successor:
            for c in self.connectors.values():
                self.successor[(c.from_arm, c.from_lane, c.to_arm)] = c.to_lane
        self.reverse_pairs = frozenset(
            frozenset((c.key, c.reverse_key))
            for c in self.connectors.values()
            if c.reverse_key in self.connectors
        )
        if not self.conflict_index:
            self._build_conflict_index()

    # -- validation / construction ------------------------------------------
    def _validate(self):
        for a, arm in self.arms.items():
            if arm.link_length <= 0:
                raise GeometryError(f"arm {a}: non-positive link length")
            if arm.speed_limit <= 0:
                raise GeometryError(f"arm {a}: non-positive speed limit")
            if len(arm.lanes) < 2:
                raise GeometryError(
                    f"arm {a}: needs at least 2 lanes (turn-arounds occupy "
                    "an adjacent lane)")
        seen: dict[tuple[int, int, int], ConnKey] = {}
        for c in self.connectors.values():
            if c.from_arm not in self.arms or c.to_arm not in self.arms:
                raise GeometryError(f"connector {c.key} references unknown arm")
            if c.from_lane not in self.arms[c.from_arm].lanes:
                raise GeometryError(f"connector {c.key}: from_lane out of range")
            if c.to_lane not in self.arms[c.to_arm].lanes:
                raise GeometryError(f"connector {c.key}: to_lane out of range")
            if c.length <= 0:
                raise GeometryError(f"connector {c.key}: zero or negative length")
            if c.speed <= 0:
                raise GeometryError(f"connector {c.key}: non-positive speed")
            trip = (c.from_arm, c.from_lane, c.to_arm)
            if trip in seen:
                raise GeometryError(
                    f"duplicate connector for lane {c.from_lane} of arm {c.from_arm} "
                    f"to arm {c.to_arm}: {seen[trip]} vs {c.key}"
                )
            seen[trip] = c.key

    def _build_conflict_index(self):
        keys = sorted(self.connectors)
        for i, k1 in enumerate(keys):
            for k2 in keys[i + 1:]:
                if self.is_reverse_pair(k1, k2):
                    continue
                pts = compute_conflict_points(self, self.connectors[k1], self.connectors[k2])
                if pts:
                    self.conflict_index[(k1, k2)] = tuple(pts)
                    self.conflict_index[(k2, k1)] = tuple(
                        ConflictPoint(p.b, p.a, p.dist_b, p.dist_a) for p in pts
                    )

    # -- queries --------------------------------------------------------------
    def connector(self, from_arm: int, from_lane: int, to_arm: int) -> Connector | None:
        k2 = self.successor.get((from_arm, from_lane, to_arm))
        if k2 is None:
            return None
        return self.connectors.get((from_arm, from_lane, to_arm, k2))

    def lanes_between(self, a1: int, a2: int) -> list[int]:
        """K_{a1}^{a2}: lanes of a1 from which a connector to a2 exists."""
        return [k for k in self.arms[a1].lanes if (a1, k, a2) in self.successor]

    def movements(self) -> list[tuple[int, int]]:
        return sorted({(c.from_arm, c.to_arm) for c in self.connectors.values()})

    def is_reverse_pair(self, k1: ConnKey, k2: ConnKey) -> bool:
        return frozenset((k1, k2)) in self.reverse_pairs

    def conflicts_between(self, k1: ConnKey, k2: ConnKey) -> tuple[ConflictPoint, ...]:
        return self.conflict_index.get((k1, k2), ())

    def min_connector_time(self, a1: int, a2: int) -> float:
        times = [
            c.travel_time for c in self.connectors.values()
            if c.from_arm == a1 and c.to_arm == a2
        ]
        if not times:
            raise GeometryError(f"no connector from arm {a1} to arm {a2}")
        return min(times)


def compute_conflict_points(
    geometry: IntersectionGeometry, c1: Connector, c2: Connector
) -> list[ConflictPoint]:
    """Conflict points between two distinct connectors.

    Reverse pairs (identical path, opposite direction) are excluded: their
    interaction is head-on and handled by the dedicated ordering constraint.
    Connectors diverging from the same lane share only the stop-bar point and
    produce no conflict point (separation at the stop bar covers divergence).
    Connectors converging into the same lane conflict at their shared end
    point.
    """
    if c1.key == c2.key:
        raise GeometryError("conflict points are defined for distinct connectors")
    if c1.key == c2.reverse_key:
        raise GeometryError("reverse pairs are handled as head-on, not as conflict points")
    if (c1.from_arm, c1.from_lane) == (c2.from_arm, c2.from_lane):
        return []
    pts: list[ConflictPoint] = []
    if (c1.to_arm, c1.to_lane) == (c2.to_arm, c2.to_lane):
        pts.append(ConflictPoint(c1.key, c2.key, c1.length, c2.length))
    if c1.centerline is not None and c2.centerline is not None:
        scale1 = c1.length / c1.centerline.length
        scale2 = c2.length / c2.centerline.length
        for s1, s2 in curve_intersections(c1.centerline, c2.centerline):
            d1, d2 = s1 * scale1, s2 * scale2
            if any(abs(d1 - p.dist_a) < TOL and abs(d2 - p.dist_b) < TOL for p in pts):
                continue
            pts.append(ConflictPoint(c1.key, c2.key, d1, d2))
    pts.sort(key=lambda p: (p.dist_a, p.dist_b))
    return pts


# ---------------------------------------------------------------------------
# construction helpers


def _auto_connector(
    arms: dict[int, Arm], a1: int, k1: int, a2: int,
    radius: float, lane_width: float, speeds: dict[str, float],
) -> Connector:
    """Build the connector from lane k1 of arm a1 into arm a2.

    The target lane mirrors the source index (k2 = n_lanes + 1 - k1), which is
    the unique choice for which the straight through segment lines up and the
    quarter-circle turn is tangent to both headings.
    """
    fa, ta = arms[a1], arms[a2]
    movement = classify_movement(fa, ta)
    k2 = ta.n_lanes + 1 - k1
    s = stopbar_point(fa, k1, radius, lane_width)
    e = stopbar_point(ta, k2, radius, lane_width)
    if movement == THROUGH:
        curve: Curve = Segment(s[0], s[1], e[0], e[1])
    else:
        h = (-fa.u[0], -fa.u[1])           # approach heading
        n1 = _left(h) if movement == LEFT else (-_left(h)[0], -_left(h)[1])
        n2 = _left(ta.u) if movement == LEFT else (-_left(ta.u)[0], -_left(ta.u)[1])
        # solve S + R*n1 = E + R*n2 for the radius
        dx, dy = e[0] - s[0], e[1] - s[1]
        nx, ny = n1[0] - n2[0], n1[1] - n2[1]
        den = nx * nx + ny * ny
        r = (dx * nx + dy * ny) / den
        if r <= 0:
            raise GeometryError(
                f"turn radius non-positive for connector ({a1},{k1})->({a2},{k2}); "
                "stop-bar radius too small for the lane layout"
            )
        if math.hypot(s[0] + r * n1[0] - e[0] - r * n2[0],
                      s[1] + r * n1[1] - e[1] - r * n2[1]) > 1e-7:
            raise GeometryError(f"no tangent arc for connector ({a1},{k1})->({a2},{k2})")
        cx, cy = s[0] + r * n1[0], s[1] + r * n1[1]
        ang0 = math.atan2(s[1] - cy, s[0] - cx)
        sweep = math.pi / 2 if movement == LEFT else -math.pi / 2
        curve = Arc(cx, cy, r, ang0, sweep)
    return Connector(a1, k1, a2, k2, curve.length, speeds[movement], movement, curve)


def build_intersection(config: dict) -> IntersectionGeometry:
    """Build an IntersectionGeometry from a plain configuration dict.

    Expected keys (all optional unless noted): ``n_arms``, ``lanes_per_arm``,
    ``link_length``, ``speed_limit``, ``lane_width``, ``stopbar_radius``,
    ``speed_left|through|right``, ``arms`` (explicit arm rows), ``connectors``
    (explicit connector rows; otherwise connectors are generated for every
    ordered arm pair and every lane).
    """
    lane_width = float(config.get("lane_width", 3.5))
    radius = float(config.get("stopbar_radius", 10.0))
    arms: dict[int, Arm] = {}
    if "arms" in config:
        for row in config["arms"]:
            a = Arm(int(row["id"]), int(row["n_lanes"]), float(row["link_length"]),
                    float(row["speed_limit"]), float(row["heading_deg"]))
            if a.id in arms:
                raise GeometryError(f"duplicate arm id {a.id}")
            arms[a.id] = a
    else:
        n_arms = int(config.get("n_arms", 4))
        lanes = int(config.get("lanes_per_arm", 4))
        length = float(config.get("link_length", 50.0))
        vmax = float(config.get("speed_limit", 10.0))
        if n_arms == 4:
            headings = [270.0, 180.0, 90.0, 0.0]  # arm 1 south, 2 west, 3 north, 4 east
        elif n_arms == 2:
            headings = [270.0, 90.0]
        else:
            raise GeometryError(f"auto layout supports 2 or 4 arms, got {n_arms}")
        for i, hd in enumerate(headings, start=1):
            arms[i] = Arm(i, lanes, length, vmax, hd)
    if len(arms) < 2:
        raise GeometryError("an intersection needs at least two arms")

    connectors: dict[ConnKey, Connector] = {}
    if "connectors" in config:
        for row in config["connectors"]:
            c = Connector(int(row["from_arm"]), int(row["from_lane"]),
                          int(row["to_arm"]), int(row["to_lane"]),
                          float(row["length"]), float(row["speed"]),
                          str(row.get("movement", "")) or classify_movement(
                              arms[int(row["from_arm"])], arms[int(row["to_arm"])]),
                          None)
            connectors[c.key] = c
    else:
        speeds = {
            LEFT: float(config.get("speed_left", 8.0)),
            THROUGH: float(config.get("speed_through", 10.0)),
            RIGHT: float(config.get("speed_right", 6.0)),
        }
        for a1 in sorted(arms):
            for a2 in sorted(arms):
                if a1 == a2:
                    continue
                for k1 in arms[a1].lanes:
                    c = _auto_connector(arms, a1, k1, a2, radius, lane_width, speeds)
                    connectors[c.key] = c
    return IntersectionGeometry(arms, connectors, radius, lane_width)


def load_geometry(path: str) -> IntersectionGeometry:
    """Read a geometry description file (INI-style; see README)."""
    cp = configparser.ConfigParser()
    read = cp.read(path)
    if not read:
        raise GeometryError(f"cannot read geometry file {path}")
    config: dict = {}
    if cp.has_section("arms"):
        rows = []
        for key, val in cp.items("arms"):
            parts = val.split()
            if len(parts) != 4:
                raise GeometryError(f"arm row '{key}' must be: lanes length speed heading")
            rows.append({"id": int(key), "n_lanes": parts[0], "link_length": parts[1],
                         "speed_limit": parts[2], "heading_deg": parts[3]})
        config["arms"] = rows
    if cp.has_section("connectors"):
        sec = cp["connectors"]
        if sec.getboolean("auto", fallback=True):
            for opt in ("speed_left", "speed_through", "speed_right",
                        "stopbar_radius", "lane_width"):
                if opt in sec:
                    config[opt] = sec.getfloat(opt)
        else:
            rows = []
            for key, val in sec.items():
                if key == "auto":
                    continue
                parts = val.split()
                if len(parts) != 6:
                    raise GeometryError(
                        f"connector row '{key}' must be: a1 k1 a2 k2 length speed")
                rows.append({"from_arm": parts[0], "from_lane": parts[1],
                             "to_arm": parts[2], "to_lane": parts[3],
                             "length": parts[4], "speed": parts[5]})
            config["connectors"] = rows
    if cp.has_section("layout"):
        for opt, val in cp.items("layout"):
            config[opt] = val
    return build_intersection(config)


def default_intersection(**overrides) -> IntersectionGeometry:
    """The standard four-arm, four-lane test intersection."""
    cfg = {"n_arms": 4, "lanes_per_arm": 4, "link_length": 50.0, "speed_limit": 10.0,
           "lane_width": 3.5, "stopbar_radius": 10.0,
           "speed_left": 8.0, "speed_through": 10.0, "speed_right": 6.0}
    cfg.update(overrides)
    return build_intersection(cfg)
