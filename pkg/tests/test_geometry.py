import math

import pytest
from hypothesis import given, strategies as st

from lafsim.geometry import (GeometryError, THROUGH, build_intersection,
                             classify_movement, curve_intersections,
                             default_intersection, load_geometry, Segment)


# Values frozen from an independent analytic oracle (segment/arc
# intersection worked by hand on the 4-arm, 4-lane layout).
N_CONNECTORS = 48
N_REVERSE_PAIRS = 24
MIN_TIME = {"through": 2.0, "left": 0.9327, "right": 1.2435}


def test_counts(geo):
    assert len(geo.arms) == 4
    assert len(geo.connectors) == N_CONNECTORS
    assert len(geo.reverse_pairs) == N_REVERSE_PAIRS
    for arm in geo.arms.values():
        assert arm.link_length == 50.0
        assert arm.speed_limit == 10.0
        assert list(arm.lanes) == [1, 2, 3, 4]


def test_every_lane_hosts_all_movements(geo):
    # each lane of each arm has a left, a through and a right connector
    for a, arm in geo.arms.items():
        for k in arm.lanes:
            moves = {classify_movement(arm, geo.arms[c.to_arm])
                     for c in geo.connectors.values()
                     if c.from_arm == a and c.from_lane == k}
            assert moves == {"left", "through", "right"}


def test_successor_lane_is_mirrored(geo):
    W = len(geo.arms[1].lanes)
    for c in geo.connectors.values():
        assert c.to_lane == W + 1 - c.from_lane


def test_connector_travel_time(geo):
    for c in geo.connectors.values():
        assert c.travel_time == pytest.approx(c.length / c.speed)
    assert geo.min_connector_time(1, 3) == pytest.approx(
        MIN_TIME["through"], abs=1e-4)
    left_dest = next(d for d in geo.arms if d != 1 and classify_movement(
        geo.arms[1], geo.arms[d]) == "left")
    right_dest = next(d for d in geo.arms if d != 1 and classify_movement(
        geo.arms[1], geo.arms[d]) == "right")
    assert geo.min_connector_time(1, left_dest) == pytest.approx(
        MIN_TIME["left"], abs=1e-4)
    assert geo.min_connector_time(1, right_dest) == pytest.approx(
        MIN_TIME["right"], abs=1e-4)


def test_through_connectors_cross_perpendicular_once(geo):
    through = [c for c in geo.connectors.values()
               if classify_movement(geo.arms[c.from_arm],
                                    geo.arms[c.to_arm]) == THROUGH]
    for c1 in through:
        for c2 in through:
            if {c1.from_arm, c1.to_arm} & {c2.from_arm, c2.to_arm}:
                continue    # parallel or shared-arm pairs
            pts = geo.conflicts_between(c1.key, c2.key)
            assert len(pts) == 1, (c1.key, c2.key)


def test_through_crossing_matches_line_oracle(geo):
    # the registered crossing of two perpendicular through connectors must
    # match a from-scratch line-line intersection of their centerlines
    c1 = geo.connectors[(1, 2, 3, 3)]
    c2 = geo.connectors[(2, 2, 4, 3)]
    (pt,) = geo.conflicts_between(c1.key, c2.key)
    p = c1.point_at(pt.dist_a)
    q = c2.point_at(pt.dist_b)
    assert math.dist(p, q) < 1e-6
    s1 = Segment(*c1.point_at(0.0), *c1.point_at(c1.length))
    s2 = Segment(*c2.point_at(0.0), *c2.point_at(c2.length))
    oracle = curve_intersections(s1, s2)
    assert len(oracle) == 1
    assert abs(oracle[0][0] - pt.dist_a) < 1e-6
    assert abs(oracle[0][1] - pt.dist_b) < 1e-6


def test_conflict_index_symmetric(geo):
    for (k1, k2), pts in geo.conflict_index.items():
        back = dict(geo.conflict_index)[(k2, k1)]
        assert len(back) == len(pts)
        for p, q in zip(pts, back):
            assert p.dist_a == pytest.approx(q.dist_b)
            assert p.dist_b == pytest.approx(q.dist_a)


def test_conflict_points_coincide_physically(geo):
    for (k1, k2), pts in geo.conflict_index.items():
        c1, c2 = geo.connectors[k1], geo.connectors[k2]
        for p in pts:
            assert 0 <= p.dist_a <= c1.length + 1e-9
            assert 0 <= p.dist_b <= c2.length + 1e-9
            assert math.dist(c1.point_at(p.dist_a),
                             c2.point_at(p.dist_b)) < 1e-6


def test_reverse_pairs_have_no_conflict_entry(geo):
    for pair in geo.reverse_pairs:
        k1, k2 = tuple(pair)
        assert (k1, k2) not in geo.conflict_index
        assert geo.is_reverse_pair(k1, k2)


def test_diverging_connectors_do_not_conflict(geo):
    # two connectors leaving the same lane never register a crossing
    for c1 in geo.connectors.values():
        for c2 in geo.connectors.values():
            if c1 is c2:
                continue
            if (c1.from_arm, c1.from_lane) == (c2.from_arm, c2.from_lane):
                assert not geo.conflicts_between(c1.key, c2.key)


def test_lanes_between(geo):
    assert geo.lanes_between(1, 3) == [1, 2, 3, 4]
    assert geo.lanes_between(1, 1) == []


def test_bad_configs():
    with pytest.raises(GeometryError):
        build_intersection({"n_arms": 4, "lanes_per_arm": 1})
    with pytest.raises(GeometryError):
        build_intersection({"n_arms": 4, "link_length": 0})


def test_geometry_file_round_trip(tmp_path, geo):
    path = tmp_path / "geo.ini"
    path.write_text(
        "[geometry]\nn_arms = 4\nlanes_per_arm = 4\nlink_length = 50\n"
        "speed_limit = 10\nspeed_left = 8\nspeed_through = 10\n"
        "speed_right = 6\n")
    loaded = load_geometry(str(path))
    assert set(loaded.connectors) == set(geo.connectors)
    for k, c in loaded.connectors.items():
        assert c.length == pytest.approx(geo.connectors[k].length)


@given(st.integers(min_value=2, max_value=6))
def test_mirror_map_is_involution(w):
    # successor lane map k -> W+1-k applied twice is the identity
    for k in range(1, w + 1):
        assert (w + 1 - (w + 1 - k)) == k
