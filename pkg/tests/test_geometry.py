from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from bdd.errors import ConfigError, DataError
from bdd.geometry import (
    BoundaryPolyline,
    MetricSpec,
    Point2,
    RegionLabel,
    classify,
    classify_points,
    detect_kinks,
    distance,
    distance_to_polyline,
    grid_from_points,
    make_grid,
    signed_score,
)

L_SHAPE = BoundaryPolyline.from_vertices([(-2, 0), (0, 0), (0, 2)])

coord = st.floats(-5, 5, allow_nan=False, allow_infinity=False)


def test_classify_examples():
    assert classify(Point2(0, 0), L_SHAPE) is RegionLabel.TREATED
    assert classify((-1, 1), L_SHAPE) is RegionLabel.TREATED
    assert classify((1, -1), L_SHAPE) is RegionLabel.CONTROL


def test_classify_l_shape_matches_quadrant_rule():
    rng = np.random.default_rng(0)
    x = rng.uniform(-4, 4, size=(5000, 2))
    expected = (x[:, 0] <= 0) & (x[:, 1] >= 0)
    assert np.array_equal(classify_points(x, L_SHAPE), expected)


def test_points_on_boundary_are_treated():
    pts = L_SHAPE.point_at(np.linspace(0, 4, 41))
    assert classify_points(pts, L_SHAPE).all()
    # the end rays are not part of the boundary
    assert not classify_points([(-3.0, -1e-9)], L_SHAPE)[0]


def test_classify_straight_line_left_is_treated():
    line = BoundaryPolyline.from_vertices([(0, 0), (1, 0)])
    assert classify((0.5, 0.1), line) is RegionLabel.TREATED
    assert classify((0.5, -0.1), line) is RegionLabel.CONTROL
    assert classify((50.0, 3.0), line) is RegionLabel.TREATED
    flipped = BoundaryPolyline.from_vertices([(1, 0), (0, 0)])
    assert classify((0.5, 0.1), flipped) is RegionLabel.CONTROL


def test_classify_closed_loop_orientation():
    square = [(0, 0), (1, 0), (1, 1), (0, 1), (0, 0)]
    ccw = BoundaryPolyline.from_vertices(square)
    cw = BoundaryPolyline.from_vertices(square[::-1])
    assert ccw.is_closed
    assert classify((0.5, 0.5), ccw) is RegionLabel.TREATED
    assert classify((2.0, 0.5), ccw) is RegionLabel.CONTROL
    assert classify((0.5, 0.5), cw) is RegionLabel.CONTROL
    assert classify((2.0, 0.5), cw) is RegionLabel.TREATED


def _cross(o, p, q):
    return (p[0] - o[0]) * (q[1] - o[1]) - (p[1] - o[1]) * (q[0] - o[0])


def _segment_crosses(a, b, boundary, eps=1e-6) -> bool:
    # open polylines partition the plane together with their end rays
    v = boundary.vertices
    head = v[0] + 100 * (v[0] - v[1]) / np.linalg.norm(v[0] - v[1])
    tail = v[-1] + 100 * (v[-1] - v[-2]) / np.linalg.norm(v[-1] - v[-2])
    v = np.vstack([head, v, tail])
    ext = BoundaryPolyline.from_vertices(v)
    # conservative: near-touching counts as crossing
    if np.any(distance_to_polyline(np.vstack([a, b]), ext) < eps):
        return True
    for c, d in zip(v[:-1], v[1:]):
        d1, d2 = _cross(c, d, a), _cross(c, d, b)
        d3, d4 = _cross(a, b, c), _cross(a, b, d)
        if d1 * d2 <= eps and d3 * d4 <= eps:
            return True
    return False


ZIGZAG = BoundaryPolyline.from_vertices([(-3, -1), (-1, 1), (0, -0.5), (1, 1.5), (3, 0)])


@settings(max_examples=200, deadline=None)
@given(coord, coord, coord, coord)
def test_label_constant_along_non_crossing_segments(a1, a2, b1, b2):
    a, b = np.array([a1, a2]), np.array([b1, b2])
    for boundary in (L_SHAPE, ZIGZAG):
        if _segment_crosses(a, b, boundary):
            continue
        la, lb = classify_points(np.vstack([a, b]), boundary)
        assert la == lb


def test_distance_examples():
    assert distance((3, 4), (0, 0)) == 5.0
    assert distance((1.5, -2), (1.5, -2)) == 0.0
    assert distance((1, 1), (0, 0), MetricSpec((4, 1))) == pytest.approx(math.sqrt(5), abs=1e-15)


def test_metric_rejects_nonpositive_weights():
    with pytest.raises(ConfigError):
        MetricSpec((0.0, 1.0))
    with pytest.raises(ConfigError):
        MetricSpec((-1.0, 1.0))


@settings(max_examples=200, deadline=None)
@given(coord, coord, coord, coord, coord, coord, st.floats(0.1, 10), st.floats(0.1, 10))
def test_distance_is_a_metric(a1, a2, b1, b2, c1, c2, w1, w2):
    m = MetricSpec((w1, w2))
    a, b, c = (a1, a2), (b1, b2), (c1, c2)
    assert distance(a, b, m) == distance(b, a, m)
    assert distance(a, c, m) <= distance(a, b, m) + distance(b, c, m) + 1e-12
    assert distance(a, a, m) == 0.0


def test_signed_score_examples():
    assert signed_score((3, 4), (0, 0), RegionLabel.TREATED) == 5.0
    assert signed_score((3, 4), (0, 0), RegionLabel.CONTROL) == -5.0
    s = signed_score((0, 0), (0, 0), classify((0, 0), L_SHAPE))
    assert s == 0.0 and math.copysign(1.0, s) == 1.0


@settings(max_examples=100, deadline=None)
@given(coord, coord, st.floats(0, 4))
def test_signed_score_sign_matches_label(z1, z2, arc):
    x = L_SHAPE.point_at(arc)[0]
    lab = classify((z1, z2), L_SHAPE)
    d = signed_score((z1, z2), x, lab)
    assert (d >= 0) == (lab is RegionLabel.TREATED)


def test_make_grid_examples():
    g = make_grid(L_SHAPE, 3)
    np.testing.assert_allclose(g.points, [(-2, 0), (0, 0), (0, 2)], atol=1e-15)
    np.testing.assert_allclose(g.arclengths, [0, 2, 4])
    g = make_grid(ZIGZAG, 2)
    np.testing.assert_allclose(g.points, ZIGZAG.vertices[[0, -1]], atol=1e-12)
    seg = BoundaryPolyline.from_vertices([(0, 0), (1, 0)])
    g = make_grid(seg, 5)
    np.testing.assert_allclose(g.points[:, 0], [0, 0.25, 0.5, 0.75, 1])
    np.testing.assert_allclose(g.points[:, 1], 0)


@settings(max_examples=50, deadline=None)
@given(st.integers(2, 200))
def test_make_grid_spacing_and_membership(M):
    g = make_grid(ZIGZAG, M)
    L = ZIGZAG.length
    np.testing.assert_allclose(g.arclengths, np.arange(M) * L / (M - 1), atol=1e-12 * L, rtol=0)
    assert np.all(distance_to_polyline(g.points, ZIGZAG) <= 1e-9 * L)
    assert g.size == M


def test_make_grid_snaps_vertices():
    g = make_grid(L_SHAPE, 4, include_vertices=True)
    assert g.size == 4
    assert any(np.allclose(p, (0, 0)) for p in g.points)
    assert np.all(np.diff(g.arclengths) >= 0)
    np.testing.assert_allclose(g.points[[0, -1]], [(-2, 0), (0, 2)])


def test_make_grid_rejects_small_m():
    with pytest.raises(ConfigError):
        make_grid(L_SHAPE, 1)


def test_grid_from_points_validates_membership():
    g = grid_from_points([(-1, 0), (0, 1)], L_SHAPE)
    np.testing.assert_allclose(g.arclengths, [1, 3])
    with pytest.raises(DataError):
        grid_from_points([(-1, 0.5)], L_SHAPE)


def test_detect_kinks_examples():
    k = detect_kinks(L_SHAPE, 10)
    assert [(x.index, round(x.interior_angle, 9)) for x in k] == [(1, 90.0)]
    straight = BoundaryPolyline.from_vertices([(0, 0), (1, 0), (2, 0)])
    assert detect_kinks(straight, 10) == []
    t = np.radians(np.arange(0, 91, 1.0))
    arc = BoundaryPolyline.from_vertices(np.column_stack([np.cos(t), np.sin(t)]))
    assert detect_kinks(arc, 10) == []
    assert len(detect_kinks(arc, 0.5)) == len(t) - 2


def test_detect_kinks_rejects_bad_tolerance():
    with pytest.raises(ConfigError):
        detect_kinks(L_SHAPE, 0)
    with pytest.raises(ConfigError):
        detect_kinks(L_SHAPE, 180)


@pytest.mark.parametrize(
    "verts",
    [
        [(0, 0)],
        [(0, 0), (0, 0), (1, 1)],
        [(0, 0), (2, 0), (2, 1), (1, -1)],
        [(0, 0), (float("nan"), 1)],
    ],
)
def test_invalid_boundaries(verts):
    with pytest.raises(DataError):
        BoundaryPolyline.from_vertices(verts)


def test_cumulative_arclength():
    assert L_SHAPE.length == 4.0
    np.testing.assert_array_equal(L_SHAPE.cumulative_arclength, [0, 2, 4])
