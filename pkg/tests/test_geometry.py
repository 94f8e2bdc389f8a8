from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import mercator_y_atanh
from urbanlod.geometry import (
    DegenerateGeometryError,
    EmptyFootprint,
    GeoCoordinate,
    IntersectionKind,
    NoIntersectionError,
    OutOfDomainError,
    Point2,
    Polygon,
    compute_obb,
    convex_hull,
    inverse_elliptical_mercator,
    largest_inscribed_rectangle,
    polygon_area,
    project_elliptical_mercator,
    segment_intersection,
    split_polygon,
)


def rect(w, h, x=0.0, y=0.0):
    return Polygon.rectangle(x, y, x + w, y + h)


# ---------------------------------------------------------------- area


def test_area_unit_square():
    assert polygon_area(Polygon([(0, 0), (1, 0), (1, 1), (0, 1)])) == 1.0


def test_area_triangle_by_hand():
    # 1/2 * base 4 * height 3
    assert polygon_area(Polygon([(0, 0), (4, 0), (0, 3)])) == 6.0


def test_area_micro_room():
    assert polygon_area(rect(22, 16)) == 352.0


def test_clockwise_input_is_canonicalised():
    p = Polygon([(0, 1), (1, 1), (1, 0), (0, 0)])
    assert p.area == 1.0
    xs = p.coords
    signed = 0.5 * np.sum(xs[:, 0] * np.roll(xs[:, 1], -1) - np.roll(xs[:, 0], -1) * xs[:, 1])
    assert signed > 0


def test_collinear_polygon_is_degenerate():
    with pytest.raises(DegenerateGeometryError):
        Polygon([(0, 0), (1, 0), (2, 0)])


def test_nonfinite_point_rejected():
    with pytest.raises(ValueError):
        Point2(float("nan"), 0.0)


def test_self_intersecting_polygon_rejected():
    with pytest.raises(Exception):
        Polygon([(0, 0), (1, 1), (1, 0), (0, 1)])


convex_pts = st.lists(
    st.tuples(st.floats(-100, 100), st.floats(-100, 100)), min_size=3, max_size=12
).map(convex_hull).filter(lambda h: len(h) >= 3)


def _hull_polygon(h):
    try:
        return Polygon(h)
    except DegenerateGeometryError:
        return None


@settings(max_examples=200, deadline=None)
@given(convex_pts, st.integers(0, 20), st.booleans())
def test_area_invariant_under_rotation_and_winding(hull, k, flip):
    p = _hull_polygon(hull)
    if p is None:
        return
    vs = list(p.vertices)
    k %= len(vs)
    vs = vs[k:] + vs[:k]
    if flip:
        vs = vs[::-1]
    q = Polygon(vs)
    assert math.isclose(q.area, p.area, rel_tol=1e-9)


# ---------------------------------------------------------------- OBB


def test_obb_axis_aligned_rectangle():
    o = compute_obb(rect(200, 100))
    assert o.center.x == pytest.approx(100) and o.center.y == pytest.approx(50)
    assert (o.axis_major.x, o.axis_major.y) == pytest.approx((1.0, 0.0))
    assert o.half_extent_major == pytest.approx(100)
    assert o.half_extent_minor == pytest.approx(50)


def test_obb_rotated_rectangle():
    th = math.radians(30)
    o = compute_obb(rect(200, 100).rotated(th))
    assert o.half_extent_major == pytest.approx(100, abs=1e-6)
    assert o.half_extent_minor == pytest.approx(50, abs=1e-6)
    assert abs(o.axis_major.x * math.cos(th) + o.axis_major.y * math.sin(th)) == pytest.approx(1.0, abs=1e-9)


def test_obb_square_tie_prefers_x_axis():
    o = compute_obb(rect(10, 10))
    assert o.half_extent_major == pytest.approx(5) and o.half_extent_minor == pytest.approx(5)
    assert (o.axis_major.x, o.axis_major.y) == pytest.approx((1.0, 0.0))


@settings(max_examples=200, deadline=None)
@given(convex_pts)
def test_obb_contains_all_vertices(hull):
    p = _hull_polygon(hull)
    if p is None:
        return
    try:
        o = compute_obb(p)
    except Exception:
        return
    assert abs(o.axis_major.norm() - 1.0) <= 1e-9
    assert o.half_extent_major >= o.half_extent_minor > 0
    for v in p.vertices:
        assert o.contains(v, slack=1e-9 * max(1.0, o.half_extent_major))
    # minimality against the axis-aligned box and every hull edge direction
    for a, b in p.edges():
        d = (b - a) * (1.0 / (b - a).norm())
        n = Point2(-d.y, d.x)
        c = p.coords
        proj_u = c @ np.array([d.x, d.y])
        proj_v = c @ np.array([n.x, n.y])
        assert o.area <= (np.ptp(proj_u) * np.ptp(proj_v)) * (1 + 1e-9) + 1e-9


# ---------------------------------------------------------------- split


def test_split_rectangle_midpoint():
    parts = split_polygon(rect(200, 100), (100, 0), (0, 1))
    assert len(parts) == 2
    assert sorted(p.area for p in parts) == pytest.approx([10000, 10000])
    for p in parts:
        x0, y0, x1, y1 = p.bounds()
        assert x1 - x0 == pytest.approx(100) and y1 - y0 == pytest.approx(100)


def test_split_l_shape_across_notch():
    # U-like shape: a horizontal cut through both arms leaves three pieces
    u = Polygon([(0, 0), (30, 0), (30, 30), (20, 30), (20, 10), (10, 10), (10, 30), (0, 30)])
    parts = split_polygon(u, (0, 20), (1, 0))
    assert len(parts) == 3
    assert sum(p.area for p in parts) == pytest.approx(u.area, rel=1e-9)


def test_split_along_edge_misses():
    with pytest.raises(NoIntersectionError):
        split_polygon(rect(10, 10), (0, 0), (1, 0))


def test_split_line_outside_misses():
    with pytest.raises(NoIntersectionError):
        split_polygon(rect(10, 10), (20, 0), (0, 1))


@settings(max_examples=1000, deadline=None)
@given(convex_pts, st.floats(0.05, 0.95), st.floats(0, math.pi))
def test_split_conserves_area(hull, frac, angle):
    p = _hull_polygon(hull)
    if p is None or p.area < 1e-3:
        return
    d = (math.cos(angle), math.sin(angle))
    n = np.array([-d[1], d[0]])
    proj = p.coords @ n
    off = proj.min() + frac * (proj.max() - proj.min())
    point = (n[0] * off, n[1] * off)
    try:
        parts = split_polygon(p, point, d)
    except (NoIntersectionError, DegenerateGeometryError):
        return
    assert len(parts) >= 2
    assert math.isclose(sum(q.area for q in parts), p.area, rel_tol=1e-6)


# ---------------------------------------------------------------- intersection


def test_intersection_cross():
    r = segment_intersection(((0, 0), (2, 2)), ((0, 2), (2, 0)))
    assert r.kind is IntersectionKind.PROPER
    assert (r.point.x, r.point.y) == pytest.approx((1, 1))


def test_intersection_parallel():
    r = segment_intersection(((0, 0), (2, 0)), ((0, 1), (2, 1)))
    assert r.kind is IntersectionKind.NONE and not r


def test_intersection_collinear_overlap():
    r = segment_intersection(((0, 0), (2, 0)), ((1, 0), (3, 0)))
    assert r.kind is IntersectionKind.OVERLAP
    assert sorted((r.overlap[0].x, r.overlap[1].x)) == pytest.approx([1, 2])


def test_intersection_touching_endpoint():
    r = segment_intersection(((0, 0), (2, 0)), ((2, 0), (2, 5)))
    assert r.kind is IntersectionKind.TOUCHING
    assert (r.point.x, r.point.y) == (2, 0)


def test_intersection_t_junction_is_touching():
    r = segment_intersection(((0, 0), (4, 0)), ((2, 0), (2, 3)))
    assert r.kind is IntersectionKind.TOUCHING


# ---------------------------------------------------------------- inscribed rectangle


def test_inscribed_rectangle_fixed_point():
    r = largest_inscribed_rectangle(rect(20, 10))
    assert r.area == pytest.approx(200.0, rel=1e-9)


def test_inscribed_rectangle_right_triangle():
    r = largest_inscribed_rectangle(Polygon([(0, 0), (4, 0), (0, 3)]))
    assert r.area >= 0.95 * 3.0
    assert r.area <= 3.0 + 1e-9


def test_inscribed_rectangle_sliver():
    with pytest.raises(EmptyFootprint):
        largest_inscribed_rectangle(rect(100, 0.01), min_area=9.0)


def test_inscribed_rectangle_on_required_edge():
    p = Polygon([(0, 0), (10, 0), (10, 6), (4, 10), (0, 10)])
    r = largest_inscribed_rectangle(p, required_edge=((0, 0), (10, 0)))
    ys = [v.y for v in r.vertices]
    assert min(ys) == pytest.approx(0.0, abs=1e-9)
    for v in r.vertices:
        assert p.contains(v)


@settings(max_examples=60, deadline=None)
@given(convex_pts)
def test_inscribed_rectangle_inside(hull):
    p = _hull_polygon(hull)
    if p is None or p.area < 1.0:
        return
    try:
        r = largest_inscribed_rectangle(p, resolution=32)
    except EmptyFootprint:
        return
    for v in r.vertices:
        assert p.contains(v) or min(
            np.hypot(*(np.array(v.as_tuple()) - c)) for c in p.coords
        ) < 1e-6 or any(_near_edge(v, a, b) for a, b in p.edges())


def _near_edge(v, a, b, tol=1e-6):
    d = b - a
    t = max(0.0, min(1.0, (v - a).dot(d) / d.dot(d)))
    return (a + d * t).distance(v) <= tol


# ---------------------------------------------------------------- projection


def test_mercator_origin():
    p = project_elliptical_mercator(GeoCoordinate(0, 0))
    assert (p.x, p.y) == (0.0, 0.0)


def test_mercator_antimeridian():
    p = project_elliptical_mercator(GeoCoordinate(0, 180))
    assert p.x == pytest.approx(6378137.0 * math.pi, abs=1e-3)
    assert p.x == pytest.approx(20037508.3428, abs=1e-3)
    assert p.y == pytest.approx(0.0, abs=1e-9)


def test_mercator_roundtrip_porto_alegre():
    g = GeoCoordinate(-30.03, -51.23)
    back = inverse_elliptical_mercator(project_elliptical_mercator(g))
    assert abs(back.latitude - g.latitude) < 1e-9
    assert abs(back.longitude - g.longitude) < 1e-9


def test_mercator_domain():
    with pytest.raises(OutOfDomainError):
        project_elliptical_mercator(GeoCoordinate(89.9, 0))
    with pytest.raises(OutOfDomainError):
        GeoCoordinate(91, 0)


@settings(max_examples=300, deadline=None)
@given(st.floats(-89.5, 89.5))
def test_mercator_northing_matches_atanh_form(lat):
    y = project_elliptical_mercator(GeoCoordinate(lat, 0)).y
    assert y == pytest.approx(mercator_y_atanh(lat), rel=1e-12, abs=1e-6)


@settings(max_examples=300, deadline=None)
@given(st.floats(-89, 89), st.floats(-89, 89), st.floats(-179, 179), st.floats(-179, 179))
def test_mercator_monotone(p1, p2, l1, l2):
    a = project_elliptical_mercator(GeoCoordinate(p1, l1))
    b = project_elliptical_mercator(GeoCoordinate(p2, l2))
    if l1 < l2:
        assert a.x < b.x
    if p1 < p2:
        assert a.y < b.y


@settings(max_examples=300, deadline=None)
@given(st.floats(-89.5, 89.5), st.floats(-180, 180))
def test_mercator_roundtrip(lat, lon):
    g = inverse_elliptical_mercator(project_elliptical_mercator(GeoCoordinate(lat, lon)))
    assert abs(g.latitude - lat) < 1e-9 and abs(g.longitude - lon) < 1e-9
