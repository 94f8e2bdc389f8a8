from __future__ import annotations

import itertools
import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from urbanlod.envgraph import (
    Connection,
    EmbeddingError,
    FrozenGraphError,
    Region,
    RegionGraph,
    UnreachableError,
    add_edge,
    from_geojson,
    companion_json,
    load,
    route_between,
    save,
    to_geojson,
    validate_outlines,
)
from urbanlod.geometry import GeometryError, IntersectionKind, Point2, Polygon, segment_intersection


def square(x, y, s=1.0):
    return Polygon.rectangle(x, y, x + s, y + s)


def grid_graph(n=2, s=10.0):
    g = RegionGraph(Polygon.rectangle(0, 0, n * s, n * s))
    for i in range(n):
        for j in range(n):
            g.add_region(Region(f"r{i}{j}", square(i * s, j * s, s), population=100))
    return g


def test_edge_weight_is_centroid_distance():
    g = grid_graph()
    add_edge(g, "r00", "r10")
    a, b = g.regions["r00"].centroid, g.regions["r10"].centroid
    assert g.edges[("r00", "r10")] == pytest.approx(math.hypot(a.x - b.x, a.y - b.y), abs=1e-9)


def test_duplicate_edge_is_noop():
    g = grid_graph()
    add_edge(g, "r00", "r10")
    add_edge(g, "r10", "r00")
    assert len(g.edges) == 1


def test_crossing_diagonals_rejected():
    g = RegionGraph(Polygon.rectangle(-1, -1, 2, 2))
    for k, (x, y) in enumerate([(0, 0), (1, 0), (1, 1), (0, 1)]):
        g.add_region(Region(f"c{k}", square(x - 0.4, y - 0.4, 0.8), centroid=Point2(x, y)))
    add_edge(g, "c0", "c2")
    with pytest.raises(EmbeddingError):
        add_edge(g, "c1", "c3")
    # the brute-force check agrees the rejected diagonal crosses
    r = segment_intersection(((1, 0), (0, 1)), ((0, 0), (1, 1)))
    assert r.kind is IntersectionKind.PROPER


def test_edges_sharing_an_endpoint_are_allowed():
    g = grid_graph()
    add_edge(g, "r00", "r10")
    add_edge(g, "r00", "r01")
    add_edge(g, "r00", "r11")
    assert len(g.edges) == 3


def test_self_loop_and_unknown_region():
    g = grid_graph()
    with pytest.raises(ValueError):
        add_edge(g, "r00", "r00")
    with pytest.raises(KeyError):
        add_edge(g, "r00", "zz")


def test_region_centroid_must_be_inside():
    with pytest.raises(GeometryError):
        Region("x", square(0, 0), centroid=Point2(5, 5))


def test_negative_population_rejected():
    with pytest.raises(ValueError):
        Region("x", square(0, 0), population=-1)


def test_nested_graph_must_lie_inside():
    inner = RegionGraph(square(0, 0, 4))
    inner.add_region(Region("n1", square(0, 0, 2)))
    Region("outer", square(0, 0, 4), nested_graph=inner)
    far = RegionGraph(square(10, 10, 4))
    far.add_region(Region("n2", square(10, 10, 2)))
    with pytest.raises(GeometryError):
        Region("outer", square(0, 0, 4), nested_graph=far)


def test_frozen_graph_rejects_edits():
    g = grid_graph().freeze()
    with pytest.raises(FrozenGraphError):
        add_edge(g, "r00", "r10")
    with pytest.raises(FrozenGraphError):
        g.add_region(Region("z", square(0, 0)))


# ---------------------------------------------------------------- outlines


def test_shared_edge_is_valid():
    assert validate_outlines(grid_graph()) == []


def test_overlap_is_reported():
    g = RegionGraph(Polygon.rectangle(0, 0, 10, 10))
    g.add_region(Region("a", square(0, 0, 2)))
    g.add_region(Region("b", square(1, 1, 2)))
    rep = validate_outlines(g)
    assert len(rep) == 1
    assert rep[0].kind == "overlap" and rep[0].regions == ("a", "b")
    assert rep[0].area == pytest.approx(1.0)


def test_out_of_bounds_is_reported():
    g = RegionGraph(Polygon.rectangle(0, 0, 2, 2))
    g.add_region(Region("a", square(1, 1, 2)))
    rep = validate_outlines(g)
    assert [v.kind for v in rep] == ["out_of_bounds"]
    assert rep[0].area == pytest.approx(3.0)


# ---------------------------------------------------------------- routes


def line_graph():
    g = RegionGraph(Polygon.rectangle(0, 0, 30, 10))
    for k, x in enumerate((0, 10, 20)):
        g.add_region(Region("abc"[k], Polygon.rectangle(x, 0, x + 10, 10)))
    return g


def test_direct_route():
    g = line_graph()
    c = g.add_connection(Connection("a", "b", (Point2(5, 5), Point2(15, 5))))
    assert route_between(g, "a", "b") == [c]


def test_one_way_is_unreachable_backwards():
    g = line_graph()
    g.add_connection(Connection("a", "b", (Point2(5, 5), Point2(15, 5))))
    with pytest.raises(UnreachableError):
        route_between(g, "b", "a", allow_reverse=False)
    with pytest.raises(UnreachableError):
        route_between(g, "b", "a", allow_reverse=True)


def test_two_way_reverse_only_when_allowed():
    g = line_graph()
    g.add_connection(Connection("a", "b", (Point2(5, 5), Point2(15, 5)), two_way_allowed=True))
    with pytest.raises(UnreachableError):
        route_between(g, "b", "a")
    (c,) = route_between(g, "b", "a", allow_reverse=True)
    assert c.from_region == "b" and c.waypoints[0] == Point2(15, 5)


def _all_paths(conns, a, b, seen=()):
    if a == b:
        yield []
        return
    for c in conns:
        if c.from_region == a and c.to_region not in seen:
            for rest in _all_paths(conns, c.to_region, b, seen + (a,)):
                yield [c] + rest


def test_two_hop_beats_detour():
    g = line_graph()
    ab = g.add_connection(Connection("a", "b", (Point2(5, 5), Point2(15, 5))))
    bc = g.add_connection(Connection("b", "c", (Point2(15, 5), Point2(25, 5))))
    # a long detour through a and c outlines only
    g.add_connection(Connection("a", "c", (Point2(5, 5), Point2(5, 9.9), Point2(9.9, 9.9), Point2(9.9, 0.1), Point2(25, 5))))
    got = route_between(g, "a", "c")
    best = min(_all_paths(g.connections, "a", "c"), key=lambda p: sum(c.length for c in p))
    assert got == best == [ab, bc]


def test_waypoint_outside_outlines_rejected():
    g = line_graph()
    with pytest.raises(GeometryError):
        g.add_connection(Connection("a", "b", (Point2(5, 5), Point2(25, 5))))


# ---------------------------------------------------------------- io


def test_geojson_roundtrip(tmp_path):
    g = grid_graph()
    add_edge(g, "r00", "r10")
    add_edge(g, "r00", "r01")
    g.add_connection(Connection("r00", "r10", (Point2(5, 5), Point2(15, 5)), True))
    save(g, tmp_path / "r.geojson", tmp_path / "c.json")
    h = load(tmp_path / "r.geojson", tmp_path / "c.json")
    assert to_geojson(h) == to_geojson(g)
    assert companion_json(h) == companion_json(g)
    assert from_geojson(to_geojson(g), companion_json(g)).edges == g.edges


# ---------------------------------------------------------------- properties


@settings(max_examples=60, deadline=None)
@given(
    st.lists(st.tuples(st.integers(0, 4), st.integers(0, 4)), min_size=3, max_size=12, unique=True),
    st.lists(st.tuples(st.integers(0, 11), st.integers(0, 11)), max_size=40),
)
def test_random_edge_sequences_stay_planar(cells, requests):
    g = RegionGraph(Polygon.rectangle(0, 0, 50, 50))
    ids = []
    for i, j in cells:
        rid = f"{i}_{j}"
        # centroids jittered off the lattice so collinear triples are rare but possible
        g.add_region(Region(rid, square(i * 10, j * 10, 10), centroid=Point2(i * 10 + 3 + j * 0.7, j * 10 + 3 + i * 0.3)))
        ids.append(rid)
    for a, b in requests:
        a, b = ids[a % len(ids)], ids[b % len(ids)]
        if a == b:
            continue
        try:
            add_edge(g, a, b)
        except EmbeddingError:
            pass
    edges = list(g.edges)
    for (a, b), (c, d) in itertools.combinations(edges, 2):
        r = segment_intersection(g.edge_segment(a, b), g.edge_segment(c, d))
        if {a, b} & {c, d}:
            assert r.kind in (IntersectionKind.TOUCHING, IntersectionKind.NONE)
        else:
            assert r.kind is IntersectionKind.NONE
    for (a, b), w in g.edges.items():
        assert w == pytest.approx(g.regions[a].centroid.distance(g.regions[b].centroid), abs=1e-9)
