"""Region graph: regions with outlines, planar adjacency edges, and directional connections."""

from __future__ import annotations

import heapq
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

import shapely.geometry as sg

from .geometry import (
    EPS,
    GeometryError,
    IntersectionKind,
    Point2,
    Polygon,
    segment_intersection,
)


class EmbeddingError(GeometryError):
    """An edge would cross an existing edge of the planar embedding."""


class UnreachableError(LookupError):
    pass


class FrozenGraphError(RuntimeError):
    pass


@dataclass
class Region:
    id: str
    outline: Polygon
    population: int = 0
    centroid: Point2 | None = None
    nested_graph: RegionGraph | None = None

    def __post_init__(self):
        if self.population < 0:
            raise ValueError(f"region {self.id}: negative population")
        if self.centroid is None:
            self.centroid = self.outline.interior_point()
        elif not self.outline.contains(self.centroid):
            raise GeometryError(f"region {self.id}: centroid outside outline")
        if self.nested_graph is not None:
            for sub in self.nested_graph.regions.values():
                if not self.outline.contains(sub.centroid):
                    raise GeometryError(f"region {self.id}: nested region {sub.id} lies outside the outline")


@dataclass(frozen=True)
class Connection:
    from_region: str
    to_region: str
    waypoints: tuple[Point2, ...]
    two_way_allowed: bool = False

    def __post_init__(self):
        if len(self.waypoints) < 2:
            raise ValueError("a connection needs at least two waypoints")

    @property
    def length(self) -> float:
        w = self.waypoints
        return sum(w[i].distance(w[i + 1]) for i in range(len(w) - 1))

    def reversed(self) -> Connection:
        return Connection(self.to_region, self.from_region, tuple(reversed(self.waypoints)), self.two_way_allowed)


@dataclass(frozen=True)
class OutlineViolation:
    kind: str  # "overlap" | "out_of_bounds"
    regions: tuple[str, ...]
    area: float


@dataclass
class RegionGraph:
    bounds: Polygon
    regions: dict[str, Region] = field(default_factory=dict)
    edges: dict[tuple[str, str], float] = field(default_factory=dict)
    connections: list[Connection] = field(default_factory=list)
    frozen: bool = False

    def _check_mutable(self):
        if self.frozen:
            raise FrozenGraphError("graph is frozen")

    def freeze(self) -> RegionGraph:
        self.frozen = True
        return self

    def add_region(self, region: Region) -> Region:
        self._check_mutable()
        if region.id in self.regions:
            raise ValueError(f"duplicate region id {region.id}")
        self.regions[region.id] = region
        return region

    def edge_segment(self, a: str, b: str) -> tuple[Point2, Point2]:
        return self.regions[a].centroid, self.regions[b].centroid

    def add_edge(self, a: str, b: str) -> RegionGraph:
        return add_edge(self, a, b)

    def add_connection(self, conn: Connection) -> Connection:
        self._check_mutable()
        for rid in (conn.from_region, conn.to_region):
            if rid not in self.regions:
                raise KeyError(f"unknown region {rid}")
        oa = self.regions[conn.from_region].outline
        ob = self.regions[conn.to_region].outline
        for w in conn.waypoints:
            if not (oa.contains(w) or ob.contains(w)):
                raise GeometryError(f"waypoint {w} outside outlines of {conn.from_region} and {conn.to_region}")
        self.connections.append(conn)
        return conn

    def neighbours(self, rid: str) -> list[str]:
        out = [b if a == rid else a for (a, b) in self.edges if rid in (a, b)]
        return sorted(out)

    def region_containing(self, p) -> str | None:
        for rid in sorted(self.regions):
            if self.regions[rid].outline.contains(p):
                return rid
        return None


def _edge_key(a: str, b: str) -> tuple[str, str]:
    return (a, b) if a <= b else (b, a)


def add_edge(g: RegionGraph, a: str, b: str) -> RegionGraph:
    """Add an adjacency edge weighted by centroid distance, keeping the embedding planar."""
    g._check_mutable()
    if a == b:
        raise ValueError("self-loops are not allowed")
    for rid in (a, b):
        if rid not in g.regions:
            raise KeyError(f"unknown region {rid}")
    key = _edge_key(a, b)
    if key in g.edges:
        return g
    seg = g.edge_segment(a, b)
    for (c, d) in g.edges:
        other = g.edge_segment(c, d)
        res = segment_intersection(seg, other)
        if res.kind is IntersectionKind.NONE:
            continue
        if res.kind is IntersectionKind.TOUCHING and {a, b} & {c, d}:
            shared = g.regions[({a, b} & {c, d}).pop()].centroid
            if res.point.distance(shared) <= EPS:
                continue
        raise EmbeddingError(f"edge {a}-{b} crosses edge {c}-{d}")
    ca, cb = g.regions[a].centroid, g.regions[b].centroid
    g.edges[key] = ca.distance(cb)
    return g


def _shape(poly: Polygon) -> sg.Polygon:
    return sg.Polygon(poly.coords)


def validate_outlines(g: RegionGraph, tol_area: float = 1e-6) -> list[OutlineViolation]:
    """Pairwise interior overlaps and outlines leaking past the bounds."""
    report: list[OutlineViolation] = []
    ids = sorted(g.regions)
    shapes = {rid: _shape(g.regions[rid].outline) for rid in ids}
    bounds = _shape(g.bounds)
    for i, a in enumerate(ids):
        for b in ids[i + 1:]:
            if not shapes[a].intersects(shapes[b]):
                continue
            area = shapes[a].intersection(shapes[b]).area
            if area >= tol_area:
                report.append(OutlineViolation("overlap", (a, b), area))
    for a in ids:
        outside = shapes[a].difference(bounds).area
        if outside >= tol_area:
            report.append(OutlineViolation("out_of_bounds", (a,), outside))
    return report


def route_between(g: RegionGraph, a: str, b: str, allow_reverse: bool = False) -> list[Connection]:
    """Uniform-cost search over connections weighted by polyline length.

    Reverse traversal of a connection is used only when ``allow_reverse`` is
    set and the connection itself is two-way; the returned connection is then
    the reversed copy.
    """
    for rid in (a, b):
        if rid not in g.regions:
            raise KeyError(f"unknown region {rid}")
    if a == b:
        return []
    arcs: dict[str, list[tuple[float, int, Connection]]] = {}
    for i, c in enumerate(g.connections):
        arcs.setdefault(c.from_region, []).append((c.length, i, c))
        if allow_reverse and c.two_way_allowed:
            arcs.setdefault(c.to_region, []).append((c.length, i, c.reversed()))
    best = {a: 0.0}
    prev: dict[str, tuple[str, Connection]] = {}
    heap = [(0.0, a)]
    done = set()
    while heap:
        d, u = heapq.heappop(heap)
        if u in done:
            continue
        done.add(u)
        if u == b:
            break
        for w, _, c in arcs.get(u, ()):
            nd = d + w
            v = c.to_region
            if nd < best.get(v, math.inf) - 1e-12:
                best[v] = nd
                prev[v] = (u, c)
                heapq.heappush(heap, (nd, v))
    if b not in done:
        raise UnreachableError(f"no route from {a} to {b}")
    path = []
    v = b
    while v != a:
        u, c = prev[v]
        path.append(c)
        v = u
    return path[::-1]


# ---------------------------------------------------------------------------
# serialisation


def to_geojson(g: RegionGraph) -> dict:
    feats = []
    for rid in sorted(g.regions):
        r = g.regions[rid]
        ring = [[p.x, p.y] for p in r.outline.vertices]
        ring.append(ring[0])
        feats.append(
            {
                "type": "Feature",
                "geometry": {"type": "Polygon", "coordinates": [ring]},
                "properties": {"id": rid, "population": r.population, "centroid": [r.centroid.x, r.centroid.y]},
            }
        )
    return {"type": "FeatureCollection", "features": feats}


def companion_json(g: RegionGraph) -> dict:
    return {
        "bounds": [[p.x, p.y] for p in g.bounds.vertices],
        "edges": [[a, b, w] for (a, b), w in sorted(g.edges.items())],
        "connections": [
            {
                "from": c.from_region,
                "to": c.to_region,
                "waypoints": [[p.x, p.y] for p in c.waypoints],
                "two_way_allowed": c.two_way_allowed,
            }
            for c in g.connections
        ],
    }


def read_connections(doc: dict) -> list[Connection]:
    return [
        Connection(
            c["from"],
            c["to"],
            tuple(Point2(float(x), float(y)) for x, y in c["waypoints"]),
            bool(c.get("two_way_allowed", False)),
        )
        for c in doc.get("connections", [])
    ]


def from_geojson(regions_doc: dict, companion: dict | None = None) -> RegionGraph:
    regions = []
    for f in regions_doc["features"]:
        props = f.get("properties") or {}
        ring = f["geometry"]["coordinates"][0]
        centroid = props.get("centroid")
        regions.append(
            Region(
                id=str(props["id"]),
                outline=Polygon(ring),
                population=int(props.get("population", 0) or 0),
                centroid=Point2(*centroid) if centroid else None,
            )
        )
    if companion and companion.get("bounds"):
        bounds = Polygon(companion["bounds"])
    else:
        bounds = bounding_rectangle(r.outline for r in regions)
    g = RegionGraph(bounds)
    for r in regions:
        g.add_region(r)
    if companion:
        for a, b, *_ in companion.get("edges", []):
            add_edge(g, a, b)
        for c in read_connections(companion):
            g.add_connection(c)
    return g


def bounding_rectangle(polys: Iterable[Polygon], margin: float = 0.0) -> Polygon:
    xs0, ys0, xs1, ys1 = zip(*(p.bounds() for p in polys))
    return Polygon.rectangle(min(xs0) - margin, min(ys0) - margin, max(xs1) + margin, max(ys1) + margin)


def save(g: RegionGraph, regions_path: Path, companion_path: Path) -> None:
    Path(regions_path).write_text(json.dumps(to_geojson(g), indent=1, sort_keys=True))
    Path(companion_path).write_text(json.dumps(companion_json(g), indent=1, sort_keys=True))


def load(regions_path: Path, companion_path: Path | None = None) -> RegionGraph:
    doc = json.loads(Path(regions_path).read_text())
    comp = json.loads(Path(companion_path).read_text()) if companion_path else None
    return from_geojson(doc, comp)
