"""Road networks inside a region and the faces (subregions, city blocks) they carve out."""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence

from .geometry import (
    EPS,
    SNAP_TOL,
    DegenerateGeometryError,
    GeometryError,
    IntersectionKind,
    Point2,
    Polygon,
    clip_segment_to_polygon,
    node_segments,
    on_boundary,
    planar_faces,
    point_segment_distance,
    segment_intersection,
)


class TopologyError(GeometryError):
    """A primary road violates the endpoint constraint."""


class RoadKind(str, enum.Enum):
    PRIMARY = "primary"
    SECONDARY = "secondary"


@dataclass(frozen=True)
class Road:
    id: str
    points: tuple[Point2, ...]
    kind: RoadKind = RoadKind.SECONDARY
    width: float = 3.7
    lanes: int = 1
    is_one_way: bool = False
    max_speed: float = 13.9
    max_height: float | None = None  # None = unrestricted
    max_weight: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "points", tuple(p if isinstance(p, Point2) else Point2(*p) for p in self.points))
        object.__setattr__(self, "kind", RoadKind(self.kind))
        if len(self.points) < 2:
            raise ValueError(f"road {self.id}: needs at least 2 points")
        for a, b in zip(self.points, self.points[1:]):
            if a.distance(b) <= EPS:
                raise DegenerateGeometryError(f"road {self.id}: zero-length segment")
        if self.width <= 0:
            raise ValueError(f"road {self.id}: width must be positive")
        if self.lanes < 1:
            raise ValueError(f"road {self.id}: lanes must be >= 1")

    def segments(self) -> list[tuple[Point2, Point2]]:
        return list(zip(self.points, self.points[1:]))

    @property
    def length(self) -> float:
        return sum(a.distance(b) for a, b in self.segments())

    def to_json(self) -> dict:
        return {
            "id": self.id,
            "points": [[p.x, p.y] for p in self.points],
            "kind": self.kind.value,
            "width": self.width,
            "lanes": self.lanes,
            "is_one_way": self.is_one_way,
            "max_speed": self.max_speed,
            "max_height": self.max_height,
            "max_weight": self.max_weight,
        }

    @classmethod
    def from_json(cls, d: dict) -> Road:
        d = dict(d)
        d["points"] = tuple(Point2(*p) for p in d["points"])
        return cls(**d)


@dataclass
class RoadNetwork:
    region_id: str
    outline: Polygon | None = None
    roads: dict[str, Road] = field(default_factory=dict)
    junctions: set[tuple[float, float]] = field(default_factory=set)

    def segments(self, kind: RoadKind | None = None) -> list[tuple[Point2, Point2]]:
        out = []
        for rid in sorted(self.roads):
            r = self.roads[rid]
            if kind is None or r.kind is kind:
                out.extend(r.segments())
        return out

    def to_json(self) -> dict:
        return {
            "region_id": self.region_id,
            "outline": [[p.x, p.y] for p in self.outline.vertices] if self.outline else None,
            "roads": [self.roads[k].to_json() for k in sorted(self.roads)],
            "junctions": sorted([list(j) for j in self.junctions]),
        }

    @classmethod
    def from_json(cls, d: dict) -> RoadNetwork:
        net = cls(d["region_id"], Polygon(d["outline"]) if d.get("outline") else None)
        for r in d["roads"]:
            road = Road.from_json(r)
            net.roads[road.id] = road
        net.junctions = {tuple(j) for j in d.get("junctions", [])}
        return net

    def dumps(self) -> str:
        return json.dumps(self.to_json(), sort_keys=True)


@dataclass
class CityBlock:
    id: str
    polygon: Polygon
    subregion_id: str
    # street-facing boundary pieces; None means every edge fronts a street
    frontage: tuple[tuple[Point2, Point2], ...] | None = None

    def __post_init__(self):
        if self.frontage is None:
            self.frontage = tuple(self.polygon.edges())


def _on_segments(p: Point2, segs: Iterable[tuple[Point2, Point2]], tol: float) -> bool:
    return any(point_segment_distance(p, a, b) <= tol for a, b in segs)


def _insert_points(points: Sequence[Point2], extra: dict[int, list[Point2]], tol: float) -> tuple[Point2, ...]:
    """Insert points into segment ``i`` (between points[i] and points[i+1]) in path order."""
    out = [points[0]]
    for i in range(len(points) - 1):
        a, b = points[i], points[i + 1]
        d = b - a
        L2 = d.dot(d)
        for q in sorted(extra.get(i, ()), key=lambda q: (q - a).dot(d) / L2):
            if q.distance(out[-1]) > tol and q.distance(b) > tol:
                out.append(q)
        out.append(b)
    return tuple(out)


def _snap(q: Point2, candidates: Iterable[Point2], tol: float) -> Point2:
    for c in candidates:
        if q.distance(c) <= tol:
            return c
    return q


def _crossing_points(sa, sb, tol) -> list[Point2]:
    res = segment_intersection(sa, sb, eps=tol)
    if res.kind is IntersectionKind.NONE:
        return []
    if res.kind is IntersectionKind.OVERLAP:
        return list(res.overlap)
    return [res.point]


def insert_road(net: RoadNetwork, road: Road, tol: float = SNAP_TOL) -> RoadNetwork:
    """Add a road, splitting it and every road it meets at the meeting points.

    Afterwards no two segments of the network cross at an interior point: each
    crossing, touching point and overlap end is a shared vertex (a junction).
    """
    if road.id in net.roads:
        raise ValueError(f"duplicate road id {road.id}")
    if road.kind is RoadKind.PRIMARY:
        prim = net.segments(RoadKind.PRIMARY)
        for end in (road.points[0], road.points[-1]):
            ok = _on_segments(end, prim, tol)
            if not ok and net.outline is not None:
                ok = on_boundary(net.outline, end, tol)
            if not ok:
                raise TopologyError(
                    f"primary road {road.id}: endpoint ({end.x:.3f}, {end.y:.3f}) is neither on the "
                    "region outline nor on another primary road"
                )
    # self-crossings
    segs = road.segments()
    extra_new: dict[int, list[Point2]] = {}
    for i in range(len(segs)):
        for j in range(i + 2, len(segs)):
            for q in _crossing_points(segs[i], segs[j], tol):
                extra_new.setdefault(i, []).append(q)
                extra_new.setdefault(j, []).append(q)
    junctions: set[tuple[float, float]] = set()
    for q_list in extra_new.values():
        junctions.update((q.x, q.y) for q in q_list)
    updated: dict[str, Road] = {}
    for rid in sorted(net.roads):
        other = net.roads[rid]
        osegs = other.segments()
        extra_old: dict[int, list[Point2]] = {}
        for i, s in enumerate(segs):
            for j, t in enumerate(osegs):
                for q in _crossing_points(s, t, tol):
                    q = _snap(q, (*s, *t), tol)
                    extra_new.setdefault(i, []).append(q)
                    extra_old.setdefault(j, []).append(q)
                    junctions.add((q.x, q.y))
        if extra_old:
            pts = _insert_points(other.points, extra_old, tol)
            if pts != other.points:
                updated[rid] = replace(other, points=pts)
    net.roads.update(updated)
    new_points = _insert_points(road.points, extra_new, tol)
    net.roads[road.id] = replace(road, points=new_points)
    net.junctions |= junctions
    return net


def interior_crossings(net: RoadNetwork, tol: float = SNAP_TOL) -> list[Point2]:
    """Brute-force sweep for proper crossings; empty after correct insertion."""
    segs = net.segments()
    out = []
    for i in range(len(segs)):
        for j in range(i + 1, len(segs)):
            res = segment_intersection(segs[i], segs[j], eps=tol)
            if res.kind is IntersectionKind.PROPER:
                out.append(res.point)
    return out


class FaceList(list):
    """Faces as polygons, plus the segments that could not bound any face."""

    def __init__(self, faces=(), dangling=()):
        super().__init__(faces)
        self.dangling = list(dangling)


def faces_of_segments(segments: Sequence, boundary: Polygon, tol: float = SNAP_TOL) -> FaceList:
    clipped = []
    for s in segments:
        clipped.extend(clip_segment_to_polygon(s, boundary, tol=EPS))
    bedges = boundary.edges()
    g = node_segments(list(bedges) + clipped, tol=tol)
    keep = [k for k, (x, y) in enumerate(g.coords) if on_boundary(boundary, Point2(x, y), tol)]
    fs = planar_faces(g, keep_vertices=keep)
    faces = []
    for ring in fs.faces:
        try:
            faces.append(Polygon(ring))
        except DegenerateGeometryError:
            continue
    faces.sort(key=lambda p: p.canonical_key())
    dangling = sorted(
        (tuple(sorted(((round(a[0], 9), round(a[1], 9)), (round(b[0], 9), round(b[1], 9))))) for a, b in fs.dangling)
    )
    return FaceList(faces, dangling)


def extract_faces(net: RoadNetwork | Sequence, boundary: Polygon, tol: float = SNAP_TOL) -> FaceList:
    """Bounded faces of the subdivision formed by the roads and the boundary ring.

    Traversal follows half-edges, turning to the most clockwise neighbour at
    each vertex.  Dead-end trees and components detached from the boundary
    are reported in ``.dangling`` and ignored for face formation.
    """
    segs = net.segments() if isinstance(net, RoadNetwork) else list(net)
    return faces_of_segments(segs, boundary, tol)


def extract_subregions(net: RoadNetwork, tol: float = SNAP_TOL) -> FaceList:
    if net.outline is None:
        raise ValueError("network has no outline")
    return faces_of_segments(net.segments(RoadKind.PRIMARY), net.outline, tol)


def classify_blocks(
    subregion: Polygon,
    secondary: Iterable[Road],
    subregion_id: str = "s0",
    street_segments: Sequence | None = None,
    outline_is_frontage: bool = True,
    tol: float = SNAP_TOL,
) -> FaceList:
    """City blocks of one subregion, each tagged with its street frontage.

    A block edge is frontage when it lies on a road segment (``street_segments``
    defaults to the given secondary roads) or, when ``outline_is_frontage``, on
    the subregion outline.
    """
    roads = list(secondary)
    segs = [s for r in roads for s in r.segments()]
    faces = faces_of_segments(segs, subregion, tol)
    streets = list(street_segments) if street_segments is not None else segs
    blocks = []
    for k, poly in enumerate(faces):
        front = []
        for a, b in poly.edges():
            m = a + (b - a) * 0.5
            on_street = _on_segments(a, streets, tol) and _on_segments(b, streets, tol) and _on_segments(m, streets, tol)
            on_outline = outline_is_frontage and on_boundary(subregion, m, tol) and on_boundary(subregion, a, tol) and on_boundary(subregion, b, tol)
            if on_street or on_outline:
                front.append((a, b))
        blocks.append(CityBlock(f"{subregion_id}.b{k}", poly, subregion_id, tuple(front)))
    return FaceList(blocks, faces.dangling)


def vertex_on_network(p: Point2, segs: Sequence, boundary: Polygon, tol: float = SNAP_TOL) -> bool:
    return _on_segments(p, segs, tol) or on_boundary(boundary, p, tol)
