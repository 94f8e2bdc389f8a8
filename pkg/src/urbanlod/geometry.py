"""Planar geometry shared by every stage of the pipeline.

Coordinates are meters on the projected plane.  Predicates use an absolute
tolerance of ``EPS`` meters; area comparisons are relative (``AREA_RTOL``).
Polygons are canonicalised to counter-clockwise winding when constructed, so
every signed-area or side test downstream can assume interior-on-the-left.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Iterable, Iterator, Sequence

import numpy as np

EPS = 1e-9
AREA_RTOL = 1e-6
SNAP_TOL = 1e-6

# WGS84
WGS84_A = 6378137.0
WGS84_F = 1.0 / 298.257223563
WGS84_E = math.sqrt(WGS84_F * (2.0 - WGS84_F))
MAX_MERCATOR_LAT = 89.5


class GeometryError(ValueError):
    pass


class DegenerateGeometryError(GeometryError):
    pass


class NoIntersectionError(GeometryError):
    pass


class OutOfDomainError(GeometryError):
    pass


class EmptyFootprint(GeometryError):
    """No inscribed rectangle reaches the requested minimum area."""


@dataclass(frozen=True, slots=True)
class Point2:
    x: float
    y: float

    def __post_init__(self):
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise GeometryError(f"non-finite point ({self.x}, {self.y})")

    def __iter__(self) -> Iterator[float]:
        yield self.x
        yield self.y

    def __add__(self, other: Point2) -> Point2:
        return Point2(self.x + other.x, self.y + other.y)

    def __sub__(self, other: Point2) -> Point2:
        return Point2(self.x - other.x, self.y - other.y)

    def __mul__(self, k: float) -> Point2:
        return Point2(self.x * k, self.y * k)

    __rmul__ = __mul__

    def dot(self, other: Point2) -> float:
        return self.x * other.x + self.y * other.y

    def cross(self, other: Point2) -> float:
        return self.x * other.y - self.y * other.x

    def norm(self) -> float:
        return math.hypot(self.x, self.y)

    def distance(self, other: Point2) -> float:
        return math.hypot(self.x - other.x, self.y - other.y)

    def as_tuple(self) -> tuple[float, float]:
        return (self.x, self.y)


def _pt(p) -> Point2:
    return p if isinstance(p, Point2) else Point2(float(p[0]), float(p[1]))


def signed_area(coords: Sequence[Sequence[float]]) -> float:
    """Shoelace signed area; positive for counter-clockwise rings.

    Terms are taken relative to the lexicographically smallest vertex and
    summed exactly, so the result does not depend on where the ring starts
    or on its direction (up to sign).
    """
    n = len(coords)
    if n < 3:
        return 0.0
    ox, oy = min((float(c[0]), float(c[1])) for c in coords)
    terms = []
    for i in range(n):
        x1, y1 = coords[i][0] - ox, coords[i][1] - oy
        x2, y2 = coords[(i + 1) % n][0] - ox, coords[(i + 1) % n][1] - oy
        terms.append(x1 * y2 - x2 * y1)
    return 0.5 * math.fsum(terms)


class Polygon:
    """Immutable polygon ring, stored counter-clockwise without a closing vertex.

    Construction rejects rings with fewer than three distinct vertices or with
    (near) zero area.  Simplicity is not enforced here because faces of
    arrangements containing bridges or pinch vertices are weakly simple; use
    :meth:`is_simple` where strict simplicity matters.
    """

    __slots__ = ("_vertices", "_area", "_coords")

    def __init__(self, vertices: Iterable):
        pts = [_pt(v) for v in vertices]
        if len(pts) > 1 and pts[0] == pts[-1]:
            pts.pop()
        # drop consecutive duplicates
        dedup: list[Point2] = []
        for p in pts:
            if not dedup or p.distance(dedup[-1]) > EPS:
                dedup.append(p)
        if len(dedup) > 1 and dedup[0].distance(dedup[-1]) <= EPS:
            dedup.pop()
        if len(dedup) < 3:
            raise DegenerateGeometryError("polygon needs at least 3 distinct vertices")
        a = signed_area([(p.x, p.y) for p in dedup])
        perimeter = sum(dedup[i].distance(dedup[i - 1]) for i in range(len(dedup)))
        if abs(a) <= EPS * perimeter:
            raise DegenerateGeometryError("polygon has zero area (collinear vertices)")
        if a < 0:
            dedup.reverse()
            a = -a
        self._vertices = tuple(dedup)
        self._area = a
        self._coords = None

    @property
    def vertices(self) -> tuple[Point2, ...]:
        return self._vertices

    @property
    def area(self) -> float:
        return self._area

    @property
    def coords(self) -> np.ndarray:
        if self._coords is None:
            c = np.array([(p.x, p.y) for p in self._vertices], dtype=float)
            c.setflags(write=False)
            self._coords = c
        return self._coords

    def __len__(self) -> int:
        return len(self._vertices)

    def __iter__(self) -> Iterator[Point2]:
        return iter(self._vertices)

    def __repr__(self) -> str:
        inner = ", ".join(f"({p.x:g}, {p.y:g})" for p in self._vertices)
        return f"Polygon([{inner}])"

    def __eq__(self, other) -> bool:
        if not isinstance(other, Polygon):
            return NotImplemented
        return self.canonical_key() == other.canonical_key()

    def __hash__(self) -> int:
        return hash(self.canonical_key())

    def canonical_key(self, ndigits: int = 6) -> tuple:
        """Rotation-invariant key: vertices rounded, starting at the smallest."""
        pts = [(round(p.x, ndigits) + 0.0, round(p.y, ndigits) + 0.0) for p in self._vertices]
        k = min(range(len(pts)), key=lambda i: pts[i])
        return tuple(pts[k:] + pts[:k])

    def edges(self) -> list[tuple[Point2, Point2]]:
        v = self._vertices
        return [(v[i], v[(i + 1) % len(v)]) for i in range(len(v))]

    def bounds(self) -> tuple[float, float, float, float]:
        c = self.coords
        return (float(c[:, 0].min()), float(c[:, 1].min()), float(c[:, 0].max()), float(c[:, 1].max()))

    def centroid(self) -> Point2:
        cx = cy = 0.0
        v = self._vertices
        o = v[0]
        for i in range(1, len(v) - 1):
            ax, ay = v[i].x - o.x, v[i].y - o.y
            bx, by = v[i + 1].x - o.x, v[i + 1].y - o.y
            w = ax * by - bx * ay
            cx += (ax + bx) * w
            cy += (ay + by) * w
        k = 1.0 / (6.0 * self._area)
        return Point2(o.x + cx * k, o.y + cy * k)

    def contains(self, p, boundary: bool = True) -> bool:
        p = _pt(p)
        if on_boundary(self, p):
            return boundary
        return _point_in_ring(self._vertices, p.x, p.y)

    def interior_point(self) -> Point2:
        """A point strictly inside; the centroid when it qualifies."""
        c = self.centroid()
        if self.contains(c, boundary=False):
            return c
        # widest horizontal chord through a few scanlines
        xmin, ymin, xmax, ymax = self.bounds()
        best = None
        for frac in (0.5, 0.25, 0.75, 0.375, 0.625, 0.125, 0.875):
            y = ymin + frac * (ymax - ymin)
            xs = []
            for a, b in self.edges():
                if (a.y > y) != (b.y > y):
                    xs.append(a.x + (y - a.y) * (b.x - a.x) / (b.y - a.y))
            xs.sort()
            for i in range(0, len(xs) - 1, 2):
                w = xs[i + 1] - xs[i]
                if best is None or w > best[0]:
                    best = (w, Point2(0.5 * (xs[i] + xs[i + 1]), y))
        if best is None or best[0] <= EPS:
            raise DegenerateGeometryError("cannot find an interior point")
        return best[1]

    def is_simple(self) -> bool:
        edges = self.edges()
        n = len(edges)
        for i in range(n):
            for j in range(i + 1, n):
                if j == i + 1 or (i == 0 and j == n - 1):
                    continue
                if segment_intersection(edges[i], edges[j]).kind is not IntersectionKind.NONE:
                    return False
        return True

    def translated(self, dx: float, dy: float) -> Polygon:
        return Polygon([(p.x + dx, p.y + dy) for p in self._vertices])

    def rotated(self, angle: float, origin=(0.0, 0.0)) -> Polygon:
        ox, oy = origin
        c, s = math.cos(angle), math.sin(angle)
        return Polygon(
            [(ox + c * (p.x - ox) - s * (p.y - oy), oy + s * (p.x - ox) + c * (p.y - oy)) for p in self._vertices]
        )

    @classmethod
    def rectangle(cls, x0: float, y0: float, x1: float, y1: float) -> Polygon:
        return cls([(x0, y0), (x1, y0), (x1, y1), (x0, y1)])


def _point_in_ring(vertices: Sequence[Point2], x: float, y: float) -> bool:
    inside = False
    n = len(vertices)
    j = n - 1
    for i in range(n):
        xi, yi = vertices[i].x, vertices[i].y
        xj, yj = vertices[j].x, vertices[j].y
        if (yi > y) != (yj > y):
            xint = xi + (y - yi) * (xj - xi) / (yj - yi)
            if x < xint:
                inside = not inside
        j = i
    return inside


def points_in_polygon(poly: Polygon, pts: np.ndarray) -> np.ndarray:
    """Vectorised even-odd test (boundary points are unspecified)."""
    pts = np.asarray(pts, dtype=float)
    x, y = pts[:, 0], pts[:, 1]
    inside = np.zeros(len(pts), dtype=bool)
    c = poly.coords
    xj, yj = c[-1]
    for xi, yi in c:
        crosses = (yi > y) != (yj > y)
        with np.errstate(divide="ignore", invalid="ignore"):
            xint = xi + (y - yi) * (xj - xi) / (yj - yi)
        inside ^= crosses & (x < xint)
        xj, yj = xi, yi
    return inside


def point_segment_distance(p, a, b) -> float:
    p, a, b = _pt(p), _pt(a), _pt(b)
    d = b - a
    L2 = d.dot(d)
    if L2 == 0.0:
        return p.distance(a)
    t = max(0.0, min(1.0, (p - a).dot(d) / L2))
    return math.hypot(p.x - (a.x + t * d.x), p.y - (a.y + t * d.y))


def on_boundary(poly: Polygon, p, tol: float = EPS) -> bool:
    p = _pt(p)
    return any(point_segment_distance(p, a, b) <= tol for a, b in poly.edges())


def polygon_distance(poly: Polygon, p) -> float:
    """Zero inside, otherwise distance to the ring."""
    p = _pt(p)
    if poly.contains(p):
        return 0.0
    return min(point_segment_distance(p, a, b) for a, b in poly.edges())


def polygon_area(p) -> float:
    """Area of a polygon, or of a raw vertex list (validated the same way)."""
    if not isinstance(p, Polygon):
        p = Polygon(p)
    return p.area


# ---------------------------------------------------------------------------
# segment intersection


class IntersectionKind(enum.Enum):
    NONE = "none"
    PROPER = "proper"
    TOUCHING = "touching"
    OVERLAP = "overlap"


@dataclass(frozen=True)
class SegmentIntersection:
    kind: IntersectionKind
    point: Point2 | None = None
    overlap: tuple[Point2, Point2] | None = None

    def __bool__(self) -> bool:
        return self.kind is not IntersectionKind.NONE


_NONE = SegmentIntersection(IntersectionKind.NONE)


def segment_intersection(a, b, eps: float = EPS) -> SegmentIntersection:
    """Classify how two closed segments meet.

    PROPER means the interiors cross at a single point; TOUCHING means they
    share exactly one point that is an endpoint of at least one of them;
    OVERLAP means collinear with a shared sub-segment of positive length.
    """
    a0, a1 = _pt(a[0]), _pt(a[1])
    b0, b1 = _pt(b[0]), _pt(b[1])
    r = a1 - a0
    s = b1 - b0
    lr, ls = r.norm(), s.norm()
    if lr <= eps or ls <= eps:
        raise DegenerateGeometryError("zero-length segment")
    qp = b0 - a0
    denom = r.cross(s)
    if abs(denom) / (lr * ls) < 1e-12:
        # parallel: collinear only if b0 lies on line a
        if abs(qp.cross(r)) / lr > eps:
            return _NONE
        t0 = qp.dot(r) / (lr * lr)
        t1 = (b1 - a0).dot(r) / (lr * lr)
        lo, hi = max(0.0, min(t0, t1)), min(1.0, max(t0, t1))
        if (hi - lo) * lr > eps:
            return SegmentIntersection(
                IntersectionKind.OVERLAP, overlap=(a0 + r * lo, a0 + r * hi)
            )
        if (hi - lo) * lr >= -eps:
            t = 0.5 * (lo + hi)
            return SegmentIntersection(IntersectionKind.TOUCHING, point=_snap_endpoint(a0 + r * t, a0, a1, b0, b1, eps=eps))
        return _NONE
    t = qp.cross(s) / denom
    u = qp.cross(r) / denom
    te, ue = eps / lr, eps / ls
    if t < -te or t > 1 + te or u < -ue or u > 1 + ue:
        return _NONE
    # check endpoint proximity by distance, which is robust for shallow angles
    for e in (a0, a1):
        if point_segment_distance(e, b0, b1) <= eps:
            return SegmentIntersection(IntersectionKind.TOUCHING, point=e)
    for e in (b0, b1):
        if point_segment_distance(e, a0, a1) <= eps:
            return SegmentIntersection(IntersectionKind.TOUCHING, point=e)
    if te < t < 1 - te and ue < u < 1 - ue:
        return SegmentIntersection(IntersectionKind.PROPER, point=a0 + r * t)
    return _NONE


def _snap_endpoint(p: Point2, *ends: Point2, eps: float = EPS) -> Point2:
    for e in ends:
        if p.distance(e) <= eps:
            return e
    return p


# ---------------------------------------------------------------------------
# convex hull / oriented bounding box


def convex_hull(points) -> list[Point2]:
    pts = sorted({(p.x, p.y) if isinstance(p, Point2) else (float(p[0]), float(p[1])) for p in points})
    if len(pts) < 3:
        return [Point2(*p) for p in pts]

    def cross(o, a, b):
        return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])

    lower: list = []
    for p in pts:
        while len(lower) >= 2 and cross(lower[-2], lower[-1], p) <= 0:
            lower.pop()
        lower.append(p)
    upper: list = []
    for p in reversed(pts):
        while len(upper) >= 2 and cross(upper[-2], upper[-1], p) <= 0:
            upper.pop()
        upper.append(p)
    return [Point2(*p) for p in lower[:-1] + upper[:-1]]


@dataclass(frozen=True)
class OrientedBoundingBox:
    center: Point2
    axis_major: Point2
    half_extent_major: float
    half_extent_minor: float

    def __post_init__(self):
        if not (self.half_extent_major >= self.half_extent_minor > 0):
            raise GeometryError("OBB extents must satisfy major >= minor > 0")
        if abs(self.axis_major.norm() - 1.0) > 1e-9:
            raise GeometryError("OBB axis must be a unit vector")

    @property
    def axis_minor(self) -> Point2:
        return Point2(-self.axis_major.y, self.axis_major.x)

    @property
    def area(self) -> float:
        return 4.0 * self.half_extent_major * self.half_extent_minor

    def corners(self) -> list[Point2]:
        u, v = self.axis_major, self.axis_minor
        a, b = self.half_extent_major, self.half_extent_minor
        c = self.center
        return [c + u * sa * a + v * sb * b for sa, sb in ((-1, -1), (1, -1), (1, 1), (-1, 1))]

    def contains(self, p, slack: float = EPS) -> bool:
        d = _pt(p) - self.center
        return (
            abs(d.dot(self.axis_major)) <= self.half_extent_major + slack
            and abs(d.dot(self.axis_minor)) <= self.half_extent_minor + slack
        )


def _canonical_axis(ux: float, uy: float) -> tuple[float, float]:
    if ux < 0 or (ux == 0 and uy < 0):
        return -ux, -uy
    return ux, uy


def compute_obb(p: Polygon) -> OrientedBoundingBox:
    """Minimum-area enclosing rectangle by rotating calipers over the hull."""
    if not isinstance(p, Polygon):
        p = Polygon(p)
    hull = convex_hull(p.vertices)
    if len(hull) < 3:
        raise DegenerateGeometryError("degenerate polygon has no OBB")
    H = np.array([(q.x, q.y) for q in hull])
    best = None
    n = len(H)
    for i in range(n):
        e = H[(i + 1) % n] - H[i]
        L = math.hypot(e[0], e[1])
        if L <= EPS:
            continue
        u = e / L
        v = np.array([-u[1], u[0]])
        pu = H @ u
        pv = H @ v
        area = (pu.max() - pu.min()) * (pv.max() - pv.min())
        if best is None or area < best[0] * (1 - 1e-12):
            best = (area, u, v, pu.min(), pu.max(), pv.min(), pv.max())
    _, u, v, u0, u1, v0, v1 = best
    cu, cv = 0.5 * (u0 + u1), 0.5 * (v0 + v1)
    center = Point2(float(cu * u[0] + cv * v[0]), float(cu * u[1] + cv * v[1]))
    eu, ev = 0.5 * (u1 - u0), 0.5 * (v1 - v0)
    au = _canonical_axis(float(u[0]), float(u[1]))
    av = _canonical_axis(float(v[0]), float(v[1]))
    if abs(eu - ev) <= EPS * max(1.0, eu):
        # tie: the axis closer to +x is the major one
        major, ext = (au, eu) if au >= av else (av, ev)
        return OrientedBoundingBox(center, Point2(*major), ext, ext)
    if eu > ev:
        return OrientedBoundingBox(center, Point2(*au), float(eu), float(ev))
    return OrientedBoundingBox(center, Point2(*av), float(ev), float(eu))


# ---------------------------------------------------------------------------
# planar arrangements


class _VertexIndex:
    """Snaps points closer than ``tol`` onto the same vertex id."""

    def __init__(self, tol: float):
        self.tol = tol
        self.cell = max(tol, 1e-12) * 4.0
        self.coords: list[tuple[float, float]] = []
        self._grid: dict[tuple[int, int], list[int]] = {}

    def add(self, x: float, y: float) -> int:
        ci, cj = int(math.floor(x / self.cell)), int(math.floor(y / self.cell))
        best, bd = -1, self.tol
        for di in (-1, 0, 1):
            for dj in (-1, 0, 1):
                for k in self._grid.get((ci + di, cj + dj), ()):
                    qx, qy = self.coords[k]
                    d = math.hypot(qx - x, qy - y)
                    if d <= bd:
                        best, bd = k, d
        if best >= 0:
            return best
        k = len(self.coords)
        self.coords.append((x, y))
        self._grid.setdefault((ci, cj), []).append(k)
        return k


@dataclass
class PlanarGraph:
    coords: list[tuple[float, float]]
    edges: list[tuple[int, int]]


def node_segments(segments: Sequence, tol: float = SNAP_TOL) -> PlanarGraph:
    """Split segments at every mutual intersection and build a planar graph.

    Endpoints within ``tol`` of each other are merged; collinear overlaps
    collapse to shared edges.
    """
    segs = []
    for s in segments:
        a, b = _pt(s[0]), _pt(s[1])
        if a.distance(b) > tol:
            segs.append((a, b))
    n = len(segs)
    params: list[list[tuple[float, Point2]]] = [[(0.0, a), (1.0, b)] for a, b in segs]
    if n:
        arr = np.array([(a.x, a.y, b.x, b.y) for a, b in segs])
        lo = np.minimum(arr[:, :2], arr[:, 2:]) - tol
        hi = np.maximum(arr[:, :2], arr[:, 2:]) + tol
        ov = (
            (lo[:, None, 0] <= hi[None, :, 0])
            & (lo[None, :, 0] <= hi[:, None, 0])
            & (lo[:, None, 1] <= hi[None, :, 1])
            & (lo[None, :, 1] <= hi[:, None, 1])
        )
        ii, jj = np.nonzero(np.triu(ov, k=1))
        for i, j in zip(ii.tolist(), jj.tolist()):
            res = segment_intersection(segs[i], segs[j], eps=tol)
            if res.kind is IntersectionKind.NONE:
                continue
            pts = [res.point] if res.point is not None else list(res.overlap)
            for q in pts:
                for k in (i, j):
                    a, b = segs[k]
                    d = b - a
                    t = (q - a).dot(d) / d.dot(d)
                    params[k].append((min(1.0, max(0.0, t)), q))
    vi = _VertexIndex(tol)
    edges: set[tuple[int, int]] = set()
    for plist in params:
        plist.sort(key=lambda tp: tp[0])
        ids = []
        for _, q in plist:
            k = vi.add(q.x, q.y)
            if not ids or ids[-1] != k:
                ids.append(k)
        for u, v in zip(ids, ids[1:]):
            if u != v:
                edges.add((min(u, v), max(u, v)))
    return PlanarGraph(vi.coords, sorted(edges))


@dataclass
class FaceSet:
    faces: list[list[tuple[float, float]]]
    dangling: list[tuple[tuple[float, float], tuple[float, float]]]


def planar_faces(graph: PlanarGraph, keep_vertices: Iterable[int] | None = None) -> FaceSet:
    """Bounded faces of a plane graph by half-edge traversal.

    Degree-one trees are pruned first (reported as dangling).  When
    ``keep_vertices`` is given, only the connected component containing them
    forms faces and every other component is reported as dangling too.
    Faces are returned counter-clockwise.
    """
    coords = graph.coords
    adj: dict[int, set[int]] = {}
    for u, v in graph.edges:
        adj.setdefault(u, set()).add(v)
        adj.setdefault(v, set()).add(u)
    dangling: list = []

    def drop(u: int, v: int) -> None:
        adj[u].discard(v)
        adj[v].discard(u)
        dangling.append((coords[u], coords[v]))

    stack = [u for u, nb in adj.items() if len(nb) == 1]
    while stack:
        u = stack.pop()
        if len(adj.get(u, ())) != 1:
            continue
        (v,) = adj[u]
        drop(u, v)
        if len(adj[v]) == 1:
            stack.append(v)
    if keep_vertices is not None:
        seeds = [k for k in keep_vertices if adj.get(k)]
        seen = set(seeds)
        todo = list(seeds)
        while todo:
            u = todo.pop()
            for w in adj[u]:
                if w not in seen:
                    seen.add(w)
                    todo.append(w)
        for u in sorted(adj):
            if u not in seen:
                for v in sorted(adj[u]):
                    if u < v:
                        dangling.append((coords[u], coords[v]))
                adj[u] = set()
        for u in list(adj):
            adj[u] &= seen
    order: dict[int, list[int]] = {}
    for u, nb in adj.items():
        if not nb:
            continue
        ux, uy = coords[u]
        order[u] = sorted(nb, key=lambda w: math.atan2(coords[w][1] - uy, coords[w][0] - ux))
    pos = {(u, w): i for u, nb in order.items() for i, w in enumerate(nb)}
    visited: set[tuple[int, int]] = set()
    faces = []
    for u0 in sorted(order):
        for v0 in order[u0]:
            if (u0, v0) in visited:
                continue
            ring = []
            u, v = u0, v0
            while (u, v) not in visited:
                visited.add((u, v))
                ring.append(u)
                nb = order[v]
                w = nb[(pos[(v, u)] - 1) % len(nb)]
                u, v = v, w
            pts = [coords[k] for k in ring]
            if len(pts) >= 3 and signed_area(pts) > 0:
                faces.append(pts)
    return FaceSet(faces, dangling)


def clip_segment_to_polygon(seg, poly: Polygon, tol: float = EPS) -> list[tuple[Point2, Point2]]:
    """Pieces of a segment lying inside or on the boundary of ``poly``."""
    a, b = _pt(seg[0]), _pt(seg[1])
    d = b - a
    L2 = d.dot(d)
    if L2 <= tol * tol:
        return []
    ts = {0.0, 1.0}
    for e in poly.edges():
        res = segment_intersection((a, b), e, eps=tol)
        pts = [res.point] if res.point is not None else (list(res.overlap) if res.overlap else [])
        for q in pts:
            ts.add(min(1.0, max(0.0, (q - a).dot(d) / L2)))
    ts = sorted(ts)
    out: list[tuple[Point2, Point2]] = []
    for t0, t1 in zip(ts, ts[1:]):
        if (t1 - t0) * math.sqrt(L2) <= tol:
            continue
        m = a + d * (0.5 * (t0 + t1))
        if poly.contains(m, boundary=True):
            p0, p1 = a + d * t0, a + d * t1
            if out and out[-1][1].distance(p0) <= tol:
                out[-1] = (out[-1][0], p1)
            else:
                out.append((p0, p1))
    return out


def split_polygon(p: Polygon, point, direction) -> list[Polygon]:
    """Cut a (possibly concave) polygon by an infinite line.

    Returns every piece; a cut across a notch yields more than two.
    """
    point, direction = _pt(point), _pt(direction)
    L = direction.norm()
    if L <= EPS:
        raise GeometryError("cut direction must be non-zero")
    d = direction * (1.0 / L)
    n = Point2(-d.y, d.x)
    verts = p.vertices
    s = [(v - point).dot(n) for v in verts]
    if all(x >= -EPS for x in s) or all(x <= EPS for x in s):
        raise NoIntersectionError("cut line does not cross the polygon interior")
    hits: list[tuple[float, Point2]] = []
    m = len(verts)
    for i in range(m):
        j = (i + 1) % m
        si, sj = s[i], s[j]
        if abs(si) <= EPS:
            hits.append(((verts[i] - point).dot(d), verts[i]))
        if (si > EPS and sj < -EPS) or (si < -EPS and sj > EPS):
            t = si / (si - sj)
            q = verts[i] + (verts[j] - verts[i]) * t
            hits.append(((q - point).dot(d), q))
    hits.sort(key=lambda h: h[0])
    chords = []
    for (t0, q0), (t1, q1) in zip(hits, hits[1:]):
        if t1 - t0 <= EPS:
            continue
        mid = q0 + (q1 - q0) * 0.5
        if p.contains(mid, boundary=False):
            chords.append((q0, q1))
    if not chords:
        raise NoIntersectionError("cut line does not cross the polygon interior")
    g = node_segments(list(p.edges()) + chords, tol=EPS * 10)
    faces = planar_faces(g).faces
    return [Polygon(f) for f in faces]


# ---------------------------------------------------------------------------
# largest inscribed rectangle


def _segment_hits_open_boxes(p0, p1, x0, x1, y0, y1) -> np.ndarray:
    """Liang-Barsky: does segment p0-p1 meet the open interior of each box?"""
    dx, dy = p1[0] - p0[0], p1[1] - p0[1]
    tlo = np.zeros_like(x0)
    thi = np.ones_like(x0)
    ok = np.ones(x0.shape, dtype=bool)
    for pd, q_lo, q_hi in ((dx, p0[0] - x0, x1 - p0[0]), (dy, p0[1] - y0, y1 - p0[1])):
        if abs(pd) < 1e-15:
            ok &= (q_lo > 0) & (q_hi > 0)
            continue
        t_a = -q_lo / pd
        t_b = q_hi / pd
        tmin = np.minimum(t_a, t_b)
        tmax = np.maximum(t_a, t_b)
        tlo = np.maximum(tlo, tmin)
        thi = np.minimum(thi, tmax)
    return ok & (thi - tlo > 1e-12)


def _largest_in_histogram(h: Sequence[int]) -> tuple[int, int, int]:
    """(area, start, end) of the largest rectangle under a histogram."""
    best = (0, 0, 0)
    stack: list[int] = []
    hh = list(h) + [0]
    for i, x in enumerate(hh):
        start = i
        while stack and hh[stack[-1]] >= x:
            k = stack.pop()
            left = stack[-1] + 1 if stack else 0
            area = hh[k] * (i - left)
            if area > best[0]:
                best = (area, left, i)
            start = left
        stack.append(i)
    return best


def _inside_cells(rc: np.ndarray, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
    """Boolean mask [row, col] of grid cells lying fully inside the ring."""
    X0, Y0 = np.meshgrid(xs[:-1], ys[:-1])
    X1, Y1 = np.meshgrid(xs[1:], ys[1:])
    centers = np.column_stack([(0.5 * (X0 + X1)).ravel(), (0.5 * (Y0 + Y1)).ravel()])
    ring = Polygon(rc)
    mask = points_in_polygon(ring, centers).reshape(X0.shape)
    shrink = 1e-9 * max(1.0, float(np.abs(rc).max()))
    bx0, bx1, by0, by1 = X0 + shrink, X1 - shrink, Y0 + shrink, Y1 - shrink
    m = len(rc)
    for i in range(m):
        mask &= ~_segment_hits_open_boxes(rc[i], rc[(i + 1) % m], bx0, bx1, by0, by1)
    return mask


def largest_inscribed_rectangle(
    p: Polygon,
    required_edge=None,
    resolution: int = 64,
    min_area: float = 0.0,
) -> Polygon:
    """Approximate largest rectangle inside ``p`` by grid search.

    Candidate orientations are the directions of the polygon's edges plus the
    x axis; with ``required_edge`` only that edge's direction is tried and the
    rectangle must sit on the edge.  For each orientation the rotated polygon
    is rasterised at ``resolution`` cells along its longer side and the
    maximal all-inside block of cells is taken.  Loss against the true optimum
    is bounded by the staircase error of the grid, about 2/resolution of the
    polygon's extent for convex shapes aligned with one of their edges.
    """
    if not isinstance(p, Polygon):
        p = Polygon(p)
    C = p.coords
    if required_edge is not None:
        e0, e1 = _pt(required_edge[0]), _pt(required_edge[1])
        angles = [math.atan2(e1.y - e0.y, e1.x - e0.x)]
    else:
        raw = [0.0]
        for a, b in p.edges():
            raw.append(math.atan2(b.y - a.y, b.x - a.x) % (math.pi / 2))
        angles = []
        for a in sorted(raw):
            if not angles or a - angles[-1] > 1e-9:
                angles.append(a)
        if len(angles) > 1 and angles[-1] > math.pi / 2 - 1e-9:
            angles.pop()
    best = None
    for theta in angles:
        c, s = math.cos(theta), math.sin(theta)
        R = np.array([[c, s], [-s, c]])  # world -> local
        rc = C @ R.T
        xmin, ymin = rc.min(axis=0)
        xmax, ymax = rc.max(axis=0)
        if required_edge is not None:
            le0 = np.array([e0.x, e0.y]) @ R.T
            le1 = np.array([e1.x, e1.y]) @ R.T
            ybase = 0.5 * (le0[1] + le1[1])
            ex0, ex1 = sorted((le0[0], le1[0]))
            xmin, xmax, ymin = ex0, ex1, ybase
            if ymax - ymin <= EPS:
                continue
        w, h = xmax - xmin, ymax - ymin
        if w <= EPS or h <= EPS:
            continue
        cell = max(w, h) / resolution
        nx, ny = max(1, int(math.ceil(w / cell - 1e-9))), max(1, int(math.ceil(h / cell - 1e-9)))
        xs = np.linspace(xmin, xmax, nx + 1)
        ys = np.linspace(ymin, ymax, ny + 1)
        mask = _inside_cells(rc, xs, ys)
        heights = np.zeros(nx, dtype=int)
        cand = None
        if required_edge is not None:
            # stacks of inside cells standing on the edge row
            heights = np.cumprod(mask, axis=0).sum(axis=0)
            _, i0, i1 = _largest_in_histogram(heights.tolist())
            if i1 > i0:
                hmin = int(heights[i0:i1].min())
                area = (xs[i1] - xs[i0]) * (ys[hmin] - ys[0])
                cand = (area, xs[i0], xs[i1], ys[0], ys[hmin])
        else:
            dx, dy = xs[1] - xs[0], ys[1] - ys[0]
            for r in range(ny):
                heights = np.where(mask[r], heights + 1, 0)
                area_cells, i0, i1 = _largest_in_histogram(heights.tolist())
                if area_cells == 0:
                    continue
                hmin = int(heights[i0:i1].min())
                area = (i1 - i0) * dx * hmin * dy
                if cand is None or area > cand[0]:
                    cand = (area, xs[i0], xs[i1], ys[r + 1 - hmin], ys[r + 1])
        if cand is not None and (best is None or cand[0] > best[0][0] * (1 + 1e-12)):
            best = (cand, R)
    if best is None or best[0][0] <= 0.0 or best[0][0] < min_area:
        raise EmptyFootprint("no inscribed rectangle above the minimum area")
    (area, x0, x1, y0, y1), R = best
    local = np.array([(x0, y0), (x1, y0), (x1, y1), (x0, y1)])
    world = local @ R  # inverse rotation
    return Polygon([tuple(map(float, q)) for q in world])


# ---------------------------------------------------------------------------
# projection


@dataclass(frozen=True)
class GeoCoordinate:
    latitude: float
    longitude: float

    def __post_init__(self):
        if not (-90.0 <= self.latitude <= 90.0):
            raise OutOfDomainError(f"latitude {self.latitude} outside [-90, 90]")
        if not (-180.0 <= self.longitude <= 180.0):
            raise OutOfDomainError(f"longitude {self.longitude} outside [-180, 180]")


def project_elliptical_mercator(g: GeoCoordinate) -> Point2:
    """Forward ellipsoidal (WGS84) Mercator, meters."""
    if abs(g.latitude) > MAX_MERCATOR_LAT:
        raise OutOfDomainError(f"|latitude| must be <= {MAX_MERCATOR_LAT}")
    lam = math.radians(g.longitude)
    phi = math.radians(g.latitude)
    # ln(tan(pi/4 + phi/2)) written as asinh(tan(phi)) so the equator maps to exactly 0
    es = WGS84_E * math.sin(phi)
    y = WGS84_A * (math.asinh(math.tan(phi)) - 0.5 * WGS84_E * math.log((1 + es) / (1 - es)))
    return Point2(WGS84_A * lam, y)


def inverse_elliptical_mercator(p) -> GeoCoordinate:
    p = _pt(p)
    lon = min(180.0, max(-180.0, math.degrees(p.x / WGS84_A)))
    t = math.exp(-p.y / WGS84_A)
    phi = math.pi / 2 - 2 * math.atan(t)
    for _ in range(50):
        es = WGS84_E * math.sin(phi)
        nxt = math.pi / 2 - 2 * math.atan(t * ((1 - es) / (1 + es)) ** (WGS84_E / 2))
        if abs(nxt - phi) < 1e-15:
            phi = nxt
            break
        phi = nxt
    return GeoCoordinate(math.degrees(phi), lon)
