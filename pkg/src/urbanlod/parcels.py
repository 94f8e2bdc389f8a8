"""Parcel subdivision of city blocks, street-access resolution, setbacks and buildings."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import shapely.geometry as sg
from shapely.ops import unary_union

from .geometry import (
    EPS,
    SNAP_TOL,
    DegenerateGeometryError,
    EmptyFootprint,
    GeometryError,
    NoIntersectionError,
    Point2,
    Polygon,
    compute_obb,
    largest_inscribed_rectangle,
    split_polygon,
)
from .rng import derive_rng
from .roadnet import CityBlock

MIN_PARCEL_AREA = 1.0
MIN_FOOTPRINT_AREA = 9.0
FLOOR_HEIGHT = 3.0


class NoAccessPolicy(str, enum.Enum):
    FLAG_NON_BUILDING = "flag_non_building"
    REVERT_VALIDATE = "revert_validate"
    REVERT_SPLIT_MINOR = "revert_split_minor"
    CREATE_SECONDARY_STREET = "create_secondary_street"
    CREATE_ALLEYWAY = "create_alleyway"


class EmptyUsableArea(GeometryError):
    """Setbacks swallow the whole parcel."""


@dataclass(frozen=True)
class SubdivisionConfig:
    area_threshold: float
    offset_range: float = 0.0
    no_access_policy: NoAccessPolicy = NoAccessPolicy.FLAG_NON_BUILDING
    rng_seed: int = 0
    street_width: float = 6.0

    def __post_init__(self):
        object.__setattr__(self, "no_access_policy", NoAccessPolicy(self.no_access_policy))
        if not self.area_threshold > 0:
            raise ValueError("area_threshold must be positive")
        if not 0.0 <= self.offset_range <= 0.45:
            raise ValueError("offset_range must lie in [0, 0.45]")
        if not self.street_width > 0:
            raise ValueError("street_width must be positive")


@dataclass
class Parcel:
    id: str
    polygon: Polygon
    has_street_access: bool
    flag: str  # "buildable" | "non_building"
    block_id: str
    frontage_edges: tuple[int, ...] = ()
    access_via: str = "street"  # "street" | "alleyway" | "none"

    @property
    def buildable(self) -> bool:
        return self.flag == "buildable"


@dataclass(frozen=True)
class BuildingSpec:
    parcel_id: str
    footprint: Polygon
    floors: int
    setback_front: float
    setback_side: float

    def __post_init__(self):
        if self.floors < 1:
            raise ValueError("floors must be >= 1")

    @property
    def height(self) -> float:
        return self.floors * FLOOR_HEIGHT


class ParcelList(list):
    """Parcels of one block plus what happened while producing them."""

    def __init__(self, parcels=(), report=(), street_area: float = 0.0, streets=()):
        super().__init__(parcels)
        self.report = list(report)
        self.street_area = street_area
        self.streets = list(streets)


def _near_segments(pts: np.ndarray, segs: np.ndarray, tol: float) -> np.ndarray:
    """For each point, whether some segment ``(ax, ay, bx, by)`` lies within ``tol``."""
    if len(segs) == 0:
        return np.zeros(len(pts), dtype=bool)
    ax, ay = segs[:, 0], segs[:, 1]
    dx, dy = segs[:, 2] - ax, segs[:, 3] - ay
    L2 = dx * dx + dy * dy
    px, py = pts[:, :1], pts[:, 1:]
    with np.errstate(invalid="ignore", divide="ignore"):
        t = np.where(L2 > 0, ((px - ax) * dx + (py - ay) * dy) / np.where(L2 > 0, L2, 1.0), 0.0)
    t = np.clip(t, 0.0, 1.0)
    d = np.hypot(px - (ax + t * dx), py - (ay + t * dy))
    return (d <= tol).any(axis=1)


def frontage_edge_indices(poly: Polygon, frontage: Sequence, tol: float = SNAP_TOL) -> tuple[int, ...]:
    """Indices of polygon edges lying on the street frontage."""
    edges = [(i, a, b) for i, (a, b) in enumerate(poly.edges()) if a.distance(b) > tol]
    if not edges or not frontage:
        return ()
    segs = np.array([(a.x, a.y, b.x, b.y) for a, b in frontage], dtype=float)
    # both endpoints and the midpoint of an edge must touch the frontage
    pts = []
    for _, a, b in edges:
        m = a + (b - a) * 0.5
        pts.extend(((a.x, a.y), (b.x, b.y), (m.x, m.y)))
    pts = np.array(pts)
    hit = _near_segments(pts, segs, tol).reshape(-1, 3).all(axis=1)
    return tuple(i for (i, _, _), h in zip(edges, hit) if h)


def has_access(parcel: Parcel, frontage: Sequence, tol: float = SNAP_TOL) -> bool:
    """Re-checkable access predicate: geometric frontage or an alleyway easement."""
    if parcel.access_via == "alleyway":
        return True
    return bool(frontage_edge_indices(parcel.polygon, frontage, tol))


def _cut(poly: Polygon, along_major: bool, offset_frac: float) -> list[Polygon] | None:
    obb = compute_obb(poly)
    if along_major:
        axis, half = obb.axis_major, obb.half_extent_major
    else:
        axis, half = obb.axis_minor, obb.half_extent_minor
    at = obb.center + axis * (2.0 * half * offset_frac)
    direction = Point2(-axis.y, axis.x)
    try:
        pieces = split_polygon(poly, at, direction)
    except (NoIntersectionError, DegenerateGeometryError):
        return None
    if len(pieces) < 2 or any(q.area < MIN_PARCEL_AREA for q in pieces):
        return None
    if max(q.area for q in pieces) >= poly.area:
        return None
    return pieces


def subdivide_block(
    block: CityBlock,
    cfg: SubdivisionConfig,
    rng: np.random.Generator | None = None,
) -> ParcelList:
    """Recursively split a block across its OBB major axis into parcels.

    Each cut is perpendicular to the major axis through the midpoint shifted
    by a uniform draw in ``[-offset_range, +offset_range]`` of the axis
    length; recursion stops once a piece is within ``area_threshold``.
    Parcels without street access are then handled per the configured policy.
    """
    if rng is None:
        rng = derive_rng(cfg.rng_seed, block.id)
    policy = cfg.no_access_policy
    frontage = list(block.frontage)
    report: list[str] = []
    leaves: list[Polygon] = []
    # parents kept whole by revert_validate
    validated: set[int] = set()

    def draw() -> float:
        return float(rng.uniform(-cfg.offset_range, cfg.offset_range)) if cfg.offset_range > 0 else 0.0

    stack = [block.polygon]
    while stack:
        poly = stack.pop()
        if poly.area <= cfg.area_threshold:
            leaves.append(poly)
            continue
        pieces = _cut(poly, True, draw())
        if pieces is None:
            report.append(f"{block.id}: unsplittable sliver kept as a parcel ({poly.area:.3f} m2)")
            leaves.append(poly)
            continue
        if policy in (NoAccessPolicy.REVERT_VALIDATE, NoAccessPolicy.REVERT_SPLIT_MINOR):
            lacking = [q for q in pieces if not frontage_edge_indices(q, frontage)]
            if lacking and frontage_edge_indices(poly, frontage):
                if policy is NoAccessPolicy.REVERT_VALIDATE:
                    report.append(f"{block.id}: cut reverted, parcel validated ({poly.area:.1f} m2)")
                    validated.add(len(leaves))
                    leaves.append(poly)
                    continue
                alt = _cut(poly, False, draw())
                if alt is not None and all(frontage_edge_indices(q, frontage) for q in alt):
                    pieces = alt
                else:
                    report.append(f"{block.id}: minor-axis retry still lacks access; falling back to non-building flag")
        # depth-first, first piece processed first
        stack.extend(reversed(pieces))

    polys = leaves
    street_area = 0.0
    streets: list[Polygon] = []
    if policy is NoAccessPolicy.CREATE_SECONDARY_STREET:
        polys, frontage, street_area, streets = _carve_streets(polys, frontage, cfg.street_width, block.id, report)

    parcels = ParcelList(report=report, street_area=street_area, streets=streets)
    for k, poly in enumerate(polys):
        front = frontage_edge_indices(poly, frontage)
        p = Parcel(f"{block.id}.p{k}", poly, bool(front), "buildable", block.id, front)
        if not front:
            if policy is NoAccessPolicy.CREATE_ALLEYWAY:
                p.has_street_access = True
                p.access_via = "alleyway"
                parcels.report.append(f"{p.id}: alleyway easement added")
            else:
                p.flag = "non_building"
                p.access_via = "none"
                parcels.report.append(f"{p.id}: no street access, flagged non-building")
        parcels.append(p)
    return parcels


def _ray_hit(origin: Point2, d: Point2, segs: Sequence) -> float | None:
    best = None
    for a, b in segs:
        s = b - a
        denom = d.cross(s)
        if abs(denom) <= 1e-12 * max(1.0, s.norm()):
            continue
        qp = a - origin
        t = qp.cross(s) / denom
        u = qp.cross(d) / denom
        if t > EPS and -1e-9 <= u <= 1 + 1e-9 and (best is None or t < best):
            best = t
    return best


def _to_polys(geom) -> list[sg.Polygon]:
    if geom.is_empty:
        return []
    if geom.geom_type == "Polygon":
        return [geom]
    return [g for g in getattr(geom, "geoms", []) if g.geom_type == "Polygon"]


def _carve_streets(polys, frontage, width, block_id, report):
    """Cut a straight street along an OBB axis from each landlocked parcel to the frontage."""
    polys = list(polys)
    frontage = list(frontage)
    before = sum(p.area for p in polys)
    streets: list[Polygon] = []
    # frontage only grows, so a parcel that reached it once keeps its access
    # (keyed by identity; holding the object keeps its id from being reused)
    reached: dict[int, Polygon] = {}
    k = 0
    while k < len(polys):
        L = polys[k]
        if id(L) in reached or frontage_edge_indices(L, frontage):
            reached[id(L)] = L
            k += 1
            continue
        obb = compute_obb(L)
        c = L.interior_point()
        options = []
        # major axis first; the minor axis only when the major one reaches no frontage
        for axis in (obb.axis_major, obb.axis_minor):
            for sgn in (1.0, -1.0):
                d = axis * sgn
                t = _ray_hit(c, d, frontage)
                if t is not None:
                    options.append((t, d))
            if options:
                break
        if not options:
            report.append(f"{block_id}: no frontage reachable along OBB axes for a landlocked parcel")
            k += 1
            continue
        t, d = min(options, key=lambda o: o[0])
        n = Point2(-d.y, d.x) * (0.5 * width)
        end = c + d * t
        corners = [c - n, end - n, end + n, c + n]
        strip_poly = Polygon(corners)
        strip = sg.Polygon([(q.x, q.y) for q in strip_poly.vertices])
        new_polys: list[Polygon] = []
        for P in polys:
            sp = sg.Polygon(P.coords)
            if not sp.intersects(strip) or sp.intersection(strip).area <= 1e-9:
                new_polys.append(P)
                continue
            for piece in _to_polys(sp.difference(strip)):
                if piece.area < MIN_PARCEL_AREA:
                    report.append(f"{block_id}: {piece.area:.3f} m2 sliver absorbed by new street")
                    continue
                try:
                    new_polys.append(Polygon(list(piece.exterior.coords)))
                except DegenerateGeometryError:
                    continue
        polys = new_polys
        streets.append(strip_poly)
        frontage.extend(strip_poly.edges())
        report.append(f"{block_id}: secondary street of {t:.1f} m created")
        k = 0
    after = sum(p.area for p in polys)
    return polys, frontage, before - after, streets


def apply_setbacks(p: Parcel, front: float, side: float) -> Polygon:
    """Usable building area: points at least ``front`` from street edges and ``side`` from the rest."""
    if front < 0 or side < 0:
        raise ValueError("setbacks must be non-negative")
    if front == 0 and side == 0:
        return p.polygon
    shape = sg.Polygon(p.polygon.coords)
    bands = []
    fe = set(p.frontage_edges)
    for i, (a, b) in enumerate(p.polygon.edges()):
        d = front if i in fe else side
        if d > 0:
            bands.append(sg.LineString([(a.x, a.y), (b.x, b.y)]).buffer(d, quad_segs=16))
    usable = shape.difference(unary_union(bands)) if bands else shape
    pieces = _to_polys(usable)
    if not pieces or max(q.area for q in pieces) <= 1e-9:
        raise EmptyUsableArea(f"parcel {p.id}: setbacks leave no usable area")
    best = max(pieces, key=lambda q: q.area)
    # shapely rings repeat the first vertex and may carry collinear points
    return Polygon(_drop_collinear(list(best.exterior.coords)[:-1]))


def _drop_collinear(pts, tol: float = 1e-9):
    out = list(pts)
    changed = True
    while changed and len(out) > 3:
        changed = False
        for i in range(len(out)):
            a, b, c = out[i - 1], out[i], out[(i + 1) % len(out)]
            cross = (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
            scale = math.hypot(c[0] - a[0], c[1] - a[1])
            if scale == 0 or abs(cross) / scale <= tol:
                del out[i]
                changed = True
                break
    return out


def _street_aligned_edge(p: Parcel, usable: Polygon):
    """The usable-area edge parallel to (and nearest) the parcel's only street edge."""
    if len(p.frontage_edges) != 1:
        return None
    a, b = p.polygon.edges()[p.frontage_edges[0]]
    d = b - a
    d = d * (1.0 / d.norm())
    best = None
    for u0, u1 in usable.edges():
        e = u1 - u0
        L = e.norm()
        if L <= EPS or abs(d.cross(e * (1.0 / L))) > 1e-6:
            continue
        m = u0 + e * 0.5
        dist = abs((m - a).cross(d))
        if best is None or dist < best[0]:
            best = (dist, (u0, u1))
    return best[1] if best else None


def place_building(
    p: Parcel,
    usable: Polygon,
    floor_range: tuple[int, int],
    rng: np.random.Generator,
    setback_front: float = 0.0,
    setback_side: float = 0.0,
    min_footprint: float = MIN_FOOTPRINT_AREA,
    resolution: int = 64,
) -> BuildingSpec:
    lo, hi = int(floor_range[0]), int(floor_range[1])
    if not 1 <= lo <= hi:
        raise ValueError("floor range must satisfy 1 <= min <= max")
    edge = _street_aligned_edge(p, usable)
    footprint = largest_inscribed_rectangle(usable, required_edge=edge, resolution=resolution, min_area=min_footprint)
    floors = int(rng.integers(lo, hi + 1))
    return BuildingSpec(p.id, footprint, floors, setback_front, setback_side)


@dataclass
class BlockBuildout:
    block: CityBlock
    parcels: ParcelList
    buildings: list[BuildingSpec] = field(default_factory=list)
    report: list[str] = field(default_factory=list)


def build_out_block(
    block: CityBlock,
    cfg: SubdivisionConfig,
    setback_front: float,
    setback_side: float,
    floor_range: tuple[int, int],
) -> BlockBuildout:
    """Subdivide one block and put a building on every buildable parcel."""
    rng = derive_rng(cfg.rng_seed, block.id)
    parcels = subdivide_block(block, cfg, rng)
    out = BlockBuildout(block, parcels, report=list(parcels.report))
    for p in parcels:
        if not p.buildable:
            continue
        try:
            usable = apply_setbacks(p, setback_front, setback_side)
            out.buildings.append(place_building(p, usable, floor_range, rng, setback_front, setback_side))
        except EmptyUsableArea as e:
            out.report.append(str(e))
        except EmptyFootprint:
            out.report.append(f"parcel {p.id}: footprint below {MIN_FOOTPRINT_AREA} m2, no building")
    return out


def polygon_feature(poly: Polygon, props: dict) -> dict:
    ring = [[q.x, q.y] for q in poly.vertices]
    ring.append(ring[0])
    return {"type": "Feature", "geometry": {"type": "Polygon", "coordinates": [ring]}, "properties": props}


def parcel_features(parcels: Sequence[Parcel], buildings: Sequence[BuildingSpec]) -> dict:
    by_parcel = {b.parcel_id: b for b in buildings}
    feats = []
    for p in parcels:
        b = by_parcel.get(p.id)
        feats.append(
            polygon_feature(
                p.polygon,
                {
                    "kind": "parcel",
                    "id": p.id,
                    "flag": p.flag,
                    "access": p.access_via,
                    "floors": b.floors if b else None,
                    "setbacks": [b.setback_front, b.setback_side] if b else None,
                },
            )
        )
    for b in buildings:
        feats.append(
            polygon_feature(
                b.footprint,
                {
                    "kind": "building",
                    "id": b.parcel_id,
                    "floors": b.floors,
                    "setbacks": [b.setback_front, b.setback_side],
                },
            )
        )
    return {"type": "FeatureCollection", "features": feats}


def extrusion_records(buildings: Sequence[BuildingSpec]) -> list[dict]:
    return [
        {"parcel_id": b.parcel_id, "footprint": [[q.x, q.y] for q in b.footprint.vertices], "height": b.height}
        for b in buildings
    ]
