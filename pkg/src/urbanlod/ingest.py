"""OSM XML subset and neighborhood GeoJSON ingestion into regions, road networks and blocks."""

from __future__ import annotations

import io
import json
import math
import re
import xml.etree.ElementTree as ET
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Mapping

from .envgraph import Connection, EmbeddingError, Region, RegionGraph, add_edge, bounding_rectangle, read_connections
from .geometry import (
    DegenerateGeometryError,
    GeoCoordinate,
    GeometryError,
    Point2,
    Polygon,
    clip_segment_to_polygon,
    inverse_elliptical_mercator,
    project_elliptical_mercator,
)
from .roadnet import (
    CityBlock,
    Road,
    RoadKind,
    RoadNetwork,
    TopologyError,
    classify_blocks,
    extract_subregions,
    insert_road,
)

FLOOR_HEIGHT = 3.0
LANE_WIDTH = 3.7
PRIMARY_CLASSES = frozenset(
    {"motorway", "motorway_link", "trunk", "trunk_link", "primary", "primary_link"}
)


class OsmParseError(ValueError):
    def __init__(self, msg: str, line: int | None = None, column: int | None = None):
        where = f" at line {line}, column {column}" if line is not None else ""
        super().__init__(f"{msg}{where}")
        self.line = line
        self.column = column


@dataclass(frozen=True)
class OsmNode:
    id: int
    coordinate: GeoCoordinate
    tags: Mapping[str, str] = field(default_factory=dict)


@dataclass(frozen=True)
class OsmWay:
    id: int
    node_refs: tuple[int, ...]
    tags: Mapping[str, str] = field(default_factory=dict)

    @property
    def closed(self) -> bool:
        return len(self.node_refs) >= 3 and self.node_refs[0] == self.node_refs[-1]


@dataclass
class OsmDocument:
    nodes: dict[int, OsmNode]
    ways: dict[int, OsmWay]
    skipped: list[str] = field(default_factory=list)
    unresolved: list[tuple[int, int]] = field(default_factory=list)

    def __iter__(self):
        yield self.nodes
        yield self.ways

    @property
    def report(self) -> list[str]:
        out = list(self.skipped)
        out.extend(f"way {w}: unresolved node ref {r}" for w, r in self.unresolved)
        return out


def _tags(el) -> dict[str, str]:
    return {t.get("k"): t.get("v", "") for t in el.findall("tag") if t.get("k") is not None}


def parse_osm(source) -> OsmDocument:
    """Read nodes, ways, nd refs and tags; everything else in the document is ignored."""
    if isinstance(source, (str, Path)) and not str(source).lstrip().startswith("<"):
        data = Path(source).read_bytes()
    elif isinstance(source, str):
        data = source.encode("utf-8")
    elif isinstance(source, (bytes, bytearray)):
        data = bytes(source)
    else:
        data = source.read()
    try:
        root = ET.parse(io.BytesIO(data)).getroot()
    except ET.ParseError as e:
        line, col = e.position
        reason = str(e).rsplit(": line", 1)[0]
        raise OsmParseError(f"malformed OSM XML: {reason}", line, col) from None
    nodes: dict[int, OsmNode] = {}
    ways: dict[int, OsmWay] = {}
    doc = OsmDocument(nodes, ways)
    for el in root.iter("node"):
        nid = el.get("id")
        lat, lon = el.get("lat"), el.get("lon")
        if nid is None or lat is None or lon is None:
            doc.skipped.append(f"node {nid}: missing id/lat/lon, skipped")
            continue
        try:
            coord = GeoCoordinate(float(lat), float(lon))
            nid_i = int(nid)
        except ValueError as e:
            doc.skipped.append(f"node {nid}: {e}, skipped")
            continue
        if nid_i in nodes:
            doc.skipped.append(f"node {nid}: duplicate id, skipped")
            continue
        nodes[nid_i] = OsmNode(nid_i, coord, _tags(el))
    for el in root.iter("way"):
        wid = el.get("id")
        try:
            wid_i = int(wid)
            refs = tuple(int(nd.get("ref")) for nd in el.findall("nd"))
        except (TypeError, ValueError):
            doc.skipped.append(f"way {wid}: bad id or nd ref, skipped")
            continue
        if len(refs) < 2:
            doc.skipped.append(f"way {wid}: fewer than 2 node refs, skipped")
            continue
        if wid_i in ways:
            doc.skipped.append(f"way {wid}: duplicate id, skipped")
            continue
        ways[wid_i] = OsmWay(wid_i, refs, _tags(el))
    for wid_i, w in ways.items():
        for r in w.node_refs:
            if r not in nodes:
                doc.unresolved.append((wid_i, r))
    return doc


def write_osm(doc: OsmDocument) -> bytes:
    root = ET.Element("osm", version="0.6", generator="urbanlod")
    for n in doc.nodes.values():
        el = ET.SubElement(
            root, "node", id=str(n.id), lat=repr(n.coordinate.latitude), lon=repr(n.coordinate.longitude)
        )
        for k, v in n.tags.items():
            ET.SubElement(el, "tag", k=k, v=v)
    for w in doc.ways.values():
        el = ET.SubElement(root, "way", id=str(w.id))
        for r in w.node_refs:
            ET.SubElement(el, "nd", ref=str(r))
        for k, v in w.tags.items():
            ET.SubElement(el, "tag", k=k, v=v)
    ET.indent(root)
    return ET.tostring(root, encoding="utf-8", xml_declaration=True) + b"\n"


# ---------------------------------------------------------------------------
# projection


class LocalProjection:
    """Elliptical Mercator shifted so ``origin`` maps to (0, 0)."""

    def __init__(self, origin: GeoCoordinate):
        self.origin = origin
        self._o = project_elliptical_mercator(origin)

    def forward(self, g: GeoCoordinate) -> Point2:
        p = project_elliptical_mercator(g)
        return Point2(p.x - self._o.x, p.y - self._o.y)

    def inverse(self, p: Point2) -> GeoCoordinate:
        return inverse_elliptical_mercator(Point2(p.x + self._o.x, p.y + self._o.y))


# ---------------------------------------------------------------------------
# classification

_NUM = re.compile(r"^\s*([-+]?\d+(?:\.\d+)?)")


def _number(s: str | None) -> float | None:
    if s is None:
        return None
    m = _NUM.match(s)
    if not m:
        return None
    v = float(m.group(1))
    return v if math.isfinite(v) and v > 0 else None


@dataclass
class ClassifiedElement:
    kind: str  # "road" | "building" | "area" | "unclassified"
    way_id: int
    points: tuple[Point2, ...]
    tags: Mapping[str, str]
    polygon: Polygon | None = None
    width: float | None = None
    lanes: int | None = None
    height: float | None = None
    floors: int | None = None
    road_class: str | None = None
    notes: list[str] = field(default_factory=list)

    @property
    def is_primary(self) -> bool:
        return self.road_class in PRIMARY_CLASSES


def classify(way: OsmWay, nodes: Mapping[int, OsmNode], projection=None) -> ClassifiedElement:
    """Sort a way into road, building, area or unclassified and derive its attributes.

    Buildings take height from ``height``, else floors x 3 m, else one floor.
    Roads take width from ``width``, else lanes x 3.7 m, else one lane.  A
    closed way is never a road; a way tagged as both building and road is a
    building.
    """
    missing = [r for r in way.node_refs if r not in nodes]
    if missing:
        raise KeyError(f"way {way.id}: unresolved node refs {missing}")
    project = projection.forward if projection is not None else project_elliptical_mercator
    pts = tuple(project(nodes[r].coordinate) for r in way.node_refs)
    tags = way.tags
    notes: list[str] = []
    is_building = "building" in tags and tags["building"] != "no"
    is_highway = "highway" in tags
    if is_building and is_highway:
        notes.append(f"way {way.id}: tagged both building and highway; classified as building")
    if is_building:
        if not way.closed:
            notes.append(f"way {way.id}: open building outline, unclassified")
            return ClassifiedElement("unclassified", way.id, pts, tags, notes=notes)
        floors_tag = tags.get("floors", tags.get("building:levels"))
        floors = _number(floors_tag)
        height = _number(tags.get("height"))
        if height is None:
            floors_i = int(round(floors)) if floors else 1
            height = floors_i * FLOOR_HEIGHT
        else:
            floors_i = int(round(floors)) if floors else max(1, int(round(height / FLOOR_HEIGHT)))
        try:
            poly = Polygon(pts[:-1])
        except DegenerateGeometryError:
            notes.append(f"way {way.id}: degenerate building footprint, unclassified")
            return ClassifiedElement("unclassified", way.id, pts, tags, notes=notes)
        return ClassifiedElement("building", way.id, pts, tags, polygon=poly, height=height, floors=floors_i, notes=notes)
    if is_highway and not way.closed:
        lanes_v = _number(tags.get("lanes"))
        lanes = max(1, int(round(lanes_v))) if lanes_v else 1
        width = _number(tags.get("width"))
        if width is None:
            width = lanes * LANE_WIDTH
        return ClassifiedElement("road", way.id, pts, tags, width=width, lanes=lanes, road_class=tags["highway"], notes=notes)
    if way.closed:
        if is_highway:
            notes.append(f"way {way.id}: closed highway treated as area")
        try:
            poly = Polygon(pts[:-1])
        except DegenerateGeometryError:
            notes.append(f"way {way.id}: degenerate closed way, unclassified")
            return ClassifiedElement("unclassified", way.id, pts, tags, notes=notes)
        return ClassifiedElement("area", way.id, pts, tags, polygon=poly, notes=notes)
    notes.append(f"way {way.id}: open way without building/highway tags, unclassified")
    return ClassifiedElement("unclassified", way.id, pts, tags, notes=notes)


# ---------------------------------------------------------------------------
# environment assembly


@dataclass
class BuildingFootprint:
    way_id: int
    polygon: Polygon
    height: float
    floors: int
    region_id: str | None
    block_id: str | None


@dataclass
class Environment:
    graph: RegionGraph
    networks: dict[str, RoadNetwork]
    subregions: dict[str, list[Polygon]]
    blocks: dict[str, list[CityBlock]]
    buildings: list[BuildingFootprint]
    areas: list[ClassifiedElement]
    projection: LocalProjection
    report: list[str] = field(default_factory=list)

    def counts(self) -> dict:
        return {
            "regions": len(self.graph.regions),
            "edges": len(self.graph.edges),
            "roads": sum(len(n.roads) for n in self.networks.values()),
            "junctions": sum(len(n.junctions) for n in self.networks.values()),
            "subregions": sum(len(v) for v in self.subregions.values()),
            "blocks": sum(len(v) for v in self.blocks.values()),
            "buildings": len(self.buildings),
            "areas": len(self.areas),
            "per_region": {
                rid: {
                    "roads": len(self.networks[rid].roads),
                    "junctions": len(self.networks[rid].junctions),
                    "subregions": len(self.subregions[rid]),
                    "blocks": len(self.blocks[rid]),
                }
                for rid in sorted(self.graph.regions)
            },
        }


def _feature_rings(feature) -> list[list]:
    geom = feature.get("geometry") or {}
    if geom.get("type") == "Polygon":
        return [geom["coordinates"][0]]
    if geom.get("type") == "MultiPolygon":
        return [p[0] for p in geom["coordinates"]]
    return []


def _clip_polyline(points: tuple[Point2, ...], outline: Polygon) -> list[list[Point2]]:
    """Pieces of a polyline inside ``outline``, consecutive segments joined."""
    pieces: list[list[Point2]] = []
    for a, b in zip(points, points[1:]):
        for p, q in clip_segment_to_polygon((a, b), outline):
            if pieces and pieces[-1][-1].distance(p) <= 1e-9:
                pieces[-1].append(q)
            else:
                pieces.append([p, q])
    return pieces


def _geo_extent(doc: OsmDocument, features) -> GeoCoordinate:
    lats, lons = [], []
    for n in doc.nodes.values():
        lats.append(n.coordinate.latitude)
        lons.append(n.coordinate.longitude)
    for f in features:
        for ring in _feature_rings(f):
            for lon, lat, *_ in ring:
                lats.append(lat)
                lons.append(lon)
    if not lats:
        return GeoCoordinate(0.0, 0.0)
    return GeoCoordinate(min(lats), min(lons))


def build_environment(
    doc: OsmDocument,
    neighborhoods: Mapping,
    connections: Mapping | None = None,
    synthesize_connections: bool = False,
    projection: LocalProjection | None = None,
) -> Environment:
    """Assemble regions, per-region road networks, subregions, blocks and building footprints."""
    report: list[str] = list(doc.report)
    features = list(neighborhoods.get("features", []))
    proj = projection or LocalProjection(_geo_extent(doc, features))

    # regions
    regions: list[Region] = []
    for k, f in enumerate(features):
        props = f.get("properties") or {}
        rid = str(props.get("id", f.get("id", f"n{k}")))
        rings = _feature_rings(f)
        polys = []
        for ring in rings:
            pts = [proj.forward(GeoCoordinate(lat, lon)) for lon, lat, *_ in ring]
            if len(pts) > 1 and pts[0] == pts[-1]:
                pts = pts[:-1]
            try:
                polys.append(Polygon(pts))
            except (DegenerateGeometryError, ValueError):
                pass
        if not polys:
            report.append(f"region {rid}: zero-area or missing polygon, rejected")
            continue
        if len(polys) > 1:
            report.append(f"region {rid}: multipolygon, largest part kept")
        outline = max(polys, key=lambda p: p.area)
        if "population" not in props or props["population"] is None:
            report.append(f"region {rid}: no population property, using 0")
        pop = int(props.get("population") or 0)
        c = outline.centroid()
        if not outline.contains(c):
            report.append(f"region {rid}: centroid outside outline, using an interior point")
            c = None
        regions.append(Region(rid, outline, pop, c))
    regions.sort(key=lambda r: r.id)
    if regions:
        bounds = bounding_rectangle(r.outline for r in regions)
    else:
        bounds = Polygon.rectangle(0.0, 0.0, 1.0, 1.0)
    g = RegionGraph(bounds)
    for r in regions:
        g.add_region(r)

    # adjacency: outlines sharing at least one boundary vertex
    keyed = {r.id: {(round(v.x, 6), round(v.y, 6)) for v in r.outline.vertices} for r in regions}
    ids = [r.id for r in regions]
    for i, a in enumerate(ids):
        for b in ids[i + 1:]:
            if keyed[a] & keyed[b]:
                try:
                    add_edge(g, a, b)
                except EmbeddingError as e:
                    report.append(f"region edge {a}-{b} rejected: {e}")
    if connections:
        for c in read_connections(connections):
            try:
                g.add_connection(c)
            except (KeyError, GeometryError) as e:
                report.append(f"connection {c.from_region}->{c.to_region} rejected: {e}")
    elif synthesize_connections:
        for a, b in sorted(g.edges):
            g.add_connection(Connection(a, b, (g.regions[a].centroid, g.regions[b].centroid), True))

    # classify ways
    roads: list[ClassifiedElement] = []
    buildings: list[ClassifiedElement] = []
    areas: list[ClassifiedElement] = []
    unresolved_ways = {w for w, _ in doc.unresolved}
    for wid in sorted(doc.ways):
        if wid in unresolved_ways:
            report.append(f"way {wid}: unresolved node refs, not classified")
            continue
        el = classify(doc.ways[wid], doc.nodes, proj)
        report.extend(el.notes)
        {"road": roads, "building": buildings, "area": areas}.get(el.kind, []).append(el)

    # per-region road networks
    networks: dict[str, RoadNetwork] = {}
    subregions: dict[str, list[Polygon]] = {}
    blocks: dict[str, list[CityBlock]] = {}
    for r in regions:
        net = RoadNetwork(r.id, r.outline)
        pending: list[tuple[Road, ClassifiedElement]] = []
        for el in roads:
            pieces = _clip_polyline(el.points, r.outline)
            for k, piece in enumerate(pieces):
                rid_road = f"w{el.way_id}" if len(pieces) == 1 else f"w{el.way_id}.{k}"
                try:
                    road = Road(
                        rid_road,
                        tuple(piece),
                        RoadKind.PRIMARY if el.is_primary else RoadKind.SECONDARY,
                        width=el.width,
                        lanes=el.lanes,
                        is_one_way=el.tags.get("oneway") in ("yes", "true", "1"),
                    )
                except (DegenerateGeometryError, ValueError) as e:
                    report.append(f"road {rid_road} in {r.id}: {e}")
                    continue
                pending.append((road, el))
        primaries = [p for p, _ in pending if p.kind is RoadKind.PRIMARY]
        secondaries = [p for p, _ in pending if p.kind is RoadKind.SECONDARY]
        # retry primaries whose endpoints rest on primaries inserted later
        progress = True
        while primaries and progress:
            progress = False
            left = []
            for road in primaries:
                try:
                    insert_road(net, road)
                    progress = True
                except TopologyError:
                    left.append(road)
            primaries = left
        for road in primaries:
            report.append(f"road {road.id} in {r.id}: primary endpoint rule violated, demoted to secondary")
            secondaries.append(replace(road, kind=RoadKind.SECONDARY))
        for road in secondaries:
            insert_road(net, road)
        networks[r.id] = net
        subs = extract_subregions(net)
        subregions[r.id] = list(subs)
        sec = [x for x in net.roads.values() if x.kind is RoadKind.SECONDARY]
        all_segs = net.segments()
        region_blocks: list[CityBlock] = []
        for k, sp in enumerate(subs):
            bl = classify_blocks(sp, sec, f"{r.id}.s{k}", street_segments=all_segs)
            region_blocks.extend(bl)
            for a, b in bl.dangling:
                report.append(f"{r.id}.s{k}: dangling road piece {a}-{b} ignored for blocks")
        blocks[r.id] = region_blocks

    for el in roads:
        if not any(_clip_polyline(el.points, r.outline) for r in regions):
            report.append(f"road way {el.way_id}: outside every region")

    # buildings to blocks by centroid
    footprints: list[BuildingFootprint] = []
    for el in buildings:
        c = el.polygon.centroid()
        reg_id = g.region_containing(c)
        blk_id = None
        if reg_id is not None:
            for b in blocks[reg_id]:
                if b.polygon.contains(c):
                    blk_id = b.id
                    break
        if blk_id is None:
            report.append(f"building way {el.way_id}: not inside any block")
        footprints.append(BuildingFootprint(el.way_id, el.polygon, el.height, el.floors, reg_id, blk_id))

    return Environment(g, networks, subregions, blocks, footprints, areas, proj, report)


def load_environment(osm_path, neighborhoods_path, connections_path=None, synthesize_connections=False) -> Environment:
    doc = parse_osm(Path(osm_path).read_bytes())
    hoods = json.loads(Path(neighborhoods_path).read_text())
    conns = json.loads(Path(connections_path).read_text()) if connections_path else None
    return build_environment(doc, hoods, conns, synthesize_connections)


def roundtrip_error_degrees(proj: LocalProjection, coords: Iterable[GeoCoordinate]) -> float:
    """Largest lat/lon error over project-then-invert, in degrees."""
    worst = 0.0
    for c in coords:
        back = proj.inverse(proj.forward(c))
        worst = max(worst, abs(back.latitude - c.latitude), abs(back.longitude - c.longitude))
    return worst
