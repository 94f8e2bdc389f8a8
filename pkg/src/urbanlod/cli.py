"""Command-line entry point: generate, calibrate, simulate, export."""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import shutil
import sys
import time
from dataclasses import replace
from pathlib import Path

from . import __version__, envgraph, macrosim, microsim, parcels
from .config import ConfigError, ScenarioConfig, load_config
from .contagion import (
    MissingCalibrationError,
    SIRState,
    ViolationCurve,
    report_integer_state,
    split_removed,
)
from .geometry import GeometryError, GeoCoordinate, Point2
from .ingest import LocalProjection, OsmDocument, OsmParseError, build_environment, parse_osm

log = logging.getLogger("urbanlod")

EXIT_OK, EXIT_CONFIG, EXIT_STAGE, EXIT_INVARIANT = 0, 2, 3, 4


class StageError(RuntimeError):
    def __init__(self, stage: str, msg: str):
        super().__init__(f"[{stage}] {msg}")
        self.stage = stage


class InvariantViolation(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# run directories and manifests


def latest_run(out: Path, stage: str) -> Path | None:
    """Most recent completed run of ``stage`` (one that has a manifest)."""
    d = out / stage
    if not d.is_dir():
        return None
    runs = sorted(p for p in d.iterdir() if p.is_dir() and p.name.startswith("run-") and (p / "manifest.json").exists())
    return runs[-1] if runs else None


class RunDir:
    """Write-once run directory, staged under a temporary name until complete."""

    def __init__(self, out: Path, stage: str):
        base = out / stage
        base.mkdir(parents=True, exist_ok=True)
        nums = [int(p.name[4:]) for p in base.iterdir() if p.name.startswith("run-") and p.name[4:].isdigit()]
        self.final = base / f"run-{(max(nums) + 1 if nums else 1):03d}"
        self.tmp = base / f".{self.final.name}.partial"
        if self.tmp.exists():
            shutil.rmtree(self.tmp)
        self.tmp.mkdir()
        self.artifacts: dict[str, str] = {}

    def write(self, name: str, data: str | bytes) -> Path:
        p = self.tmp / name
        b = data.encode("utf-8") if isinstance(data, str) else data
        p.write_bytes(b)
        self.artifacts[name] = hashlib.sha256(b).hexdigest()
        return self.final / name

    def commit(self, manifest: dict) -> Path:
        manifest = {**manifest, "artifacts": dict(sorted(self.artifacts.items())), "run": self.final.name}
        (self.tmp / "manifest.json").write_text(json.dumps(manifest, indent=1, sort_keys=True) + "\n")
        self.tmp.rename(self.final)
        return self.final

    def abort(self) -> None:
        shutil.rmtree(self.tmp, ignore_errors=True)


def _manifest(cfg: ScenarioConfig, stage: str, timings: dict, extra: dict | None = None) -> dict:
    return {
        "stage": stage,
        "config_hash": cfg.digest(),
        "seed": cfg.seed,
        "timings": {k: round(v, 6) for k, v in timings.items()},
        "version": __version__,
        **(extra or {}),
    }


def _dumps(doc) -> str:
    return json.dumps(doc, indent=1, sort_keys=True) + "\n"


# ---------------------------------------------------------------------------
# generate


def _read_osm(path: Path | None) -> OsmDocument:
    if path is None:
        log.warning("no OSM input configured; generating regions only")
        return OsmDocument({}, {})
    data = path.read_bytes()
    if not data.strip():
        log.warning("OSM file %s is empty", path)
        return OsmDocument({}, {})
    doc = parse_osm(data)
    if not doc.nodes and not doc.ways:
        log.warning("OSM file %s has no nodes or ways", path)
    return doc


def cmd_generate(cfg: ScenarioConfig) -> Path:
    """ingest -> region graph -> road networks -> parcels and buildings."""
    hood_path = cfg.input_path("neighborhoods")
    if hood_path is None:
        raise ConfigError("inputs.neighborhoods is required for generate")
    timings: dict[str, float] = {}
    t0 = time.perf_counter()
    try:
        doc = _read_osm(cfg.input_path("osm"))
        hoods = json.loads(hood_path.read_text())
        conn_path = cfg.input_path("connections")
        conns = json.loads(conn_path.read_text()) if conn_path else None
        env = build_environment(doc, hoods, conns, bool(cfg.raw["generation"]["synthesize_connections"]))
    except (OsmParseError, GeometryError, ValueError, KeyError) as e:
        raise StageError("ingest", str(e)) from None
    timings["ingest"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    sub_cfg = cfg.subdivision
    front, side = cfg.setbacks
    all_parcels, all_buildings, gen_report = [], [], []
    block_feats = []
    for rid in sorted(env.blocks):
        for block in env.blocks[rid]:
            try:
                out = parcels.build_out_block(block, sub_cfg, front, side, cfg.floor_range_for(block.subregion_id))
            except GeometryError as e:
                raise StageError("parcels", f"block {block.id}: {e}") from None
            all_parcels.extend(out.parcels)
            all_buildings.extend(out.buildings)
            gen_report.extend(out.report)
            block_feats.append(parcels.polygon_feature(block.polygon, {"id": block.id, "subregion": block.subregion_id}))
    timings["parcels"] = time.perf_counter() - t0

    counts = env.counts()
    counts.update(
        parcels=len(all_parcels),
        buildable_parcels=sum(p.buildable for p in all_parcels),
        generated_buildings=len(all_buildings),
    )
    run = RunDir(cfg.output, "generate")
    try:
        run.write("regions.geojson", _dumps(envgraph.to_geojson(env.graph)))
        run.write("companion.json", _dumps(envgraph.companion_json(env.graph)))
        o = env.projection.origin
        run.write("projection.json", _dumps({"origin": {"latitude": o.latitude, "longitude": o.longitude}}))
        run.write("roads.json", _dumps({rid: env.networks[rid].to_json() for rid in sorted(env.networks)}))
        run.write("blocks.geojson", _dumps({"type": "FeatureCollection", "features": block_feats}))
        run.write("parcels.geojson", _dumps(parcels.parcel_features(all_parcels, all_buildings)))
        run.write("buildings.json", _dumps(parcels.extrusion_records(all_buildings)))
        run.write(
            "osm_buildings.json",
            _dumps(
                [
                    {"way_id": b.way_id, "block_id": b.block_id, "region_id": b.region_id, "height": b.height,
                     "floors": b.floors, "footprint": [[p.x, p.y] for p in b.polygon.vertices]}
                    for b in env.buildings
                ]
            ),
        )
        run.write("report.json", _dumps({"counts": counts, "messages": env.report + gen_report}))
        path = run.commit(_manifest(cfg, "generate", timings, {"counts": counts}))
    except BaseException:
        run.abort()
        raise
    log.info("generate: %s", json.dumps(counts, sort_keys=True))
    return path


# ---------------------------------------------------------------------------
# calibrate


def cmd_calibrate(cfg: ScenarioConfig, threads: int = 1) -> Path:
    base = cfg.micro_template
    counts = cfg.counts
    runs = int(cfg.raw["micro"]["runs_per_count"])
    timings = {}
    curves = {}
    for name, flag in (("distancing", True), ("no_distancing", False)):
        t0 = time.perf_counter()
        try:
            curves[name] = microsim.calibrate(
                replace(base, social_distancing_enabled=flag), counts, runs, workers=threads
            )
        except microsim.PlacementError as e:
            raise StageError("calibrate", str(e)) from None
        timings[name] = time.perf_counter() - t0
    on, off = curves["distancing"], curves["no_distancing"]
    summary = {
        "points": len(on),
        "runs_per_count": runs,
        "comparison": [
            {"density": a.density, "distancing": a.ratio, "no_distancing": b.ratio, "difference": b.ratio - a.ratio}
            for a, b in zip(on.points, off.points)
        ],
    }
    run = RunDir(cfg.output, "calibrate")
    try:
        run.write("curve_distancing.csv", on.to_csv())
        run.write("curve_no_distancing.csv", off.to_csv())
        run.write("summary.json", _dumps(summary))
        return run.commit(_manifest(cfg, "calibrate", timings))
    except BaseException:
        run.abort()
        raise


# ---------------------------------------------------------------------------
# simulate


def _check_traces(world: macrosim.World) -> None:
    total = world.total_population()
    rows = world.occupancy
    n = len(world.region_ids)
    for i in range(0, len(rows), n):
        s = sum(r.agents for r in rows[i : i + n])
        if s != total:
            raise InvariantViolation(f"occupancy at t={rows[i].time} sums to {s}, expected {total}")
    sizes = {c.id: c.population for c in world.clouds}
    for e in world.epidemic:
        if abs(e.S + e.I + e.R - sizes[e.group_id]) > 1e-9 * max(1.0, sizes[e.group_id]):
            raise InvariantViolation(f"S+I+R drift for {e.group_id} at t={e.time}")


def cmd_simulate(cfg: ScenarioConfig) -> Path:
    gen = latest_run(cfg.output, "generate")
    cal = latest_run(cfg.output, "calibrate")
    if gen is None:
        raise StageError("simulate", f"no environment found under {cfg.output}/generate; run 'generate' first")
    curve_file = cal / f"curve_{cfg.raw['micro']['curve']}.csv" if cal else None
    if curve_file is None or not curve_file.exists():
        raise StageError("simulate", f"no calibration curve found under {cfg.output}/calibrate; run 'calibrate' first")
    try:
        curve = ViolationCurve.load(curve_file)
    except (ValueError, KeyError) as e:
        raise StageError("simulate", f"unreadable calibration curve {curve_file}: {e}") from None
    if not curve.points:
        raise StageError("simulate", str(MissingCalibrationError("calibration curve is empty; run 'calibrate' first")))
    env = envgraph.load(gen / "regions.geojson", gen / "companion.json")
    macro = cfg.macro
    infected = cfg.raw["contagion"]["initial_infected"]
    for rid in infected:
        if rid not in env.regions:
            raise ConfigError(f"contagion.initial_infected names unknown region {rid}")
    timings = {}
    t0 = time.perf_counter()
    world = macrosim.build_world(env, macro, cfg.seed, infected)
    macrosim.run(world, macro, curve, cfg.sir, cfg.seed, bool(cfg.raw["contagion"]["invert_rule"]))
    timings["macro"] = time.perf_counter() - t0
    _check_traces(world)

    regions = world.cloud_regions()
    split = cfg.removed_split
    rows = ["region_id,S,I,R,recovered,deceased"]
    final = {}
    for rid in world.region_ids:
        members = [c for c in world.clouds if regions[c.id] == rid]
        N = sum(c.population for c in members)
        if N == 0:
            s_i_r = (0, 0, 0)
        else:
            state = SIRState(
                sum(c.sir.susceptible for c in members),
                sum(c.sir.infected for c in members),
                sum(c.sir.removed for c in members),
                float(N),
            )
            s_i_r = report_integer_state(state)
        rec, dec = split_removed(s_i_r[2], split)
        final[rid] = {"S": s_i_r[0], "I": s_i_r[1], "R": s_i_r[2], "recovered": rec, "deceased": dec}
        rows.append(f"{rid},{s_i_r[0]},{s_i_r[1]},{s_i_r[2]},{rec},{dec}")
    run = RunDir(cfg.output, "simulate")
    try:
        run.write("occupancy.csv", macrosim.occupancy_csv(world.occupancy))
        run.write("epidemic.csv", macrosim.epidemic_csv(world.epidemic))
        run.write("final_sir.csv", "\n".join(rows) + "\n")
        run.write("snapshot.json", macrosim.dumps_snapshot(world) + "\n")
        run.write(
            "summary.json",
            _dumps({"final": final, "clouds": len(world.clouds), "population": world.total_population(),
                    "events": len(world.epidemic), "applied": sum(e.applied for e in world.epidemic)}),
        )
        return run.commit(
            _manifest(cfg, "simulate", timings, {"inputs": {"generate": gen.name, "calibrate": cal.name}})
        )
    except BaseException:
        run.abort()
        raise


# ---------------------------------------------------------------------------
# export


def _to_lonlat(proj: LocalProjection, ring) -> list[list[float]]:
    out = []
    for x, y in ring:
        g = proj.inverse(Point2(x, y))
        out.append([g.longitude, g.latitude])
    return out


def _reproject_feature(proj: LocalProjection, f: dict) -> dict:
    geom = f["geometry"]
    if geom["type"] == "Polygon":
        coords = [_to_lonlat(proj, r) for r in geom["coordinates"]]
    else:
        coords = _to_lonlat(proj, geom["coordinates"])
    return {**f, "geometry": {"type": geom["type"], "coordinates": coords}}


def cmd_export(cfg: ScenarioConfig) -> Path:
    """Bundle the latest generated city as one WGS84 GeoJSON plus an extrusion list."""
    gen = latest_run(cfg.output, "generate")
    if gen is None:
        raise StageError("export", f"no environment found under {cfg.output}/generate; run 'generate' first")
    origin = json.loads((gen / "projection.json").read_text())["origin"]
    proj = LocalProjection(GeoCoordinate(origin["latitude"], origin["longitude"]))
    feats = []
    for name, kind in (("regions.geojson", "region"), ("blocks.geojson", "block"), ("parcels.geojson", None)):
        for f in json.loads((gen / name).read_text())["features"]:
            props = dict(f.get("properties") or {})
            props.setdefault("kind", kind)
            feats.append(_reproject_feature(proj, {**f, "properties": props}))
    roads = json.loads((gen / "roads.json").read_text())
    for rid in sorted(roads):
        for r in roads[rid]["roads"]:
            feats.append(
                _reproject_feature(
                    proj,
                    {
                        "type": "Feature",
                        "geometry": {"type": "LineString", "coordinates": r["points"]},
                        "properties": {"kind": "road", "id": r["id"], "region": rid, "class": r["kind"], "width": r["width"]},
                    },
                )
            )
    run = RunDir(cfg.output, "export")
    try:
        run.write("city_wgs84.geojson", _dumps({"type": "FeatureCollection", "features": feats}))
        run.write("extrusions.json", (gen / "buildings.json").read_text())
        sim = latest_run(cfg.output, "simulate")
        if sim is not None:
            run.write("final_sir.csv", (sim / "final_sir.csv").read_text())
        return run.commit(_manifest(cfg, "export", {}, {"inputs": {"generate": gen.name}}))
    except BaseException:
        run.abort()
        raise


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="urbanlod", description="Multi-scale urban generation and epidemic simulation.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    for name, help_ in (
        ("generate", "build regions, roads, parcels and buildings from OSM + neighborhoods"),
        ("calibrate", "run micro simulations and write violation curves"),
        ("simulate", "run the macro simulation with contagion events"),
        ("export", "export the latest generated city as WGS84 GeoJSON"),
    ):
        sp = sub.add_parser(name, help=help_)
        sp.add_argument("--config", type=Path, help="YAML scenario file")
        sp.add_argument("--seed", type=int, help="64-bit seed (overrides the config)")
        sp.add_argument("--out", help="output directory (overrides the config)")
        sp.add_argument("--threads", type=int, default=1, help="worker cap for parallel stages")
        sp.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override a config key")
    return p


def _setup_logging() -> None:
    level = os.environ.get("LODUS_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), format="%(levelname)s %(name)s: %(message)s")


def main(argv: list[str] | None = None) -> int:
    _setup_logging()
    args = build_parser().parse_args(argv)
    try:
        if args.seed is not None and not 0 <= args.seed < 2**64:
            raise ConfigError("--seed must be an unsigned 64-bit integer")
        if args.threads < 1:
            raise ConfigError("--threads must be >= 1")
        cfg = load_config(args.config, args.set, args.seed, args.out)
        if args.command == "generate":
            path = cmd_generate(cfg)
        elif args.command == "calibrate":
            path = cmd_calibrate(cfg, args.threads)
        elif args.command == "simulate":
            path = cmd_simulate(cfg)
        else:
            path = cmd_export(cfg)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except InvariantViolation as e:
        print(f"invariant violation: {e}", file=sys.stderr)
        return EXIT_INVARIANT
    except StageError as e:
        print(f"stage error: {e}", file=sys.stderr)
        return EXIT_STAGE
    except (GeometryError, OSError, ValueError, KeyError) as e:
        print(f"stage error: [{args.command}] {e}", file=sys.stderr)
        return EXIT_STAGE
    print(path)
    return EXIT_OK


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
