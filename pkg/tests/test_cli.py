from __future__ import annotations

import csv
import json
import logging
from pathlib import Path

import pytest
import yaml

from urbanlod.cli import EXIT_CONFIG, EXIT_OK, EXIT_STAGE, latest_run, main

FIX = Path(__file__).parent / "fixtures"
FAST_MICRO = ["--set", "micro.runs_per_count=1", "--set", "micro.duration=2"]


def write_config(tmp_path, osm="city.osm", hoods="neighborhoods.geojson", **extra):
    doc = {
        "seed": 7,
        "output": str(tmp_path / "out"),
        "inputs": {"osm": str(FIX / osm) if osm else None, "neighborhoods": str(FIX / hoods)},
    }
    for k, v in extra.items():
        doc[k] = v
    p = tmp_path / "scenario.yaml"
    p.write_text(yaml.safe_dump(doc))
    return p


def run_cli(cfg, *args):
    return main([args[0], "--config", str(cfg), *args[1:]])


def read_rows(path):
    with open(path, newline="") as f:
        return list(csv.DictReader(f))


# ---------------------------------------------------------------- generate


def test_generate_matches_fixture_manifest(tmp_path):
    cfg = write_config(tmp_path)
    assert run_cli(cfg, "generate") == EXIT_OK
    run = latest_run(tmp_path / "out", "generate")
    assert run.name == "run-001"
    report = json.loads((run / "report.json").read_text())["counts"]
    m = json.loads((FIX / "city_manifest.json").read_text())
    for key in ("regions", "roads", "junctions", "subregions", "blocks", "buildings", "areas"):
        assert report[key] == m[key], key
    manifest = json.loads((run / "manifest.json").read_text())
    assert manifest["stage"] == "generate" and manifest["seed"] == 7
    assert set(manifest["artifacts"]) >= {"regions.geojson", "parcels.geojson", "buildings.json", "report.json"}
    assert report["parcels"] >= report["buildable_parcels"] > 0


def test_second_run_gets_new_directory(tmp_path):
    cfg = write_config(tmp_path)
    assert run_cli(cfg, "generate") == EXIT_OK
    assert run_cli(cfg, "generate") == EXIT_OK
    names = sorted(p.name for p in (tmp_path / "out" / "generate").iterdir())
    assert names == ["run-001", "run-002"]
    a, b = (tmp_path / "out" / "generate" / n / "parcels.geojson" for n in names)
    assert a.read_bytes() == b.read_bytes()


def test_empty_osm_gives_empty_report_and_warning(tmp_path, caplog):
    empty = tmp_path / "empty.osm"
    empty.write_text("")
    cfg = write_config(tmp_path)
    doc = yaml.safe_load(cfg.read_text())
    doc["inputs"]["osm"] = str(empty)
    cfg.write_text(yaml.safe_dump(doc))
    with caplog.at_level(logging.WARNING, logger="urbanlod"):
        assert run_cli(cfg, "generate") == EXIT_OK
    assert any("empty" in r.message for r in caplog.records)
    counts = json.loads((latest_run(tmp_path / "out", "generate") / "report.json").read_text())["counts"]
    assert counts["roads"] == counts["buildings"] == 0
    assert counts["regions"] == 4


def test_missing_input_is_config_error(tmp_path, capsys):
    cfg = tmp_path / "c.yaml"
    cfg.write_text(yaml.safe_dump({"inputs": {"osm": str(tmp_path / "nope.osm"), "neighborhoods": str(FIX / "neighborhoods.geojson")}}))
    assert run_cli(cfg, "generate") == EXIT_CONFIG
    assert "nope.osm" in capsys.readouterr().err


def test_unknown_key_and_bad_override(tmp_path):
    cfg = write_config(tmp_path)
    assert run_cli(cfg, "generate", "--set", "macro.warp=9") == EXIT_CONFIG
    assert run_cli(cfg, "generate", "--set", "generation.floors=[5, 2]") == EXIT_CONFIG
    assert run_cli(cfg, "generate", "--seed", "-1") == EXIT_CONFIG
    assert not (tmp_path / "out").exists()


def test_malformed_osm_is_stage_error(tmp_path):
    bad = tmp_path / "bad.osm"
    bad.write_text("<osm>\n<node id='1'>\n</osm>")
    cfg = write_config(tmp_path)
    doc = yaml.safe_load(cfg.read_text())
    doc["inputs"]["osm"] = str(bad)
    cfg.write_text(yaml.safe_dump(doc))
    assert run_cli(cfg, "generate") == EXIT_STAGE
    assert not list((tmp_path / "out" / "generate").glob("run-*"))


# ---------------------------------------------------------------- calibrate


def test_calibrate_writes_19_point_curves_deterministically(tmp_path):
    cfg = write_config(tmp_path)
    assert run_cli(cfg, "calibrate", *FAST_MICRO) == EXIT_OK
    assert run_cli(cfg, "calibrate", *FAST_MICRO) == EXIT_OK
    base = tmp_path / "out" / "calibrate"
    for name in ("curve_distancing.csv", "curve_no_distancing.csv"):
        a = (base / "run-001" / name).read_bytes()
        assert a == (base / "run-002" / name).read_bytes()
        rows = read_rows(base / "run-001" / name)
        assert len(rows) == 19
        assert float(rows[0]["density"]) == pytest.approx(2 / 352)
        assert float(rows[-1]["density"]) == pytest.approx(20 / 352)
    summary = json.loads((base / "run-001" / "summary.json").read_text())
    assert summary["points"] == 19


# ---------------------------------------------------------------- simulate


def five_region_config(tmp_path, **extra):
    return write_config(tmp_path, osm="five_regions.osm", hoods="five_regions.geojson", **extra)


def prepare(cfg):
    assert run_cli(cfg, "generate") == EXIT_OK
    assert run_cli(cfg, "calibrate", "--set", "micro.counts=[2, 5, 10]", *FAST_MICRO) == EXIT_OK


def test_simulate_without_calibration_fails_cleanly(tmp_path, capsys):
    cfg = five_region_config(tmp_path)
    assert run_cli(cfg, "generate") == EXIT_OK
    assert run_cli(cfg, "simulate") == EXIT_STAGE
    assert "calibrate" in capsys.readouterr().err
    assert not (tmp_path / "out" / "simulate").exists() or not list((tmp_path / "out" / "simulate").iterdir())


def test_simulate_without_environment_fails(tmp_path):
    assert run_cli(five_region_config(tmp_path), "simulate") == EXIT_STAGE


def test_zero_infected_stays_zero(tmp_path):
    cfg = five_region_config(tmp_path)
    prepare(cfg)
    assert run_cli(cfg, "simulate", "--set", "macro.duration=300") == EXIT_OK
    run = latest_run(tmp_path / "out", "simulate")
    assert all(float(r["I"]) == 0.0 for r in read_rows(run / "epidemic.csv"))
    assert all(int(r["I"]) == 0 and int(r["R"]) == 0 for r in read_rows(run / "final_sir.csv"))


def test_simulate_outputs_conserve_population(tmp_path):
    cfg = five_region_config(tmp_path, contagion={"initial_infected": {"N2": 20}})
    prepare(cfg)
    assert run_cli(cfg, "simulate", "--set", "macro.duration=600") == EXIT_OK
    run = latest_run(tmp_path / "out", "simulate")
    hoods = json.loads((FIX / "five_regions.geojson").read_text())["features"]
    total = sum(f["properties"]["population"] for f in hoods)
    per_time: dict[str, int] = {}
    for r in read_rows(run / "occupancy.csv"):
        per_time[r["time"]] = per_time.get(r["time"], 0) + int(r["agents"])
    assert len(per_time) == 600 and set(per_time.values()) == {total}
    final = read_rows(run / "final_sir.csv")
    assert sum(int(r["S"]) + int(r["I"]) + int(r["R"]) for r in final) == total
    for r in final:
        assert int(r["recovered"]) + int(r["deceased"]) == int(r["R"])
    snap = json.loads((run / "snapshot.json").read_text())
    assert sum(c["population"] for c in snap["clouds"]) == total
    manifest = json.loads((run / "manifest.json").read_text())
    assert manifest["inputs"] == {"generate": "run-001", "calibrate": "run-001"}


def test_unknown_infected_region_is_config_error(tmp_path):
    cfg = five_region_config(tmp_path, contagion={"initial_infected": {"ZZ": 1}})
    prepare(cfg)
    assert run_cli(cfg, "simulate", "--set", "macro.duration=60") == EXIT_CONFIG


# ---------------------------------------------------------------- export


def test_export_reprojects_to_wgs84(tmp_path):
    cfg = write_config(tmp_path)
    assert run_cli(cfg, "generate") == EXIT_OK
    assert run_cli(cfg, "export") == EXIT_OK
    run = latest_run(tmp_path / "out", "export")
    feats = json.loads((run / "city_wgs84.geojson").read_text())["features"]
    kinds = {f["properties"]["kind"] for f in feats}
    assert {"region", "block", "road", "parcel"} <= kinds
    region = next(f for f in feats if f["properties"]["kind"] == "region" and f["properties"]["id"] == "A")
    lons = [p[0] for p in region["geometry"]["coordinates"][0]]
    lats = [p[1] for p in region["geometry"]["coordinates"][0]]
    # region A spans u 0-4, v 4-8 on the fixture grid
    assert min(lons) == pytest.approx(-51.232, abs=1e-9) and max(lons) == pytest.approx(-51.228, abs=1e-9)
    assert min(lats) == pytest.approx(-30.032, abs=1e-9) and max(lats) == pytest.approx(-30.028, abs=1e-9)


def test_version_flag(capsys):
    with pytest.raises(SystemExit) as e:
        main(["--version"])
    assert e.value.code == 0
    assert capsys.readouterr().out.strip().startswith("urbanlod")
