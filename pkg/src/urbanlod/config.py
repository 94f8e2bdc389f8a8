"""Scenario configuration: a YAML file with ``--set key=value`` overrides."""

from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Mapping

import yaml

from .contagion import RemovedSplit, SIRParams
from .macrosim import MacroConfig
from .microsim import MicroScenario
from .parcels import NoAccessPolicy, SubdivisionConfig


class ConfigError(ValueError):
    pass


DEFAULTS: dict[str, Any] = {
    "seed": 0,
    "output": "out",
    "inputs": {"osm": None, "neighborhoods": None, "connections": None},
    "generation": {
        "area_threshold": 6000.0,
        "offset_range": 0.2,
        "no_access_policy": "flag_non_building",
        "street_width": 6.0,
        "setback_front": 3.0,
        "setback_side": 1.5,
        "floors": [1, 4],
        "floors_per_subregion": {},
        "synthesize_connections": True,
    },
    "macro": {
        "cell_area": 16.0,
        "desired_speed": 10.0,
        "desired_density": 1.0,
        "cloud_size": 1000,
        "event_period": 60.0,
        "duration": 7200.0,
        "dt": 1.0,
        "density_source": "region",
        "density_scale": 1.0,
        "record_every": 1,
    },
    "micro": {
        "width": 22.0,
        "height": 16.0,
        "social_distance": 2.0,
        "duration": 120.0,
        "frame_rate": 30.0,
        "speed": 1.3,
        "perception_radius": 1.0,
        "marker_density": 4.0,
        "arrival_radius": 0.3,
        "counts": list(range(2, 21)),
        "runs_per_count": 10,
        "curve": "distancing",
    },
    "contagion": {
        "beta": 0.7,
        "gamma": 0.35,
        "dt": 1.0,
        "recovered_fraction": 0.98,
        "invert_rule": False,
        "initial_infected": {},
    },
}


# maps whose keys are free-form (region or subregion ids)
OPEN_MAPS = {"generation.floors_per_subregion", "contagion.initial_infected"}


def _merge(base: dict, over: Mapping, path: str = "") -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        key = f"{path}{k}"
        if k not in base:
            raise ConfigError(f"unknown config key '{key}'")
        if isinstance(base[k], dict) and key not in OPEN_MAPS:
            if not isinstance(v, Mapping):
                raise ConfigError(f"config key '{key}' must be a mapping")
            out[k] = _merge(base[k], v, key + ".")
        else:
            out[k] = copy.deepcopy(v)
    return out


def apply_override(doc: dict, assignment: str) -> None:
    """Apply one ``dotted.key=value`` override; the value is parsed as YAML."""
    if "=" not in assignment:
        raise ConfigError(f"--set expects KEY=VALUE, got '{assignment}'")
    key, raw = assignment.split("=", 1)
    try:
        value = yaml.safe_load(raw)
    except yaml.YAMLError as e:
        raise ConfigError(f"--set {key}: cannot parse value: {e}") from None
    parts = key.strip().split(".")
    node = doc
    for p in parts[:-1]:
        if p not in node or not isinstance(node[p], dict):
            raise ConfigError(f"unknown config key '{key}'")
        node = node[p]
    if parts[-1] not in node and ".".join(parts[:-1]) not in OPEN_MAPS:
        raise ConfigError(f"unknown config key '{key}'")
    node[parts[-1]] = value


@dataclass
class ScenarioConfig:
    raw: dict
    base_dir: Path

    def __post_init__(self):
        # build every typed view once so bad values fail at load time
        try:
            self.subdivision
            self.setbacks
            self.macro
            self.micro_template
            self.sir
            self.removed_split
            for sub in ["", *self.raw["generation"]["floors_per_subregion"]]:
                self.floor_range_for(sub)
        except ConfigError:
            raise
        except (ValueError, TypeError, KeyError) as e:
            raise ConfigError(str(e)) from None
        m = self.raw["micro"]
        if not m["counts"] or any(int(c) < 1 for c in m["counts"]):
            raise ConfigError("micro.counts must be a non-empty list of positive integers")
        if int(m["runs_per_count"]) < 1:
            raise ConfigError("micro.runs_per_count must be >= 1")
        if m["curve"] not in ("distancing", "no_distancing"):
            raise ConfigError("micro.curve must be 'distancing' or 'no_distancing'")
        for rid, v in self.raw["contagion"]["initial_infected"].items():
            if not isinstance(v, (int, float)) or v < 0:
                raise ConfigError(f"initial_infected[{rid}] must be a non-negative number")
        for name in ("osm", "neighborhoods", "connections"):
            p = self.input_path(name)
            if p is not None and not p.exists():
                raise ConfigError(f"input path inputs.{name} does not exist: {p}")
        if not isinstance(self.raw["seed"], int) or not 0 <= self.raw["seed"] < 2**64:
            raise ConfigError("seed must be an unsigned 64-bit integer")

    @property
    def seed(self) -> int:
        return int(self.raw["seed"])

    @property
    def output(self) -> Path:
        p = Path(self.raw["output"])
        return p if p.is_absolute() else self.base_dir / p

    def input_path(self, name: str) -> Path | None:
        v = self.raw["inputs"].get(name)
        if v is None:
            return None
        p = Path(v)
        return p if p.is_absolute() else self.base_dir / p

    @property
    def subdivision(self) -> SubdivisionConfig:
        g = self.raw["generation"]
        try:
            policy = NoAccessPolicy(g["no_access_policy"])
        except ValueError:
            raise ConfigError(f"unknown no_access_policy {g['no_access_policy']!r}") from None
        return SubdivisionConfig(
            float(g["area_threshold"]), float(g["offset_range"]), policy, self.seed, float(g["street_width"])
        )

    @property
    def setbacks(self) -> tuple[float, float]:
        g = self.raw["generation"]
        f, s = float(g["setback_front"]), float(g["setback_side"])
        if f < 0 or s < 0:
            raise ConfigError("setbacks must be non-negative")
        return f, s

    def floor_range_for(self, subregion_id: str) -> tuple[int, int]:
        g = self.raw["generation"]
        lo, hi = g["floors_per_subregion"].get(subregion_id, g["floors"])
        lo, hi = int(lo), int(hi)
        if not 1 <= lo <= hi:
            raise ConfigError(f"floor range [{lo}, {hi}] must satisfy 1 <= min <= max")
        return lo, hi

    @property
    def macro(self) -> MacroConfig:
        m = self.raw["macro"]
        return MacroConfig(
            cell_area=float(m["cell_area"]),
            desired_speed=float(m["desired_speed"]),
            desired_density=float(m["desired_density"]),
            cloud_size=int(m["cloud_size"]),
            event_period=float(m["event_period"]),
            duration=float(m["duration"]),
            dt=float(m["dt"]),
            density_source=str(m["density_source"]),
            density_scale=float(m["density_scale"]),
            record_every=int(m["record_every"]),
        )

    @property
    def micro_template(self) -> MicroScenario:
        m = self.raw["micro"]
        return MicroScenario(
            width=float(m["width"]),
            height=float(m["height"]),
            social_distance=float(m["social_distance"]),
            agent_count=1,
            duration=float(m["duration"]),
            frame_rate=float(m["frame_rate"]),
            rng_seed=self.seed,
            speed=float(m["speed"]),
            perception_radius=float(m["perception_radius"]),
            marker_density=float(m["marker_density"]),
            arrival_radius=float(m["arrival_radius"]),
        )

    @property
    def counts(self) -> list[int]:
        return [int(c) for c in self.raw["micro"]["counts"]]

    @property
    def sir(self) -> SIRParams:
        c = self.raw["contagion"]
        return SIRParams(float(c["beta"]), float(c["gamma"]), float(c["dt"]))

    @property
    def removed_split(self) -> RemovedSplit:
        return RemovedSplit(float(self.raw["contagion"]["recovered_fraction"]))

    def digest(self) -> str:
        """Hash of the resolved configuration (independent of key order)."""
        return hashlib.sha256(json.dumps(self.raw, sort_keys=True).encode()).hexdigest()


def load_config(path: str | Path | None, overrides: list[str] = (), seed: int | None = None, output: str | None = None) -> ScenarioConfig:
    doc: dict = {}
    base = Path.cwd()
    if path is not None:
        p = Path(path)
        if not p.exists():
            raise ConfigError(f"config file not found: {p}")
        try:
            doc = yaml.safe_load(p.read_text()) or {}
        except yaml.YAMLError as e:
            raise ConfigError(f"cannot parse {p}: {e}") from None
        if not isinstance(doc, dict):
            raise ConfigError("config root must be a mapping")
        base = p.resolve().parent
    raw = _merge(DEFAULTS, doc)
    for a in overrides:
        apply_override(raw, a)
    if seed is not None:
        raw["seed"] = seed
    if output is not None:
        raw["output"] = str(Path(output).resolve())
    return ScenarioConfig(raw, base)
