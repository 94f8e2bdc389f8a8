"""Macroscopic cloud simulation on a marker grid, with region occupancy and contagion events."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from . import kernels
from .contagion import (
    SIRParams,
    SIRState,
    ViolationCurve,
    contagion_event,
)
from .envgraph import RegionGraph
from .geometry import Point2, Polygon, points_in_polygon, polygon_distance
from .rng import derive_rng

OCCUPANCY_COLUMNS = ("time", "region_id", "agents", "mean_density")


class MarkerGrid:
    """Square cells over a bounding box; each cell has at most one owning cloud."""

    def __init__(self, cell_area: float, origin: Point2, nx: int, ny: int):
        if not cell_area > 0:
            raise ValueError("cell_area must be positive")
        if nx < 1 or ny < 1:
            raise ValueError("grid needs at least one cell")
        self.cell_area = float(cell_area)
        self.side = math.sqrt(cell_area)
        self.origin = origin
        self.nx, self.ny = int(nx), int(ny)
        self.ownership = np.full((self.ny, self.nx), -1, dtype=np.int32)

    @classmethod
    def covering(cls, bounds: tuple[float, float, float, float], cell_area: float) -> MarkerGrid:
        x0, y0, x1, y1 = bounds
        side = math.sqrt(cell_area)
        nx = max(1, int(math.ceil((x1 - x0) / side - 1e-9)))
        ny = max(1, int(math.ceil((y1 - y0) / side - 1e-9)))
        return cls(cell_area, Point2(x0, y0), nx, ny)

    @property
    def dimensions(self) -> tuple[int, int]:
        return self.nx, self.ny

    def cell_center(self, idx: int) -> Point2:
        j, i = divmod(int(idx), self.nx)
        return Point2(self.origin.x + (i + 0.5) * self.side, self.origin.y + (j + 0.5) * self.side)

    def owned_count(self, cid: int) -> int:
        return int(np.count_nonzero(self.ownership == cid))

    def clear(self) -> None:
        self.ownership.fill(-1)


@dataclass
class Cloud:
    id: str
    center: Point2
    population: int
    desired_speed: float
    desired_density: float
    goal: Point2
    sir: SIRState
    profile: dict[str, str] = field(default_factory=dict)
    claimed_cells: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=np.int64))
    home_region: str = ""
    next_event: float = 0.0

    def __post_init__(self):
        if self.population <= 0:
            raise ValueError(f"cloud {self.id}: population must be positive")
        if not self.desired_density > 0:
            raise ValueError(f"cloud {self.id}: desired density must be positive")
        if self.desired_speed < 0:
            raise ValueError(f"cloud {self.id}: negative speed")

    @property
    def desired_area(self) -> float:
        return self.population / self.desired_density

    def claimed_area(self, cell_area: float) -> float:
        return len(self.claimed_cells) * cell_area

    def density_shortfall(self, cell_area: float) -> float:
        """|claimed area x desired density - population|, zero when the cloud has all its space."""
        return abs(self.claimed_area(cell_area) * self.desired_density - self.population)

    def interaction_radius(self) -> float:
        return 2.0 * math.sqrt(self.desired_area / math.pi)


@dataclass(frozen=True)
class OccupancyRecord:
    time: float
    region_id: str
    agents: int
    mean_density: float

    def __post_init__(self):
        if self.agents < 0 or self.mean_density < 0:
            raise ValueError("occupancy values must be non-negative")


@dataclass(frozen=True)
class EpidemicRecord:
    time: float
    group_id: str
    S: float
    I: float
    R: float
    T: float
    r: float
    applied: bool


@dataclass
class World:
    env: RegionGraph
    grid: MarkerGrid
    clouds: list[Cloud]
    time: float = 0.0
    steps: int = 0
    occupancy: list[OccupancyRecord] = field(default_factory=list)
    epidemic: list[EpidemicRecord] = field(default_factory=list)
    record_occupancy: bool = True

    def __post_init__(self):
        self.clouds.sort(key=lambda c: c.id)
        self._region_ids = sorted(self.env.regions)
        self._areas = {rid: self.env.regions[rid].outline.area for rid in self._region_ids}

    @property
    def region_ids(self) -> list[str]:
        return self._region_ids

    def total_population(self) -> int:
        return sum(c.population for c in self.clouds)

    def region_of(self, p: Point2) -> str:
        """Region holding ``p``; points outside every outline go to the nearest one."""
        pt = np.array([[p.x, p.y]])
        for rid in self._region_ids:
            if points_in_polygon(self.env.regions[rid].outline, pt)[0]:
                return rid
        return min(self._region_ids, key=lambda rid: (polygon_distance(self.env.regions[rid].outline, p), rid))

    def cloud_regions(self) -> dict[str, str]:
        if not self.clouds:
            return {}
        pts = np.array([[c.center.x, c.center.y] for c in self.clouds])
        out: dict[str, str] = {}
        left = np.ones(len(self.clouds), dtype=bool)
        for rid in self._region_ids:
            hit = points_in_polygon(self.env.regions[rid].outline, pts) & left
            for k in np.nonzero(hit)[0]:
                out[self.clouds[k].id] = rid
            left &= ~hit
        for k in np.nonzero(left)[0]:
            out[self.clouds[k].id] = self.region_of(self.clouds[k].center)
        return out


def cells_needed(population: float, desired_density: float, cell_area: float) -> int:
    return max(0, int(math.ceil(population / desired_density / cell_area - 1e-9)))


def _claim(world: World, k: int, c: Cloud) -> None:
    g = world.grid
    kern = kernels.get_backend()
    if len(c.claimed_cells):
        kern.macro_release(g.ownership, c.claimed_cells)
    need = cells_needed(c.population, c.desired_density, g.cell_area)
    c.claimed_cells = np.asarray(
        kern.macro_claim(
            g.ownership, g.origin.x, g.origin.y, g.side, c.center.x, c.center.y, c.interaction_radius(), need, k
        ),
        dtype=np.int64,
    )


def step(world: World, dt: float = 1.0) -> World:
    """Advance one tick: each cloud (in id order) re-claims cells then moves toward its goal.

    Movement is ``min(speed * dt, distance)`` scaled by the fraction of the
    desired area the cloud managed to claim.
    """
    if not dt > 0:
        raise ValueError("dt must be positive")
    g = world.grid
    for k, c in enumerate(world.clouds):
        _claim(world, k, c)
        d = c.goal - c.center
        dist = d.norm()
        if dist > 0.0:
            frac = min(max(c.claimed_area(g.cell_area) / c.desired_area, 0.0), 1.0)
            move = min(c.desired_speed * dt, dist) * frac
            if move >= dist:
                c.center = c.goal
            elif move > 0.0:
                c.center = c.center + d * (move / dist)
    world.steps += 1
    world.time = world.steps * dt
    if world.record_occupancy:
        world.occupancy.extend(occupancy_all(world))
    return world


def arrived(world: World, c: Cloud) -> bool:
    return c.center.distance(c.goal) < world.grid.side


def assign_goals(world: World, rng: np.random.Generator) -> list[str]:
    """Give every cloud at its goal a new goal drawn uniformly from the other region centers."""
    if not world.region_ids:
        raise ValueError("no regions to draw goals from")
    changed = []
    regions = world.cloud_regions()
    for c in world.clouds:
        if not arrived(world, c):
            continue
        here = regions[c.id]
        others = [rid for rid in world.region_ids if rid != here] or list(world.region_ids)
        pick = others[int(rng.integers(len(others)))]
        c.goal = world.env.regions[pick].centroid
        changed.append(c.id)
    return changed


def region_occupancy(world: World, region_id: str, regions: Mapping[str, str] | None = None) -> OccupancyRecord:
    if region_id not in world.env.regions:
        raise KeyError(f"unknown region {region_id}")
    regions = world.cloud_regions() if regions is None else regions
    pop = 0
    area = 0.0
    for c in world.clouds:
        if regions[c.id] == region_id:
            pop += c.population
            area += c.claimed_area(world.grid.cell_area)
    return OccupancyRecord(world.time, region_id, pop, pop / area if area > 0 else 0.0)


def occupancy_all(world: World) -> list[OccupancyRecord]:
    regions = world.cloud_regions()
    return [region_occupancy(world, rid, regions) for rid in world.region_ids]


# ---------------------------------------------------------------------------
# scenario setup and the driver loop


@dataclass(frozen=True)
class MacroConfig:
    cell_area: float = 16.0
    desired_speed: float = 10.0
    desired_density: float = 1.0
    cloud_size: int = 1000
    event_period: float = 60.0
    duration: float = 7200.0
    dt: float = 1.0
    density_source: str = "region"  # "region" | "cloud"
    density_scale: float = 1.0
    record_every: int = 1  # steps between occupancy rows

    def __post_init__(self):
        if not (self.cell_area > 0 and self.desired_density > 0 and self.dt > 0 and self.duration > 0):
            raise ValueError("macro settings must be positive")
        if self.desired_speed < 0 or self.cloud_size < 1 or self.event_period <= 0 or self.record_every < 1:
            raise ValueError("invalid macro settings")
        if self.density_source not in ("region", "cloud"):
            raise ValueError("density_source must be 'region' or 'cloud'")


def partition_population(population: int, cloud_size: int) -> list[int]:
    full, rest = divmod(int(population), int(cloud_size))
    return [cloud_size] * full + ([rest] if rest else [])


def _random_point_in(poly: Polygon, rng: np.random.Generator, tries: int = 1000) -> Point2:
    x0, y0, x1, y1 = poly.bounds()
    for _ in range(tries):
        x = x0 + rng.random() * (x1 - x0)
        y = y0 + rng.random() * (y1 - y0)
        if poly.contains(Point2(x, y), boundary=False):
            return Point2(x, y)
    return poly.interior_point()


def build_world(
    env: RegionGraph,
    cfg: MacroConfig,
    seed: int,
    initial_infected: Mapping[str, float] | None = None,
    profiles: Mapping[str, Mapping[str, str]] | None = None,
) -> World:
    """Seed clouds per region: full clouds of ``cloud_size`` plus one remainder cloud."""
    initial_infected = dict(initial_infected or {})
    for rid in initial_infected:
        if rid not in env.regions:
            raise KeyError(f"initial infected for unknown region {rid}")
    rng = derive_rng(seed, "placement")
    grid = MarkerGrid.covering(env.bounds.bounds(), cfg.cell_area)
    region_ids = sorted(env.regions)
    clouds = []
    for rid in region_ids:
        reg = env.regions[rid]
        sizes = partition_population(reg.population, cfg.cloud_size)
        infected_left = float(initial_infected.get(rid, 0.0))
        others = [o for o in region_ids if o != rid] or [rid]
        for k, n in enumerate(sizes):
            inf = min(infected_left, float(n))
            infected_left -= inf
            goal = env.regions[others[int(rng.integers(len(others)))]].centroid
            clouds.append(
                Cloud(
                    id=f"{rid}/{k:04d}",
                    center=_random_point_in(reg.outline, rng),
                    population=n,
                    desired_speed=cfg.desired_speed,
                    desired_density=cfg.desired_density,
                    goal=goal,
                    sir=SIRState.initial(n, inf),
                    profile=dict((profiles or {}).get(rid, {})),
                    home_region=rid,
                    next_event=cfg.event_period,
                )
            )
    return World(env, grid, clouds)


def _event_density(world: World, c: Cloud, cfg: MacroConfig, occ: Mapping[str, OccupancyRecord], regions) -> float:
    if cfg.density_source == "cloud":
        area = c.claimed_area(world.grid.cell_area)
        d = c.population / area if area > 0 else math.inf
    else:
        rid = regions[c.id]
        d = occ[rid].agents / world._areas[rid]
    return d * cfg.density_scale


def run(
    world: World,
    cfg: MacroConfig,
    curve: ViolationCurve,
    params: SIRParams,
    seed: int,
    invert_rule: bool = False,
    until: float | None = None,
) -> World:
    """Drive the world to ``until`` (default ``cfg.duration``) seconds.

    Each cloud trials a contagion event every ``event_period`` seconds and
    whenever it reaches its goal, after which it gets a new goal.
    """
    goal_rng = derive_rng(seed, "goals", world.steps)
    end = cfg.duration if until is None else until
    total_steps = int(round(end / cfg.dt))
    world.record_occupancy = False
    event_rngs = {c.id: derive_rng(seed, "contagion", c.id, world.steps) for c in world.clouds}
    while world.steps < total_steps:
        step(world, cfg.dt)
        regions = world.cloud_regions()
        occ = {rid: region_occupancy(world, rid, regions) for rid in world.region_ids}
        if world.steps % cfg.record_every == 0:
            world.occupancy.extend(occ[rid] for rid in world.region_ids)
        for c in world.clouds:
            due = world.time >= c.next_event - 1e-9
            hit = arrived(world, c)
            if not (due or hit):
                continue
            if due:
                c.next_event += cfg.event_period
            density = _event_density(world, c, cfg, occ, regions)
            before = c.sir
            c.sir, log = contagion_event(before, density, curve, params, event_rngs[c.id], invert_rule)
            world.epidemic.append(
                EpidemicRecord(world.time, c.id, c.sir.susceptible, c.sir.infected, c.sir.removed, log.threshold, log.draw, log.applied)
            )
        assign_goals(world, goal_rng)
    return world


# ---------------------------------------------------------------------------
# exports


def occupancy_csv(records) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(OCCUPANCY_COLUMNS)
    for r in records:
        w.writerow([repr(float(r.time)), r.region_id, r.agents, repr(float(r.mean_density))])
    return buf.getvalue()


def epidemic_csv(records) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("time", "group_id", "S", "I", "R", "T", "r", "applied"))
    for e in records:
        w.writerow([repr(float(e.time)), e.group_id, repr(e.S), repr(e.I), repr(e.R), repr(e.T), repr(e.r), int(e.applied)])
    return buf.getvalue()


def snapshot(world: World) -> dict:
    """JSON-ready state sufficient to rebuild the cloud set and grid ownership."""
    g = world.grid
    return {
        "time": world.time,
        "steps": world.steps,
        "grid": {"cell_area": g.cell_area, "origin": [g.origin.x, g.origin.y], "nx": g.nx, "ny": g.ny},
        "clouds": [
            {
                "id": c.id,
                "center": [c.center.x, c.center.y],
                "population": c.population,
                "desired_speed": c.desired_speed,
                "desired_density": c.desired_density,
                "goal": [c.goal.x, c.goal.y],
                "sir": [c.sir.susceptible, c.sir.infected, c.sir.removed, c.sir.total],
                "profile": c.profile,
                "claimed_cells": [int(x) for x in c.claimed_cells],
                "home_region": c.home_region,
                "next_event": c.next_event,
            }
            for c in world.clouds
        ],
    }


def restore(env: RegionGraph, doc: dict) -> World:
    gd = doc["grid"]
    grid = MarkerGrid(gd["cell_area"], Point2(*gd["origin"]), gd["nx"], gd["ny"])
    clouds = []
    for d in doc["clouds"]:
        clouds.append(
            Cloud(
                id=d["id"],
                center=Point2(*d["center"]),
                population=int(d["population"]),
                desired_speed=d["desired_speed"],
                desired_density=d["desired_density"],
                goal=Point2(*d["goal"]),
                sir=SIRState(*d["sir"]),
                profile=dict(d.get("profile", {})),
                claimed_cells=np.array(d["claimed_cells"], dtype=np.int64),
                home_region=d.get("home_region", ""),
                next_event=d.get("next_event", 0.0),
            )
        )
    w = World(env, grid, clouds, time=doc["time"], steps=doc["steps"])
    for k, c in enumerate(w.clouds):
        grid.ownership.reshape(-1)[c.claimed_cells] = k
    return w


def dumps_snapshot(world: World) -> str:
    return json.dumps(snapshot(world), sort_keys=True)
