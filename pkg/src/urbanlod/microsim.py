"""Marker-based micro crowd simulation and the violation-ratio calibration sweep."""

from __future__ import annotations

import io
import math
import os
from collections import OrderedDict
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from . import kernels
from .contagion import CurvePoint, ViolationCurve
from .rng import derive_rng


class PlacementError(RuntimeError):
    def __init__(self, msg: str, count: int | None = None):
        super().__init__(msg)
        self.count = count


@dataclass(frozen=True)
class MicroScenario:
    width: float = 22.0
    height: float = 16.0
    social_distance: float = 2.0
    agent_count: int = 2
    duration: float = 120.0
    frame_rate: float = 30.0
    social_distancing_enabled: bool = True
    rng_seed: int = 0
    speed: float = 1.3
    perception_radius: float = 1.0
    marker_density: float = 4.0  # markers per m2
    arrival_radius: float = 0.3
    placement_retries: int = 1000
    initial_positions: tuple | None = None
    speeds: tuple | None = None

    def __post_init__(self):
        if not (self.width > 0 and self.height > 0):
            raise ValueError("room dimensions must be positive")
        if not self.social_distance > 0:
            raise ValueError("social_distance must be positive")
        if self.agent_count < 1:
            raise ValueError("agent_count must be >= 1")
        if not (self.duration > 0 and self.frame_rate > 0):
            raise ValueError("duration and frame_rate must be positive")
        if not (self.perception_radius > 0 and self.marker_density > 0 and self.speed >= 0):
            raise ValueError("invalid marker parameters")
        if self.initial_positions is not None and len(self.initial_positions) != self.agent_count:
            raise ValueError("initial_positions must list one position per agent")
        if self.speeds is not None and len(self.speeds) != self.agent_count:
            raise ValueError("speeds must list one value per agent")

    @property
    def area(self) -> float:
        return self.width * self.height

    @property
    def density(self) -> float:
        return self.agent_count / self.area

    @property
    def frames(self) -> int:
        return int(round(self.duration * self.frame_rate))


@dataclass(frozen=True)
class ViolationStats:
    violating_frames: int
    total_frames: int

    def __post_init__(self):
        if not 0 <= self.violating_frames <= self.total_frames:
            raise ValueError("violating_frames out of range")

    @property
    def ratio(self) -> float:
        return self.violating_frames / self.total_frames if self.total_frames else 0.0


@dataclass
class MicroRun:
    stats: ViolationStats
    markers: np.ndarray
    positions: np.ndarray
    goals: np.ndarray
    trace: np.ndarray | None = None


def place_agents(s: MicroScenario, rng: np.random.Generator) -> np.ndarray:
    """Random positions with pairwise separation of at least the social distance."""
    pts: list[tuple[float, float]] = []
    sd2 = s.social_distance * s.social_distance
    for k in range(s.agent_count):
        for _ in range(s.placement_retries):
            x = rng.random() * s.width
            y = rng.random() * s.height
            if all((x - a) ** 2 + (y - b) ** 2 >= sd2 for a, b in pts):
                pts.append((x, y))
                break
        else:
            raise PlacementError(
                f"could not place agent {k} of {s.agent_count} after {s.placement_retries} tries",
                s.agent_count,
            )
    return np.array(pts, dtype=np.float64).reshape(-1, 2)


def simulate(
    s: MicroScenario,
    rng: np.random.Generator | None = None,
    backend: str | None = None,
    keep_trace: bool = False,
) -> MicroRun:
    if rng is None:
        rng = derive_rng(s.rng_seed, "micro")
    scale = np.array([s.width, s.height])
    n_markers = max(1, int(round(s.marker_density * s.area)))
    markers = np.ascontiguousarray(rng.random((n_markers, 2)) * scale)
    if s.initial_positions is not None:
        pos = np.array(s.initial_positions, dtype=np.float64).reshape(-1, 2)
        if np.any(pos < 0) or np.any(pos > scale):
            raise ValueError("initial position outside the room")
    else:
        pos = place_agents(s, rng)
    goals = np.ascontiguousarray(rng.random((s.agent_count, 2)) * scale)
    speeds = np.full(s.agent_count, s.speed) if s.speeds is None else np.array(s.speeds, dtype=np.float64)
    pos = np.ascontiguousarray(pos)
    frames = s.frames
    trace = np.empty((frames, s.agent_count, 2)) if keep_trace else None
    k = kernels.get_backend(backend)
    v = k.micro_run(
        markers,
        pos,
        goals,
        speeds,
        s.width,
        s.height,
        s.perception_radius,
        s.social_distance,
        s.social_distancing_enabled,
        1.0 / s.frame_rate,
        frames,
        s.arrival_radius,
        rng,
        trace,
    )
    return MicroRun(ViolationStats(int(v), frames), markers, pos, goals, trace)


def run_scenario(s: MicroScenario, rng: np.random.Generator | None = None, backend: str | None = None) -> ViolationStats:
    """Run the scenario and count frames where some pair is closer than the social distance."""
    return simulate(s, rng, backend).stats


def trace_csv(trace: np.ndarray, frame_rate: float) -> str:
    buf = io.StringIO()
    buf.write("frame,time,agent,x,y\n")
    for f in range(trace.shape[0]):
        for a in range(trace.shape[1]):
            buf.write(f"{f},{f / frame_rate!r},{a},{trace[f, a, 0]!r},{trace[f, a, 1]!r}\n")
    return buf.getvalue()


# ---------------------------------------------------------------------------
# calibration


@dataclass
class CalibrationResult:
    curve: ViolationCurve
    samples: dict[int, list[float]] = field(default_factory=dict)


def _one_run(args):
    base, count, run_index, backend = args
    s = replace(base, agent_count=count, initial_positions=None, speeds=None)
    rng = derive_rng(base.rng_seed, count, run_index)
    try:
        return count, run_index, run_scenario(s, rng, backend).ratio
    except PlacementError as e:
        raise PlacementError(f"count {count}: {e}", count) from None


def calibrate(
    base: MicroScenario,
    counts: Sequence[int],
    runs_per_count: int,
    workers: int | None = None,
    backend: str | None = None,
    return_samples: bool = False,
):
    """Violation ratio as a function of density, averaged over seeded runs.

    Repeated counts are merged into one point; their batches use consecutive
    run indices so every run draws a distinct stream.
    """
    if not counts:
        raise ValueError("counts must be non-empty")
    if runs_per_count < 1:
        raise ValueError("runs_per_count must be >= 1")
    for c in counts:
        if c < 1:
            raise ValueError(f"agent count {c} must be >= 1")
    jobs = []
    seen: dict[int, int] = {}
    for c in counts:
        start = seen.get(c, 0)
        jobs.extend((base, int(c), start + r, backend) for r in range(runs_per_count))
        seen[c] = start + runs_per_count
    workers = workers or 1
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=min(workers, os.cpu_count() or 1, len(jobs))) as ex:
            results = list(ex.map(_one_run, jobs, chunksize=max(1, len(jobs) // (4 * workers))))
    else:
        results = [_one_run(j) for j in jobs]
    by_count: dict[int, list[tuple[int, float]]] = OrderedDict()
    for c, ri, ratio in results:
        by_count.setdefault(c, []).append((ri, ratio))
    points = []
    samples = {}
    for c in sorted(by_count):
        vals = [r for _, r in sorted(by_count[c])]
        samples[c] = vals
        mean = math.fsum(vals) / len(vals)
        std = float(np.std(vals, ddof=1)) if len(vals) > 1 else 0.0
        points.append(CurvePoint(c / base.area, min(max(mean, 0.0), 1.0), std, len(vals)))
    curve = ViolationCurve(points)
    if return_samples:
        return CalibrationResult(curve, samples)
    return curve
