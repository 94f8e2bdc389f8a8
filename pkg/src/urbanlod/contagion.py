"""SIR bookkeeping, violation-curve lookup and the stochastic contagion-event rule."""

from __future__ import annotations

import csv
import io
import math
from bisect import bisect_left
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

CONSERVATION_TOL = 1e-9


class EmptyPopulationError(ValueError):
    pass


class MissingCalibrationError(LookupError):
    pass


@dataclass(frozen=True)
class SIRState:
    susceptible: float
    infected: float
    removed: float
    total: float

    def __post_init__(self):
        for name in ("susceptible", "infected", "removed", "total"):
            v = getattr(self, name)
            if not math.isfinite(v) or v < 0:
                raise ValueError(f"{name} must be finite and non-negative, got {v}")
        s = self.susceptible + self.infected + self.removed
        if abs(s - self.total) > CONSERVATION_TOL * max(1.0, self.total):
            raise ValueError(f"S+I+R = {s} differs from N = {self.total}")

    @classmethod
    def initial(cls, total: float, infected: float = 0.0) -> SIRState:
        infected = min(float(infected), float(total))
        return cls(float(total) - infected, infected, 0.0, float(total))

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.susceptible, self.infected, self.removed)


@dataclass(frozen=True)
class SIRParams:
    beta: float = 0.7
    gamma: float = 0.35
    dt: float = 1.0

    def __post_init__(self):
        if not (self.beta > 0 and self.gamma > 0 and self.dt > 0):
            raise ValueError("beta, gamma and dt must be positive")

    @property
    def r0(self) -> float:
        return self.beta / self.gamma


def sir_step(state: SIRState, params: SIRParams) -> SIRState:
    """One forward-Euler step of the SIR equations.

    Flows are clamped so no compartment goes negative; any rounding residual
    is pushed into the larger of S and I so that S + I + R equals N and R
    never decreases.
    """
    N = state.total
    if N <= 0:
        raise EmptyPopulationError("SIR step on an empty population")
    S, I, R = state.as_tuple()
    if I == 0.0:
        return state
    infect = min(params.beta * I * S / N * params.dt, S)
    recover = min(params.gamma * I * params.dt, I + infect)
    S2 = S - infect
    I2 = I + infect - recover
    R2 = R + recover
    S2, I2 = max(S2, 0.0), max(I2, 0.0)
    resid = N - (S2 + I2 + R2)
    if resid != 0.0:
        if S2 >= I2:
            S2 = max(S2 + resid, 0.0)
        else:
            I2 = max(I2 + resid, 0.0)
    return SIRState(S2, I2, R2, N)


# ---------------------------------------------------------------------------
# violation curve


@dataclass(frozen=True)
class CurvePoint:
    density: float
    ratio: float
    stddev: float = 0.0
    samples: int = 1


class ViolationCurve:
    """Piecewise-linear map from crowd density to violation ratio."""

    def __init__(self, points: Iterable[CurvePoint | Sequence] = ()):
        pts = [p if isinstance(p, CurvePoint) else CurvePoint(*p) for p in points]
        pts.sort(key=lambda p: p.density)
        for a, b in zip(pts, pts[1:]):
            if not b.density > a.density:
                raise ValueError("curve densities must be strictly increasing")
        for p in pts:
            if not 0.0 <= p.ratio <= 1.0:
                raise ValueError(f"ratio {p.ratio} outside [0, 1]")
        self.points: tuple[CurvePoint, ...] = tuple(pts)
        self._d = [p.density for p in pts]

    def __len__(self):
        return len(self.points)

    def __eq__(self, other):
        return isinstance(other, ViolationCurve) and self.points == other.points

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["density", "mean_ratio", "stddev", "samples"])
        for p in self.points:
            w.writerow([repr(p.density), repr(p.ratio), repr(p.stddev), p.samples])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> ViolationCurve:
        rows = csv.DictReader(io.StringIO(text))
        return cls(
            CurvePoint(float(r["density"]), float(r["mean_ratio"]), float(r["stddev"]), int(r["samples"])) for r in rows
        )

    def save(self, path: Path) -> None:
        Path(path).write_text(self.to_csv())

    @classmethod
    def load(cls, path: Path) -> ViolationCurve:
        return cls.from_csv(Path(path).read_text())

    @classmethod
    def constant(cls, ratio: float) -> ViolationCurve:
        return cls([CurvePoint(0.0, ratio)])


def lookup_threshold(curve: ViolationCurve, density: float) -> float:
    if not curve.points:
        raise MissingCalibrationError("violation curve is empty; run calibration first")
    pts = curve.points
    if density <= pts[0].density:
        return pts[0].ratio
    if density >= pts[-1].density:
        return pts[-1].ratio
    i = bisect_left(curve._d, density)
    b = pts[i]
    if b.density == density:
        return b.ratio
    a = pts[i - 1]
    t = (density - a.density) / (b.density - a.density)
    return a.ratio + t * (b.ratio - a.ratio)


@dataclass(frozen=True)
class EventLog:
    threshold: float
    draw: float
    applied: bool


def contagion_event(
    group: SIRState,
    density: float,
    curve: ViolationCurve,
    params: SIRParams,
    rng,
    invert_rule: bool = False,
) -> tuple[SIRState, EventLog]:
    """Trial a contagion: draw r and run one SIR step when r <= T.

    ``rng`` only needs a ``random()`` method.  With ``invert_rule`` the step
    runs when r > T instead.
    """
    T = lookup_threshold(curve, density)
    r = float(rng.random())
    applied = (r > T) if invert_rule else (r <= T)
    if applied:
        return sir_step(group, params), EventLog(T, r, True)
    return group, EventLog(T, r, False)


def report_integer_state(state: SIRState) -> tuple[int, int, int]:
    """Largest-remainder rounding of (S, I, R) onto integers summing to round(N)."""
    vals = state.as_tuple()
    n = int(round(state.total))
    floors = [int(math.floor(v)) for v in vals]
    seats = n - sum(floors)
    order = sorted(range(3), key=lambda k: (-(vals[k] - floors[k]), k))
    out = list(floors)
    for k in order[: max(seats, 0)]:
        out[k] += 1
    return tuple(out)


@dataclass(frozen=True)
class RemovedSplit:
    recovered_fraction: float = 0.98

    def __post_init__(self):
        if not 0.0 <= self.recovered_fraction <= 1.0:
            raise ValueError("recovered_fraction must lie in [0, 1]")

    @property
    def deceased_fraction(self) -> float:
        return 1.0 - self.recovered_fraction


def split_removed(removed: int, split: RemovedSplit) -> tuple[int, int]:
    if removed < 0:
        raise ValueError("removed must be non-negative")
    recovered = int(math.floor(removed * split.recovered_fraction + 0.5))
    recovered = min(recovered, removed)
    return recovered, removed - recovered


EPIDEMIC_COLUMNS = ("time", "group_id", "S", "I", "R", "T", "r", "applied")
