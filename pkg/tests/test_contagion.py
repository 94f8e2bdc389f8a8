from __future__ import annotations

import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import brute_force_rounding, final_size_susceptible, rk4_sir
from urbanlod.contagion import (
    CurvePoint,
    EmptyPopulationError,
    MissingCalibrationError,
    RemovedSplit,
    SIRParams,
    SIRState,
    ViolationCurve,
    contagion_event,
    lookup_threshold,
    report_integer_state,
    sir_step,
    split_removed,
)

BASE_PARAMS = SIRParams(0.7, 0.35, 1.0)


class Forced:
    """Stand-in generator returning a fixed sequence of draws."""

    def __init__(self, *draws):
        self.draws = list(draws)

    def random(self):
        return self.draws.pop(0)


# ---------------------------------------------------------------- state and params


def test_state_validation():
    with pytest.raises(ValueError):
        SIRState(-1, 1, 0, 0)
    with pytest.raises(ValueError):
        SIRState(10, 1, 0, 10)
    SIRState(998.3007, 1.3493, 0.35, 1000)


def test_params_validation_and_r0():
    assert BASE_PARAMS.r0 == 2.0
    with pytest.raises(ValueError):
        SIRParams(0, 0.35)
    with pytest.raises(ValueError):
        SIRParams(0.7, -1)


# ---------------------------------------------------------------- sir_step


def test_no_infected_is_fixed_point():
    s = SIRState(1000, 0, 0, 1000)
    assert sir_step(s, BASE_PARAMS) == s


def test_single_step_by_hand():
    # beta*I*S/N = 0.7*1*999/1000 = 0.6993 ; gamma*I = 0.35
    s = sir_step(SIRState.initial(1000, 1), BASE_PARAMS)
    assert s.susceptible == pytest.approx(998.3007, abs=1e-12)
    assert s.infected == pytest.approx(1.3493, abs=1e-12)
    assert s.removed == pytest.approx(0.35, abs=1e-12)


def test_empty_population():
    with pytest.raises(EmptyPopulationError):
        sir_step(SIRState(0, 0, 0, 0), BASE_PARAMS)


def test_large_step_is_clamped():
    s = sir_step(SIRState(10, 990, 0, 1000), SIRParams(5, 3, 1.0))
    assert min(s.as_tuple()) >= 0
    assert sum(s.as_tuple()) == pytest.approx(1000, abs=1e-9)


@settings(max_examples=300, deadline=None)
@given(
    st.floats(1, 1e6),
    st.floats(0, 1),
    st.floats(0, 1),
    st.floats(0.01, 5),
    st.floats(0.01, 5),
    st.floats(0.001, 2),
    st.integers(1, 40),
)
def test_conservation_and_monotone_removed(n, fi, fr, beta, gamma, dt, steps):
    i = n * fi
    r = (n - i) * fr
    s = SIRState(n - i - r, i, r, n)
    p = SIRParams(beta, gamma, dt)
    for _ in range(steps):
        nxt = sir_step(s, p)
        assert abs(sum(nxt.as_tuple()) - n) < 1e-9 * max(1.0, n)
        assert min(nxt.as_tuple()) >= 0
        assert nxt.removed >= s.removed
        s = nxt


def test_final_size_and_peak_against_oracles():
    p = SIRParams(0.7, 0.35, 0.01)
    s = SIRState.initial(1000, 1)
    peak = s.infected
    while s.infected >= 1e-6:
        s = sir_step(s, p)
        peak = max(peak, s.infected)
    s_inf = final_size_susceptible(999, 1, 0, 0.7, 0.35)
    assert abs(s.susceptible / 1000 - s_inf / 1000) < 1e-3
    # final-size relation written on fractions
    lhs = math.log((s.susceptible / 1000) / 0.999)
    rhs = -2.0 * (1 - s.susceptible / 1000 - 0.0)
    assert abs(lhs - rhs) < 1e-3
    rk_peak, _ = rk4_sir(999, 1, 0, 0.7, 0.35, 0.01, 200)
    assert abs(peak - rk_peak) / rk_peak < 0.02


# ---------------------------------------------------------------- curve lookup


CURVE = ViolationCurve([(0.01, 0.2), (0.02, 0.4), (0.04, 0.5)])


def test_lookup_at_point():
    assert lookup_threshold(CURVE, 0.02) == 0.4


def test_lookup_midpoint():
    assert lookup_threshold(CURVE, 0.015) == pytest.approx(0.3)


def test_lookup_clamps():
    assert lookup_threshold(CURVE, 0.0) == 0.2
    assert lookup_threshold(CURVE, 1.0) == 0.5


def test_lookup_empty_curve():
    with pytest.raises(MissingCalibrationError):
        lookup_threshold(ViolationCurve(), 0.1)


def test_curve_validation():
    with pytest.raises(ValueError):
        ViolationCurve([(0.1, 0.2), (0.1, 0.3)])
    with pytest.raises(ValueError):
        ViolationCurve([(0.1, 1.2)])


def test_curve_csv_roundtrip(tmp_path):
    c = ViolationCurve([CurvePoint(1 / 352, 0.0, 0.0, 10), CurvePoint(2 / 352, 0.123456789012345, 0.01, 10)])
    assert c.to_csv().splitlines()[0] == "density,mean_ratio,stddev,samples"
    c.save(tmp_path / "c.csv")
    assert ViolationCurve.load(tmp_path / "c.csv") == c


@settings(max_examples=200, deadline=None)
@given(
    st.lists(st.floats(0, 1), min_size=1, max_size=10).map(sorted),
    st.floats(-0.1, 0.5),
    st.floats(-0.1, 0.5),
)
def test_lookup_monotone_for_monotone_curve(ratios, d1, d2):
    curve = ViolationCurve([(0.01 * (k + 1), r) for k, r in enumerate(ratios)])
    lo, hi = sorted((d1, d2))
    assert lookup_threshold(curve, lo) <= lookup_threshold(curve, hi) + 1e-15


# ---------------------------------------------------------------- events


def test_event_applied_when_draw_below_threshold():
    g = SIRState.initial(1000, 1)
    out, log = contagion_event(g, 0.0, ViolationCurve.constant(0.7), BASE_PARAMS, Forced(0.5))
    assert log.applied and log.threshold == 0.7 and log.draw == 0.5
    assert out == sir_step(g, BASE_PARAMS)


def test_event_ignored_when_draw_above_threshold():
    g = SIRState.initial(1000, 1)
    out, log = contagion_event(g, 0.0, ViolationCurve.constant(0.7), BASE_PARAMS, Forced(0.9))
    assert not log.applied
    assert out is g


def test_equal_draw_applies():
    g = SIRState.initial(1000, 1)
    _, log = contagion_event(g, 0.0, ViolationCurve.constant(0.7), BASE_PARAMS, Forced(0.7))
    assert log.applied


def test_invert_rule():
    g = SIRState.initial(1000, 1)
    _, a = contagion_event(g, 0.0, ViolationCurve.constant(0.7), BASE_PARAMS, Forced(0.9), invert_rule=True)
    _, b = contagion_event(g, 0.0, ViolationCurve.constant(0.7), BASE_PARAMS, Forced(0.5), invert_rule=True)
    assert a.applied and not b.applied


def test_zero_threshold_practically_never_applies():
    rng = np.random.default_rng(123)
    g = SIRState.initial(1000, 1)
    hits = sum(contagion_event(g, 0.0, ViolationCurve.constant(0.0), BASE_PARAMS, rng)[1].applied for _ in range(10000))
    assert hits / 10000 < 0.001


def test_unit_curve_matches_deterministic_trace():
    rng = np.random.default_rng(5)
    g = h = SIRState.initial(1000, 1)
    for _ in range(200):
        g, log = contagion_event(g, 0.03, ViolationCurve.constant(1.0), BASE_PARAMS, rng)
        h = sir_step(h, BASE_PARAMS)
        assert log.applied and g == h


# ---------------------------------------------------------------- integer reporting


def test_integer_report_examples():
    assert report_integer_state(SIRState(999.0, 1.0, 0.0, 1000)) == (999, 1, 0)
    assert report_integer_state(SIRState(998.3007, 1.3493, 0.35, 1000)) == (998, 1, 1)
    assert sum(report_integer_state(SIRState(333.4, 333.3, 333.3, 1000))) == 1000


def test_integer_report_matches_enumeration_on_worked_case():
    vals = (998.3007, 1.3493, 0.35)
    assert report_integer_state(SIRState(*vals, 1000)) == brute_force_rounding(vals, 1000)


@settings(max_examples=300, deadline=None)
@given(st.integers(1, 100000), st.floats(0, 1), st.floats(0, 1))
def test_integer_report_matches_enumeration(n, a, b):
    s = n * a
    i = (n - s) * b
    r = n - s - i
    if r < 0:
        r = 0.0
    state = SIRState(s, i, r, n)
    got = report_integer_state(state)
    assert sum(got) == n
    assert got == brute_force_rounding(state.as_tuple(), n)


# ---------------------------------------------------------------- removed split


def test_split_examples():
    assert split_removed(100, RemovedSplit(0.98)) == (98, 2)
    assert split_removed(0, RemovedSplit()) == (0, 0)
    assert split_removed(7, RemovedSplit(0.5)) == (4, 3)


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 10**6), st.floats(0, 1))
def test_split_sums_and_rounds_half_up(removed, frac):
    rec, dec = split_removed(removed, RemovedSplit(frac))
    assert rec + dec == removed and rec >= 0 and dec >= 0
    exact = Fraction(removed) * Fraction(frac)
    assert rec == min(removed, math.floor(exact + Fraction(1, 2)))


def test_split_validation():
    with pytest.raises(ValueError):
        RemovedSplit(1.5)
    assert RemovedSplit(0.98).deceased_fraction == pytest.approx(0.02)
