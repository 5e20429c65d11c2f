import cmath
import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from meroflow.conformal import PathSpec, contour_integral_reciprocal
from meroflow.expr import Const, Mul, Neg, parse
from meroflow.flow import (
    EquilibriumApproach, EscapedFiniteTime, IntegrationControls, NoFiniteTimeEscape, Periodic, ReachedPole,
    SeedRejected, TimeBudgetExhausted, escape_time, integrate, termination_from_dict, zero_approach_bound_check,
)


def run(text, z0, **ctl):
    return integrate(parse(text), z0, IntegrationControls(**ctl) if ctl else None)


# -- controls ----------------------------------------------------------------

def test_default_controls_and_schedule():
    c = IntegrationControls()
    assert (c.rtol, c.atol, c.max_steps, c.max_time) == (1e-10, 1e-12, 10_000_000, 1e3)
    assert c.radii[0] == 1e3 and len(c.radii) == 41
    assert np.all(np.diff(c.radii) > 0)


@pytest.mark.parametrize("bad", [dict(rtol=0), dict(atol=-1), dict(escape_radius=0), dict(pole_radius=-1e-8)])
def test_controls_reject_nonpositive(bad):
    with pytest.raises(ValueError):
        IntegrationControls(**bad)


# -- closed-form trajectories -----------------------------------------------

@pytest.mark.parametrize("z0,T", [(1, 1.0), (2, 0.5), (0.25, 4.0)])
def test_square_escapes_at_reciprocal(z0, T):
    term = run("z^2", z0).termination
    assert isinstance(term, EscapedFiniteTime)
    assert term.T_est == pytest.approx(T, abs=1e-6)
    assert term.uncertainty >= 0


def test_exponential_flow_escape_and_closed_form():
    tr = run("-exp(-z)", 0)
    assert isinstance(tr.termination, EscapedFiniteTime)
    assert abs(tr.termination.T_est - 1) <= 1e-6
    assert tr.termination.T_est > tr.t[-1]
    assert np.max(np.abs(np.exp(tr.z) + tr.t - 1)) <= 1e-8


def test_exponential_flow_non_escape_branch():
    # exp(z(t)) = -1 - t never reaches zero
    assert isinstance(run("-exp(-z)", 1j * math.pi).termination, TimeBudgetExhausted)


def test_pole_capture():
    term = run("1/z", 1j).termination
    assert isinstance(term, ReachedPole)
    assert term.order == 1
    assert abs(term.location) < 1e-6
    assert term.T == pytest.approx(0.5, abs=1e-6)


def test_equilibrium_approach():
    term = run("z^2", 1j).termination
    assert isinstance(term, EquilibriumApproach)
    assert abs(term.location) < 1e-6
    assert isinstance(run("-z", 1).termination, EquilibriumApproach)


def test_seed_at_zero_returns_immediately():
    tr = run("z^2", 0)
    assert tr.termination == EquilibriumApproach(0j)
    assert len(tr) == 1


def test_seed_at_pole_rejected():
    with pytest.raises(SeedRejected):
        run("1/z", 0)


def test_periodic_orbit_of_cotangent_flow():
    term = run("i*cos(z)/sin(z)", 1 + 0.3j).termination
    assert isinstance(term, Periodic)
    assert term.period == pytest.approx(2 * math.pi, rel=1e-6)


def test_constant_field_runs_out_of_time():
    assert isinstance(run("1", 0, max_time=50.0).termination, TimeBudgetExhausted)


# -- escape_time --------------------------------------------------------------

def _partial(text, z0, t_stop):
    return integrate(parse(text), z0, IntegrationControls(max_time=t_stop))


def test_escape_time_square():
    f = parse("z^2")
    partial = _partial("z^2", 2, 0.4995)  # |z| = 1000 at t = 0.499
    assert np.max(np.abs(partial.z)) >= 1e3
    T, unc = escape_time(f, partial)
    assert T == pytest.approx(0.5, abs=1e-6)
    assert abs(T - 0.5) <= unc + 1e-12


def test_escape_time_cube():
    f = parse("z^3")
    partial = _partial("z^3", 1, 0.49999999)
    T, _ = escape_time(f, partial)
    assert T == pytest.approx(0.5, abs=1e-6)


def test_escape_time_constant_field_diverges():
    f = parse("1")
    partial = _partial("1", 0, 1001.0)
    with pytest.raises(NoFiniteTimeEscape):
        escape_time(f, partial, IntegrationControls(max_time=1e6))


def test_escape_time_requires_exit():
    partial = _partial("z^2", 2, 0.1)
    with pytest.raises(ValueError):
        escape_time(parse("z^2"), partial)


# -- serialisation ------------------------------------------------------------

def test_csv_and_json():
    tr = run("z^2", 1)
    lines = tr.to_csv().splitlines()
    assert lines[0] == "t,re,im"
    assert len(lines) == len(tr) + 1
    t, re, im = map(float, lines[-1].split(","))
    assert (t, complex(re, im)) == (tr.t[-1], tr.z[-1])
    d = json.loads(tr.termination_json())
    assert d["kind"] == "EscapedFiniteTime"
    assert termination_from_dict(d) == tr.termination


def test_json_round_trip_pole():
    term = run("1/z", 1j).termination
    assert termination_from_dict(json.loads(json.dumps(term.to_dict()))) == term


# -- invariants ---------------------------------------------------------------

def test_samples_strictly_increasing_and_residuals_small():
    for text, z0 in [("z^2", 1), ("-exp(-z)", 0.3j), ("i*cos(z)/sin(z)", 0.5 + 0.2j), ("1/z", 1j)]:
        tr = run(text, z0)
        assert np.all(np.diff(tr.t) > 0)
        g = np.array([abs(complex(parse(text)(p).value)) for p in tr.z[:-1]])
        assert np.all(tr.residuals(parse(text)) <= 1e-8 * (1 + g * tr.h))


def test_dense_output_matches_closed_form():
    tr = run("z^2", 1)
    t = np.linspace(0, 0.99, 200)
    np.testing.assert_allclose(tr.at(t), 1 / (1 - t), rtol=1e-8)


@settings(max_examples=15, deadline=None)
@given(st.floats(-1.5, 1.5), st.floats(0.2, 1.5))
def test_travel_time_identity_along_samples(x, y):
    f = parse("i*cos(z)/sin(z)")
    tr = integrate(f, complex(x, y), IntegrationControls(max_time=3.0))
    pts = tr.z[: max(2, len(tr.z) // 2)]
    elapsed = tr.t[len(pts) - 1]
    # the polyline through the samples is not the trajectory, but it is homotopic to it
    val = contour_integral_reciprocal(f, PathSpec.polyline(pts))
    assert abs(val.real - elapsed) <= 1e-8 * (1 + elapsed)
    assert abs(val.imag) <= 1e-8


def test_time_reversal_retraces():
    f = parse("-exp(-z)")
    fwd = integrate(f, 0.2 + 0.5j, IntegrationControls(max_time=0.5))
    back = integrate(Neg(f), fwd.z[-1], IntegrationControls(max_time=0.5))
    t_match = fwd.t[-1] - fwd.t
    ok = t_match <= back.t[-1]
    np.testing.assert_allclose(back.at(t_match[ok]), fwd.z[ok], atol=1e-6)


def test_scaling_covariance():
    f = parse("exp(-z^2)*tan(z)")
    c = 2.5
    a = integrate(f, 0.3 + 0.4j, IntegrationControls(max_time=1.0))
    b = integrate(Mul(Const(c), f), 0.3 + 0.4j, IntegrationControls(max_time=1.0 / c))
    t = np.linspace(0, b.t[-1], 50)
    np.testing.assert_allclose(b.at(t), a.at(c * t), atol=1e-8)


def test_tolerance_convergence_of_escape_time():
    f = parse("exp(-z^2)*tan(z)")
    a = integrate(f, 1.5j).termination
    b = integrate(f, 1.5j, IntegrationControls(rtol=5e-11)).termination
    assert isinstance(a, EscapedFiniteTime) and isinstance(b, EscapedFiniteTime)
    assert abs(a.T_est - b.T_est) < a.uncertainty


# -- zero approach ------------------------------------------------------------

@pytest.mark.parametrize("text,z0,m", [("-z", 1, 1), ("-z", 1j, 1), ("-z^2", 1, 2)])
def test_zero_approach_shell_bound(text, z0, m):
    rep = zero_approach_bound_check(parse(text), z0, 0, m, 1.0)
    assert rep.applicable
    assert [s.n for s in rep.shells] == list(range(3, 21))
    assert rep.all_ok


def test_zero_approach_transits_match_closed_form():
    lin = zero_approach_bound_check(parse("-z"), 1, 0, 1, 1.0)
    assert all(s.transit == pytest.approx(math.log(2), rel=1e-5) for s in lin.shells)
    quad = zero_approach_bound_check(parse("-z^2"), 1, 0, 2, 1.0)
    assert all(s.transit == pytest.approx(2.0 ** s.n, rel=1e-5) for s in quad.shells)


def test_zero_approach_not_applicable_when_repelled():
    rep = zero_approach_bound_check(parse("z"), 1, 0, 1, 1.0, controls=IntegrationControls(max_time=5.0))
    assert not rep.applicable and not rep.all_ok
