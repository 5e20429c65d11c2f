import cmath
import math

import numpy as np
import pytest

from meroflow.conformal import (
    Arc, CaptureFailed, Line, NotAPole, PathBlocked, PathSpec, contour_integral_reciprocal,
    pole_incoming_directions, time_to_pole, trace_level_curve, travel_time,
)
from meroflow.expr import parse
from meroflow.flow import IntegrationControls, integrate


# -- paths -------------------------------------------------------------------

def test_pathspec_json_round_trip():
    p = PathSpec((Line(1, 2 + 1j), Arc(0j, abs(2 + 1j), cmath.phase(2 + 1j), 2.0)))
    q = PathSpec.from_json(p.to_json())
    assert q == p
    assert p.start == 1 and abs(p.end - abs(2 + 1j) * cmath.exp(2j)) < 1e-15


def test_pathspec_rejects_gaps():
    with pytest.raises(ValueError):
        PathSpec((Line(0, 1), Line(2, 3)))


def test_unknown_segment_type():
    with pytest.raises(ValueError):
        PathSpec.from_json('[{"type": "spline"}]')


# -- integrals ---------------------------------------------------------------

def test_contour_integral_examples():
    assert contour_integral_reciprocal(parse("z^2"), PathSpec.polyline([1, 2])) == pytest.approx(0.5, abs=1e-14)
    v = contour_integral_reciprocal(parse("-exp(-z)"), PathSpec.polyline([0, -math.log(2)]))
    assert v == pytest.approx(0.5, abs=1e-14)
    square = PathSpec.polyline([0, 1, 1 + 1j, 1j, 0])
    assert abs(contour_integral_reciprocal(parse("1"), square)) < 1e-15


def test_travel_time_examples():
    assert travel_time(parse("z^2"), 1, 2) == pytest.approx(0.5, abs=1e-14)
    assert travel_time(parse("1/z"), 1j, 0.5j) == pytest.approx(3 / 8, abs=1e-14)
    assert travel_time(parse("-exp(-z)"), 0, -math.log(2)) == pytest.approx(0.5, abs=1e-14)


def test_travel_time_accepts_pathspec_hint_and_checks_endpoints():
    hint = PathSpec((Line(1, 1 + 1j), Line(1 + 1j, 2)))
    assert travel_time(parse("z^2"), 1, 2, hint) == pytest.approx(0.5, abs=1e-13)
    with pytest.raises(ValueError):
        travel_time(parse("z^2"), 1, 3, hint)


def test_blocked_paths_report_location():
    with pytest.raises(PathBlocked) as info:
        travel_time(parse("1/z"), -1, 1)
    assert abs(info.value.location) < 1e-9
    with pytest.raises(PathBlocked):
        travel_time(parse("z - 0.5"), 0, 1)


def test_residue_around_a_zero():
    # 1/f = 1/z has residue 1 at the zero of f
    circle = PathSpec((Arc(0j, 1.0, 0.0, 2 * math.pi),))
    assert contour_integral_reciprocal(parse("z"), circle) == pytest.approx(2j * math.pi, abs=1e-13)


def test_deformation_invariance():
    f = parse("exp(-z^2)*tan(z)")
    a = travel_time(f, 0.2 + 0.3j, 0.9 + 0.6j)
    b = travel_time(f, 0.2 + 0.3j, 0.9 + 0.6j, [0.2 + 0.8j, 0.7 + 0.9j])
    arc = PathSpec((Line(0.2 + 0.3j, 0.5 + 0.3j),
                    Arc(0.5 + 0.45j, 0.15, -math.pi / 2, math.pi / 2),
                    Line(0.5 + 0.6j, 0.9 + 0.6j)))
    c = travel_time(f, 0.2 + 0.3j, 0.9 + 0.6j, arc)
    assert abs(a - b) <= 1e-9
    assert abs(a - c) <= 1e-9


# -- level curves ----------------------------------------------------------

def test_level_curve_square_follows_positive_axis():
    lc = trace_level_curve(parse("z^2"), 1, 1, 0.5)
    z = lc.nodes()
    assert np.max(np.abs(z.imag)) < 1e-12
    assert np.all(np.diff(z.real) > 0)
    assert lc.F[-1].real >= 0.5
    # F = 1 - 1/z exactly
    np.testing.assert_allclose(lc.F, 1 - 1 / z, atol=1e-12)


def test_level_curve_exponential_flow_on_real_axis():
    lc = trace_level_curve(parse("-exp(-z)"), 0, 1, 0.4)
    assert np.max(np.abs(lc.nodes().imag)) < 1e-12
    assert lc.stop_reason == "budget"


@pytest.mark.parametrize("z0", [1.0, 0.6 + 0.4j, -0.8 + 0.9j])
def test_level_curve_of_cotangent_flow_keeps_cos_modulus(z0):
    lc = trace_level_curve(parse("i*cos(z)/sin(z)"), z0, 1, 2.0)
    z = lc.nodes()
    mod = np.abs(np.cos(z))
    assert np.max(np.abs(mod - abs(cmath.cos(z0)))) <= 1e-6 * (1 + abs(cmath.cos(z0)))


@pytest.mark.parametrize("text,z0,orient", [
    ("exp(-z^2)*tan(z)", 0.3 + 0.4j, 1), ("z^3 - 1", 0.5 + 0.5j, -1), ("i*cos(z)/sin(z)", 1.0, 1),
])
def test_level_curve_consistency(text, z0, orient):
    lc = trace_level_curve(parse(text), z0, orient, 0.3)
    assert np.max(np.abs(lc.F.imag)) <= 1e-8
    d = np.diff(lc.F.real)
    assert np.all(d > 0) if orient == 1 else np.all(d < 0)


def _dist_to_polyline(pts, poly):
    a, b = poly[:-1][None, :], poly[1:][None, :]
    p = pts[:, None]
    ab = b - a
    s = np.clip(((p - a) * ab.conjugate()).real / np.abs(ab) ** 2, 0, 1)
    return np.min(np.abs(p - (a + s * ab)), axis=1)


def test_level_curve_matches_trajectory():
    f = parse("exp(-z^2)*tan(z)")
    z0 = 0.3 + 0.4j
    budget = 0.2
    lc = trace_level_curve(f, z0, 1, budget)
    tr = integrate(f, z0, IntegrationControls(max_time=budget))
    curve = lc.nodes()
    common = min(lc.F[-1].real, tr.t[-1])
    traj = tr.at(np.linspace(0, common, 20000))
    # chord sag of the polyline is ~ spacing^2 * curvature / 8, far below 1e-6
    assert np.max(_dist_to_polyline(traj, curve)) <= 1e-6
    nodes = curve[lc.F.real <= common]
    assert np.max(_dist_to_polyline(nodes, traj)) <= 1e-6


def test_level_curve_values_agree_with_chords():
    f = parse("z^3 - 1")
    lc = trace_level_curve(f, 0.5 + 0.5j, 1, 0.3)
    z = lc.nodes()
    assert travel_time(f, z[0], z[-1], list(z[1:-1])) == pytest.approx(lc.F[-1], abs=1e-10)


def test_level_curve_stops_near_zero():
    lc = trace_level_curve(parse("-z"), 1, 1, 1e9)
    assert lc.stop_reason == "singularity"
    assert abs(lc.nodes()[-1]) < 1e-6


def test_level_curve_bad_start():
    with pytest.raises(PathBlocked):
        trace_level_curve(parse("1/z"), 0, 1, 1.0)
    with pytest.raises(ValueError):
        trace_level_curve(parse("z"), 1, 0, 1.0)


# -- poles ---------------------------------------------------------------------

@pytest.mark.parametrize("text,z1,m,c", [
    ("1/z", 0, 1, 1), ("1/z^2", 0, 2, 1), ("2/z", 0, 1, 2), ("1/(z-1)^2", 1, 2, 1), ("-1/z^3", 0, 3, -1),
])
def test_pole_directions(text, z1, m, c):
    data = pole_incoming_directions(parse(text), z1)
    assert data.order == m
    assert data.coefficient == pytest.approx(c, abs=1e-6)
    expected = sorted(((math.pi + cmath.phase(c) + 2 * math.pi * k) / (m + 1)) % (2 * math.pi) for k in range(m + 1))
    assert len(data.directions) == m + 1
    np.testing.assert_allclose(data.directions, expected, atol=1e-6)
    assert all(data.verified)


def test_pole_directions_json():
    d = pole_incoming_directions(parse("1/z^2"), 0).to_dict()
    assert d["m"] == 2 and d["verified"] == [True, True, True]


def test_not_a_pole():
    with pytest.raises(NotAPole):
        pole_incoming_directions(parse("z"), 0)
    with pytest.raises(NotAPole):
        pole_incoming_directions(parse("exp(1/z)"), 0)


@pytest.mark.parametrize("text,seed,T,tol", [
    ("1/z", 0.01j, 5e-5, 1e-9), ("1/z", 1j, 0.5, 1e-6), ("1/z^2", -0.1, 1e-3 / 3, 1e-9),
])
def test_time_to_pole(text, seed, T, tol):
    res = time_to_pole(parse(text), seed)
    assert abs(res.T - T) <= tol
    assert res.uncertainty >= 0


def test_time_to_pole_without_capture():
    with pytest.raises(CaptureFailed):
        time_to_pole(parse("1/z"), 1.0, IntegrationControls(max_time=1.0))


def test_direction_check_rejects_outgoing_rays():
    from meroflow.conformal import _verify_direction

    f = parse("1/z^2")
    assert _verify_direction(f, 0j, 2, 1 + 0j, math.pi / 3)
    assert not _verify_direction(f, 0j, 2, 1 + 0j, 0.0)
    assert not _verify_direction(f, 0j, 2, 1 + 0j, 2 * math.pi / 3)
