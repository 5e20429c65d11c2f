"""Travel times as contour integrals of 1/f, level curves of Im F, and pole-local structure.

``F`` is any local primitive of ``1/f``.  It is never built globally: every
quantity here is a difference of ``F`` along an explicit path, which is well
defined even where ``F`` itself is multivalued.
"""
from __future__ import annotations

import cmath
import json
import math
from dataclasses import dataclass, field
from typing import Iterable, NamedTuple, Sequence

import numpy as np

from .expr import (
    Expression, InconclusiveOrder, Neg, NonFiniteValue, compile_numpy, compile_scalar, format_complex, local_order,
)
from .flow import IntegrationControls, ReachedPole, integrate
from .quadrature import QuadratureError, integrate_pieces

__all__ = [
    "Line", "Arc", "PathSpec", "LevelCurve", "PoleLocalData", "PoleTime",
    "PathBlocked", "NotAPole", "CaptureFailed",
    "contour_integral_reciprocal", "travel_time", "trace_level_curve",
    "pole_incoming_directions", "time_to_pole",
]


class PathBlocked(ArithmeticError):
    """A zero or pole of f lies on (or numerically at) the path."""

    def __init__(self, message: str, location: complex):
        super().__init__(f"{message} near {location:.6g}")
        self.location = location


class NotAPole(ValueError):
    pass


class CaptureFailed(ArithmeticError):
    pass


# ------------------------------------------------------------------ paths

@dataclass(frozen=True)
class Line:
    start: complex
    end: complex

    def point(self, s):
        return self.start + (self.end - self.start) * s

    def to_dict(self) -> dict:
        return {"type": "line", "start": [self.start.real, self.start.imag],
                "end": [self.end.real, self.end.imag]}


@dataclass(frozen=True)
class Arc:
    """Circular arc ``center + radius * exp(i theta)``, theta from ``theta0`` to ``theta1``."""

    center: complex
    radius: float
    theta0: float
    theta1: float

    @property
    def start(self) -> complex:
        return self.center + self.radius * cmath.exp(1j * self.theta0)

    @property
    def end(self) -> complex:
        return self.center + self.radius * cmath.exp(1j * self.theta1)

    def point(self, s):
        return self.center + self.radius * np.exp(1j * (self.theta0 + (self.theta1 - self.theta0) * s))

    def to_dict(self) -> dict:
        return {"type": "arc", "center": [self.center.real, self.center.imag], "radius": self.radius,
                "theta0": self.theta0, "theta1": self.theta1}


@dataclass(frozen=True)
class PathSpec:
    segments: tuple
    initial_panels: int = 1

    def __post_init__(self):
        segs = tuple(self.segments)
        object.__setattr__(self, "segments", segs)
        for a, b in zip(segs, segs[1:]):
            if abs(a.end - b.start) > 1e-9 * max(1.0, abs(a.end)):
                raise ValueError(f"segments do not join: {a.end} vs {b.start}")

    @classmethod
    def polyline(cls, points: Iterable[complex]) -> "PathSpec":
        pts = [complex(p) for p in points]
        return cls(tuple(Line(a, b) for a, b in zip(pts, pts[1:])))

    @property
    def start(self) -> complex:
        return self.segments[0].start

    @property
    def end(self) -> complex:
        return self.segments[-1].end

    def nodes(self) -> np.ndarray:
        if not self.segments:
            return np.array([], dtype=complex)
        return np.array([s.start for s in self.segments] + [self.segments[-1].end], dtype=complex)

    def sample(self, per_segment: int = 33) -> np.ndarray:
        s = np.linspace(0.0, 1.0, per_segment)
        return np.concatenate([np.asarray(seg.point(s), dtype=complex) for seg in self.segments]) \
            if self.segments else np.array([], dtype=complex)

    def to_json(self) -> str:
        return json.dumps([s.to_dict() for s in self.segments])

    @classmethod
    def from_json(cls, text: str) -> "PathSpec":
        segs = []
        for d in json.loads(text):
            if d["type"] == "line":
                segs.append(Line(complex(*d["start"]), complex(*d["end"])))
            elif d["type"] == "arc":
                segs.append(Arc(complex(*d["center"]), float(d["radius"]), float(d["theta0"]), float(d["theta1"])))
            else:
                raise ValueError(f"unknown segment type {d['type']!r}")
        return cls(tuple(segs))

    # vectorised geometry for the quadrature
    def _arrays(self):
        n = len(self.segments)
        is_arc = np.zeros(n, dtype=bool)
        p0 = np.zeros(n, dtype=complex)
        p1 = np.zeros(n, dtype=complex)
        c = np.zeros(n, dtype=complex)
        r = np.zeros(n)
        t0 = np.zeros(n)
        t1 = np.zeros(n)
        for k, s in enumerate(self.segments):
            if isinstance(s, Arc):
                is_arc[k], c[k], r[k], t0[k], t1[k] = True, s.center, s.radius, s.theta0, s.theta1
            else:
                p0[k], p1[k] = s.start, s.end
        return is_arc, p0, p1, c, r, t0, t1

    def geometry(self, idx: np.ndarray, s: np.ndarray):
        """Points and ``dz/ds`` for piece indices ``idx`` at parameters ``s``."""
        is_arc, p0, p1, c, r, t0, t1 = self._cached()
        arc = is_arc[idx]
        th = t0[idx] + (t1[idx] - t0[idx]) * s
        e = np.exp(1j * th)
        z = np.where(arc, c[idx] + r[idx] * e, p0[idx] + (p1[idx] - p0[idx]) * s)
        dz = np.where(arc, 1j * r[idx] * (t1[idx] - t0[idx]) * e, p1[idx] - p0[idx])
        return z, dz

    def _cached(self):
        try:
            return self.__dict__["_geom"]
        except KeyError:
            g = self._arrays()
            object.__setattr__(self, "_geom", g)
            return g


@dataclass(frozen=True)
class LevelCurve(PathSpec):
    """Polyline along ``Im F = const`` with ``F`` increments from the first node."""

    F: np.ndarray = field(default=None, compare=False, repr=False)
    stop_reason: str = ""


# ------------------------------------------------------------- integrals

def _check_path(fn, path: PathSpec, per_segment: int = 65):
    s = np.linspace(0.0, 1.0, per_segment)
    for k, seg in enumerate(path.segments):
        z = np.asarray(seg.point(s), dtype=complex)
        v = fn(z)
        bad = ~np.isfinite(v) | (v == 0)
        if bad.any():
            loc = complex(z[np.argmax(bad)])
            kind = "zero of f" if np.isfinite(v[np.argmax(bad)]) else "pole of f"
            raise PathBlocked(f"{kind} on path", loc)


def contour_integral_reciprocal(f: Expression, path: PathSpec, epsrel: float = 1e-12) -> complex:
    """Integral of ``1/f`` along ``path`` (the travel time when the path is a trajectory).

    The absolute error target is ``epsrel`` times the integral of ``|1/f| |dz|``.

    Raises
    ------
    PathBlocked
        If a zero or pole of ``f`` is found on the path or the quadrature fails.
    """
    if not path.segments:
        return 0j
    fn = compile_numpy(f)
    _check_path(fn, path)

    def integrand(idx, s):
        z, dz = path.geometry(idx, s)
        with np.errstate(all="ignore"):
            return dz / fn(z)

    try:
        res = integrate_pieces(integrand, len(path.segments), epsrel=epsrel,
                               initial_panels=path.initial_panels)
    except QuadratureError as exc:
        z, _ = path.geometry(np.array([exc.piece]), np.array([exc.s]))
        raise PathBlocked(f"singular integrand ({exc})", complex(z[0])) from None
    return res.value


def travel_time(f: Expression, w0: complex, w1: complex, hint=None) -> complex:
    """``F(w1) - F(w0)`` along ``hint``.

    ``hint`` may be ``None`` (straight segment), a sequence of intermediate
    waypoints, or a :class:`PathSpec` running from ``w0`` to ``w1``.
    """
    w0, w1 = complex(w0), complex(w1)
    if isinstance(hint, PathSpec):
        if abs(hint.start - w0) > 1e-9 * max(1, abs(w0)) or abs(hint.end - w1) > 1e-9 * max(1, abs(w1)):
            raise ValueError("hint path does not join w0 to w1")
        path = hint
    else:
        path = PathSpec.polyline([w0, *(hint or ()), w1])
    return contour_integral_reciprocal(f, path)


# --------------------------------------------------------- level curves

_GL_X, _GL_W = np.polynomial.legendre.leggauss(10)


def _chord(fn, a: complex, b: complex) -> complex:
    z = a + (b - a) * 0.5 * (_GL_X + 1)
    with np.errstate(all="ignore"):
        return 0.5 * (b - a) * np.sum(_GL_W / fn(z))


def trace_level_curve(
    f: Expression,
    z0: complex,
    orientation: int = 1,
    re_F_budget: float = 1.0,
    spacing: float = 1e-3,
    max_nodes: int = 200_000,
) -> LevelCurve:
    """Follow ``Im F = Im F(z0)`` in the flow direction (``orientation=-1``: against it).

    Predictor: a step of length ``spacing * max(|z|, 1)`` along ``f/|f|``.
    Corrector: one Newton step on ``Im F`` along the normal, capped at half the
    step.  Stops once ``|Re F - Re F(z0)|`` reaches ``re_F_budget``, or when a
    zero or pole of ``f`` is approached.
    """
    if orientation not in (1, -1):
        raise ValueError("orientation must be +1 or -1")
    g = compile_scalar(f)
    fn = compile_numpy(f)
    z = complex(z0)
    try:
        fz = g(z)
    except NonFiniteValue:
        raise PathBlocked("pole of f at the start point", z) from None
    if fz == 0:
        raise PathBlocked("zero of f at the start point", z)
    nodes = [z]
    Fs = [0j]
    F = 0j
    reason = "budget"
    base = spacing * max(abs(z), 1.0)
    h = base
    while True:
        if abs(F.real) >= re_F_budget:
            break
        if len(nodes) >= max_nodes:
            reason = "max_nodes"
            break
        if abs(z) > 1e15:
            reason = "escaped"
            break
        base = spacing * max(abs(z), 1.0)
        h = min(2 * h, base)
        while True:
            if h < 1e-12 * max(abs(z), 1.0):
                reason = "singularity"
                break
            zp = z + orientation * h * fz / abs(fz)
            try:
                fp = g(zp)
                if fp == 0:
                    raise NonFiniteValue("zero")
                dF = _chord(fn, z, zp)
                n = 1j * fp / abs(fp)
                delta = (-(F + dF).imag) * abs(fp)
                delta = max(-0.5 * h, min(0.5 * h, delta))
                zc = zp + delta * n
                fc = g(zc)
                if fc == 0:
                    raise NonFiniteValue("zero")
            except NonFiniteValue:
                h *= 0.25
                continue
            if abs(fc / fz - 1) > 0.1:
                h *= 0.5
                continue
            dF = _chord(fn, z, zc)
            if not np.isfinite(dF):
                h *= 0.25
                continue
            break
        if reason == "singularity":
            break
        z, fz, F = zc, fc, F + dF
        nodes.append(z)
        Fs.append(F)
    segs = tuple(Line(a, b) for a, b in zip(nodes, nodes[1:]))
    return LevelCurve(segs, F=np.array(Fs), stop_reason=reason)


# ------------------------------------------------------- poles

@dataclass(frozen=True)
class PoleLocalData:
    location: complex
    order: int
    coefficient: complex
    directions: tuple
    verified: tuple

    def to_dict(self) -> dict:
        return {"location": format_complex(self.location), "m": self.order,
                "c": format_complex(self.coefficient),
                "directions": list(self.directions), "verified": list(self.verified)}


class PoleTime(NamedTuple):
    T: float
    uncertainty: float


def _verify_direction(f: Expression, z1: complex, m: int, c: complex, theta: float) -> bool:
    seed = z1 + 1e-3 * cmath.exp(1j * theta)
    t_in = 1e-3 ** (m + 1) / (abs(c) * (m + 1))
    try:
        fwd = integrate(f, seed, IntegrationControls(max_time=100 * t_in))
    except ValueError:
        return False
    # For m >= 2 the incoming trajectory is isolated and rounding deflects the
    # computed one slightly; a close pass (1% of the seed distance) counts.
    captured = bool(np.min(np.abs(fwd.z - z1)) <= 1e-5) or (
        isinstance(fwd.termination, ReachedPole) and abs(fwd.termination.location - z1) <= 1e-6)
    t_out = 1e-2 ** (m + 1) / (abs(c) * (m + 1))
    back = integrate(Neg(f), seed, IntegrationControls(max_time=10 * t_out))
    exits = bool(np.any(np.abs(back.z - z1) > 1e-2))
    return captured and exits


def pole_incoming_directions(f: Expression, z1: complex) -> PoleLocalData:
    """Order, leading coefficient and the ``m + 1`` directions along which trajectories enter a pole.

    Directions are ``(pi + arg c + 2 pi k) / (m + 1)`` in ``[0, 2 pi)``; each is
    checked by integrating into the pole from ``z1 + 1e-3 e^{i theta}`` and out
    of a ``1e-2`` ball under the reversed flow.
    """
    z1 = complex(z1)
    try:
        k, c = local_order(f, z1)
    except InconclusiveOrder as exc:
        raise NotAPole(f"no clean pole at {z1}: {exc}") from None
    if k >= 0:
        raise NotAPole(f"{z1} is not a pole (local order {k})")
    m = -k
    dirs = tuple(sorted(((math.pi + cmath.phase(c) + 2 * math.pi * j) / (m + 1)) % (2 * math.pi)
                        for j in range(m + 1)))
    verified = tuple(_verify_direction(f, z1, m, c, th) for th in dirs)
    return PoleLocalData(z1, m, c, dirs, verified)


def time_to_pole(f: Expression, seed: complex, controls: IntegrationControls | None = None) -> PoleTime:
    """Capture time from ``seed``.

    The uncertainty is the shift under a tenfold tighter tolerance plus the
    accumulated time-error estimate of the tighter run.
    """
    ctl = controls or IntegrationControls()
    ta = integrate(f, seed, ctl)
    tb = integrate(f, seed, ctl.replace(rtol=ctl.rtol / 10, atol=ctl.atol / 10))
    a, b = ta.termination, tb.termination
    if not (isinstance(a, ReachedPole) and isinstance(b, ReachedPole)):
        raise CaptureFailed(f"no pole capture from {seed} (got {a.kind})")
    return PoleTime(b.T, abs(a.T - b.T) + tb.time_error)
