"""Adaptive integration of the complex flow dz/dt = f(z).

The integrator is a Dormand-Prince 5(4) pair with its 4th-order dense output,
run in real time on a scalar complex state.  Every trajectory ends with a
typed :class:`Termination`: escape to infinity in finite time, capture by a
pole, approach to a zero, a periodic return, or an exhausted budget.

Near a finite-time blowup the step is capped so that ``|f(z)| h`` never
exceeds a tenth of ``max(|z|, 1)``.  Escape times are extrapolated from the
times at which ``|z|`` crosses the radii ``R0 * 2**k``.  When the blowup is so
fast that the time axis runs out of floating-point resolution before the first
radius (``z' = -exp(-z)`` is the standard example), the stall itself is
classified: a Cauchy-converging position means a pole, a growing ``|z|``
means escape.
"""
from __future__ import annotations

import csv
import io
import json
import math
from collections import deque
from dataclasses import dataclass, field, replace
from typing import NamedTuple

import numpy as np
from scipy.optimize import brentq, minimize_scalar

from .expr import (
    Expression, InconclusiveOrder, NonFiniteValue, compile_scalar, differentiate, format_complex,
    local_order, parse_complex,
)

__all__ = [
    "IntegrationControls", "TrajectorySample", "Trajectory",
    "Termination", "EscapedFiniteTime", "ReachedPole", "EquilibriumApproach",
    "Periodic", "TimeBudgetExhausted", "StepUnderflow",
    "SeedRejected", "NoFiniteTimeEscape", "EscapeTime",
    "integrate", "escape_time", "ShellTransit", "ZeroApproachReport",
    "zero_approach_bound_check", "termination_from_dict",
]

_EPS = np.finfo(float).eps


@dataclass(frozen=True)
class IntegrationControls:
    rtol: float = 1e-10
    atol: float = 1e-12
    max_steps: int = 10_000_000
    max_time: float = 1e3
    escape_radius: float = 1e3
    escape_doublings: int = 40
    pole_radius: float = 1e-8
    min_step: float = 1e-300
    periodic_tol: float = 1e-8

    def __post_init__(self):
        for name in ("rtol", "atol", "max_time", "escape_radius", "pole_radius", "min_step", "periodic_tol"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.max_steps < 1 or self.escape_doublings < 0:
            raise ValueError("max_steps must be >= 1 and escape_doublings >= 0")

    @property
    def radii(self) -> np.ndarray:
        return self.escape_radius * 2.0 ** np.arange(self.escape_doublings + 1)

    def replace(self, **changes) -> "IntegrationControls":
        return replace(self, **changes)


class TrajectorySample(NamedTuple):
    t: float
    z: complex


# ------------------------------------------------------------ terminations

@dataclass(frozen=True)
class Termination:
    @property
    def kind(self) -> str:
        return type(self).__name__

    def to_dict(self) -> dict:
        out = {"kind": self.kind}
        for k, v in self.__dict__.items():
            out[k] = _jsonable(v)
        return out


@dataclass(frozen=True)
class EscapedFiniteTime(Termination):
    T_est: float
    uncertainty: float


@dataclass(frozen=True)
class ReachedPole(Termination):
    location: complex
    T: float
    order: int


@dataclass(frozen=True)
class EquilibriumApproach(Termination):
    location: complex


@dataclass(frozen=True)
class Periodic(Termination):
    period: float


@dataclass(frozen=True)
class TimeBudgetExhausted(Termination):
    reason: str = "time"


@dataclass(frozen=True)
class StepUnderflow(Termination):
    pass


_TERMINATIONS = {c.__name__: c for c in (
    EscapedFiniteTime, ReachedPole, EquilibriumApproach, Periodic, TimeBudgetExhausted, StepUnderflow)}


def _jsonable(v):
    if isinstance(v, complex):
        return format_complex(v)
    if isinstance(v, (np.floating, np.integer)):
        return v.item()
    return v


def termination_from_dict(d: dict) -> Termination:
    d = dict(d)
    cls = _TERMINATIONS[d.pop("kind")]
    for k in ("location",):
        if k in d:
            d[k] = parse_complex(d[k])
    return cls(**d)


class SeedRejected(ValueError):
    """The seed is a pole of f (or f cannot be evaluated there)."""


class NoFiniteTimeEscape(ArithmeticError):
    """Radius crossing times do not converge."""

    def __init__(self, crossings, reason: str = "crossing times do not converge geometrically"):
        super().__init__(reason)
        self.crossings = list(crossings)


class EscapeTime(NamedTuple):
    T_est: float
    uncertainty: float


# ------------------------------------------------------------- trajectory

@dataclass
class Trajectory:
    """Sampled solution with dense output between consecutive samples."""

    seed: complex
    controls: IntegrationControls
    t: np.ndarray
    z: np.ndarray
    termination: Termination
    dense: np.ndarray = field(repr=False)  # (len(t) - 1, 5) Dormand-Prince coefficients
    crossings: list = field(default_factory=list, repr=False)
    time_error: float = 0.0
    # exact step sizes; t[i+1] - t[i] loses digits once h << |t|
    h: np.ndarray = field(default=None, repr=False)

    @property
    def samples(self) -> list[TrajectorySample]:
        return [TrajectorySample(float(a), complex(b)) for a, b in zip(self.t, self.z)]

    def __len__(self) -> int:
        return len(self.t)

    def at(self, t) -> np.ndarray | complex:
        """Dense-output position at time(s) ``t`` inside the sampled range."""
        scalar = np.ndim(t) == 0
        tt = np.atleast_1d(np.asarray(t, dtype=float))
        if len(self.t) == 1:
            out = np.full(tt.shape, self.z[0], dtype=complex)
        else:
            if np.any(tt < self.t[0] - 1e-300) or np.any(tt > self.t[-1]):
                raise ValueError("time outside trajectory range")
            i = np.clip(np.searchsorted(self.t, tt, side="right") - 1, 0, len(self.t) - 2)
            h = self.t[i + 1] - self.t[i]
            theta = (tt - self.t[i]) / h
            out = _dense_eval(self.dense[i], theta)
        return complex(out[0]) if scalar else out

    def residuals(self, f: Expression, nodes: int = 8) -> np.ndarray:
        """Per-step defect ``|dz - integral of f(z(s)) ds|`` over the dense output."""
        g = compile_scalar(f)
        x, w = np.polynomial.legendre.leggauss(nodes)
        theta = 0.5 * (x + 1)
        out = np.empty(len(self.t) - 1)
        steps = self.h if self.h is not None else np.diff(self.t)
        for i in range(len(self.t) - 1):
            h = steps[i]
            zs = _dense_eval(np.broadcast_to(self.dense[i], (nodes, 5)), theta)
            integral = 0.5 * h * sum(wk * g(complex(zk)) for wk, zk in zip(w, zs))
            out[i] = abs(self.z[i + 1] - self.z[i] - integral)
        return out

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t", "re", "im"])
        for t, z in zip(self.t, self.z):
            w.writerow([repr(float(t)), repr(float(z.real)), repr(float(z.imag))])
        return buf.getvalue()

    def termination_json(self) -> str:
        return json.dumps(self.termination.to_dict())


def _dense_eval(r: np.ndarray, theta) -> np.ndarray:
    r = np.atleast_2d(r)
    theta = np.asarray(theta, dtype=float)
    t1 = 1.0 - theta
    return r[:, 0] + theta * (r[:, 1] + t1 * (r[:, 2] + theta * (r[:, 3] + t1 * r[:, 4])))


# ------------------------------------------------------------ the stepper

_C = (0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0)
_A = (
    (),
    (1 / 5,),
    (3 / 40, 9 / 40),
    (44 / 45, -56 / 15, 32 / 9),
    (19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729),
    (9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656),
    (35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84),
)
_E = (71 / 57600, 0.0, -71 / 16695, 71 / 1920, -17253 / 339200, 22 / 525, -1 / 40)
_D = (-12715105075 / 11282082432, 0.0, 87487479700 / 32700410799, -10690763975 / 1880347072,
      701980252875 / 199316789632, -1453857185 / 822651844, 69997945 / 29380423)


class _Stall(Exception):
    pass


@dataclass
class _Step:
    t0: float
    z0: complex
    t1: float
    z1: complex
    f1: complex
    rcont: tuple
    err: float
    h: float = 0.0


class _Stepper:
    """Dormand-Prince 5(4) on a scalar complex state, with FSAL."""

    def __init__(self, f, t0: float, z0: complex, f0: complex, ctl: IntegrationControls):
        self.f = f
        self.t = t0
        self.z = z0
        self.k1 = f0
        self.ctl = ctl
        self.h = min(1e-3 * max(abs(z0), 1.0) / abs(f0), ctl.max_time)
        self.steps = 0

    def cap(self) -> float:
        return 0.1 * max(abs(self.z), 1.0) / abs(self.k1)

    def advance(self, t_end: float) -> _Step:
        ctl = self.ctl
        h = min(self.h, self.cap())
        while True:
            if t_end - self.t <= h * (1 + 1e-12):
                h = t_end - self.t
            if h < ctl.min_step or self.t + h == self.t:
                raise _Stall()
            try:
                z1, k, err = self._try(h)
            except NonFiniteValue:
                h *= 0.25
                continue
            sc = ctl.atol + ctl.rtol * max(abs(self.z), abs(z1))
            q = err / sc
            if q <= 1.0:
                break
            h *= max(0.2, 0.9 * q ** -0.2)
        t0, z0 = self.t, self.z
        y1 = z1
        r2 = y1 - z0
        r3 = h * k[0] - r2
        r4 = r2 - h * k[6] - r3
        r5 = h * sum(d * kk for d, kk in zip(_D, k))
        self.t = t0 + h if h != t_end - t0 else t_end
        self.z = z1
        self.k1 = k[6]
        self.steps += 1
        fac = 10.0 if q == 0 else min(10.0, max(0.2, 0.9 * q ** -0.2))
        self.h = h * fac
        return _Step(t0, z0, self.t, z1, k[6], (z0, r2, r3, r4, r5), err, h)

    def _try(self, h):
        f, z = self.f, self.z
        k = [self.k1]
        for i in range(1, 7):
            a = _A[i]
            zi = z + h * sum(aj * kj for aj, kj in zip(a, k))
            k.append(f(zi))
        z1 = z + h * sum(aj * kj for aj, kj in zip(_A[6], k))
        # k[6] is f at z1 (row 7 of the tableau equals the 5th-order weights)
        err = abs(h * sum(e * kk for e, kk in zip(_E, k)))
        if not math.isfinite(err) or not math.isfinite(abs(z1)):
            raise NonFiniteValue("overflow")
        return z1, k, err


def _crossing_theta(rc, target, outward=True) -> float:
    """Parameter in [0, 1] where ``|z(theta)| - target`` changes sign."""
    def g(th):
        return abs(complex(_dense_eval(rc, th)[0])) - target
    return brentq(g, 0.0, 1.0, xtol=1e-15, rtol=4 * _EPS)


# ------------------------------------------------------------- integration

class _Run:
    """Shared state for one integration: samples, dense output, crossings."""

    def __init__(self, f: Expression, z0: complex, ctl: IntegrationControls, t0: float = 0.0):
        self.expr = f
        self.f = compile_scalar(f)
        self._df = None
        self.ctl = ctl
        self.z0 = z0
        self.t = [t0]
        self.z = [z0]
        self.dense: list = []
        self.steps: list = []
        self.crossings: list[float] = []
        self.time_error = 0.0
        self.radii = ctl.radii
        self.left_ball = False
        self.history: deque = deque(maxlen=12)

    @property
    def df(self):
        if self._df is None:
            self._df = compile_scalar(differentiate(self.expr))
        return self._df

    def record(self, st: _Step):
        self.t.append(st.t1)
        self.z.append(st.z1)
        self.dense.append(st.rcont)
        self.steps.append(st.h)
        self.time_error += st.err / max(abs(st.f1), 1e-300)
        self.history.append((st.t1, st.z1, abs(st.f1)))
        # upward radius crossings, in schedule order
        k = len(self.crossings)
        rc = np.array(st.rcont, dtype=complex)
        while k < len(self.radii) and abs(st.z1) >= self.radii[k] and abs(st.z0) < self.radii[k]:
            th = _crossing_theta(rc, self.radii[k])
            self.crossings.append(st.t0 + th * (st.t1 - st.t0))
            k += 1

    def trajectory(self, seed, term) -> Trajectory:
        dense = np.array(self.dense, dtype=complex).reshape(-1, 5)
        return Trajectory(seed, self.ctl, np.array(self.t), np.array(self.z, dtype=complex), term,
                          dense, list(self.crossings), self.time_error, np.array(self.steps, dtype=float))

    # -- classification helpers

    def converging(self) -> complex | None:
        """Extrapolated limit if recent positions converge geometrically, else None."""
        if len(self.history) < 8:
            return None
        zs = [h[1] for h in self.history]
        d = np.abs(np.diff(zs))
        if np.any(d == 0):
            return zs[-1]
        q = d[1:] / d[:-1]
        if not np.all(q[-5:] < 0.995):
            return None
        qm = float(np.max(q[-4:]))
        tail = (zs[-1] - zs[-2]) * qm / (1 - qm)
        if abs(tail) > 1e-3 * max(1.0, abs(zs[-1])):
            return None
        return zs[-1] + tail

    def growing(self) -> bool:
        if len(self.history) < 6:
            return False
        mods = [abs(h[1]) for h in self.history][-6:]
        fs = [h[2] for h in self.history][-6:]
        return all(b > a for a, b in zip(mods, mods[1:])) and fs[-1] > fs[0]

    def pole_termination(self, p: complex) -> ReachedPole:
        t_last, z_last, fz = self.history[-1]
        try:
            k, _ = local_order(self.expr, p)
            m = -k if k < 0 else None
        except InconclusiveOrder:
            m = None
        if m is None:
            (_, za, fa), (_, zb, fb) = self.history[0], self.history[-1]
            da, db = abs(za - p), abs(zb - p)
            m = max(1, int(round(math.log(fb / fa) / math.log(da / db)))) if da > db > 0 else 1
        remaining = abs(z_last - p) / (fz * (m + 1))
        return ReachedPole(complex(p), float(t_last + remaining), int(m))

    def escape_termination(self) -> EscapedFiniteTime | None:
        """Estimate from crossing times (Aitken) or the blowup at a stall."""
        t_last, z_last, fz = self.history[-1] if self.history else (self.t[-1], self.z[-1], abs(self.f(self.z[-1])))
        tail = abs(z_last) / fz
        c = self.crossings
        if len(c) >= 3:
            d1, d2 = c[-2] - c[-3], c[-1] - c[-2]
            T = c[-1] - d2 * d2 / (d2 - d1) if d2 != d1 else c[-1]
            unc = abs(d2)
        else:
            T = t_last + tail
            unc = tail
        if not T > t_last:
            T = t_last + max(tail, _EPS * abs(t_last))
        return EscapedFiniteTime(float(T), float(unc + self.time_error + _EPS * abs(T)))

    def crossings_diverge(self) -> bool:
        c = self.crossings
        if len(c) < 6:
            return False
        d = np.diff(c[-6:])
        return not np.all(d[1:] < d[:-1])

    def crossings_settled(self) -> bool:
        c = self.crossings
        if len(c) < 3:
            return False
        d1, d2 = c[-2] - c[-3], c[-1] - c[-2]
        return 0 < d2 < d1 and d2 <= self.ctl.rtol * max(1.0, abs(c[-1]))

    def equilibrium(self) -> complex | None:
        """Zero of f that the trajectory is demonstrably settling into."""
        if len(self.history) < 12:
            return None
        (_, za, fa), (_, zb, fb) = self.history[0], self.history[-1]
        if not fb < fa:
            return None
        p = zb
        try:
            for _ in range(80):
                d = self.df(p)
                if d == 0:
                    break
                step = self.f(p) / d
                p -= step
                if abs(step) <= 1e-15 * max(1.0, abs(p)):
                    break
            fp = abs(self.f(p))
            dp = self.df(p)
        except NonFiniteValue:
            return None
        if fp > 1e-12 * max(1.0, fa):
            return None
        da, db = abs(za - p), abs(zb - p)
        if db > 1e-2 * max(1.0, abs(p)):
            return None
        if abs(dp) > 1e-6:
            # simple zero: attracting iff Re f'(p) < 0
            return complex(p) if dp.real < -1e-8 * abs(dp) else None
        dists = [abs(h[1] - p) for h in self.history]
        return complex(p) if all(b < a for a, b in zip(dists, dists[1:])) else None

    def periodic(self, st: _Step) -> float | None:
        z0 = self.z0
        if not self.left_ball:
            if abs(st.z1 - z0) > 1e-3:
                self.left_ball = True
            return None
        tol = self.ctl.periodic_tol
        chord = abs(st.z1 - st.z0)
        if min(abs(st.z0 - z0), abs(st.z1 - z0)) > chord + 10 * tol:
            return None
        rc = np.array(st.rcont, dtype=complex)
        res = minimize_scalar(lambda th: abs(complex(_dense_eval(rc, th)[0]) - z0),
                              bounds=(0.0, 1.0), method="bounded", options={"xatol": 1e-12})
        if res.fun > tol:
            return None
        zc = complex(_dense_eval(rc, res.x)[0])
        f0 = self.f(z0)
        if (self.f(zc) * f0.conjugate()).real <= 0:
            return None
        return st.t0 + res.x * (st.t1 - st.t0)


def integrate(f: Expression, z0: complex, controls: IntegrationControls | None = None) -> Trajectory:
    """Integrate ``dz/dt = f(z)`` forward from ``z0`` and classify the outcome.

    Raises
    ------
    SeedRejected
        If ``f`` is not finite at ``z0``.
    """
    ctl = controls or IntegrationControls()
    z0 = complex(z0)
    run = _Run(f, z0, ctl)
    try:
        f0 = run.f(z0)
    except NonFiniteValue as exc:
        raise SeedRejected(f"f is not finite at the seed ({exc.reason})") from None
    if f0 == 0:
        return run.trajectory(z0, EquilibriumApproach(z0))
    term = _drive(run, _Stepper(run.f, 0.0, z0, f0, ctl))
    return run.trajectory(z0, term)


def _drive(run: _Run, stepper: _Stepper, escape_only: bool = False) -> Termination:
    ctl = run.ctl
    t_end = run.t[0] + ctl.max_time
    while True:
        if stepper.steps >= ctl.max_steps:
            return TimeBudgetExhausted("steps")
        try:
            st = stepper.advance(t_end)
        except _Stall:
            return _classify_stall(run)
        run.record(st)

        if run.crossings:
            if run.crossings_settled() or len(run.crossings) == len(run.radii):
                return run.escape_termination()
            if run.crossings_diverge():
                return TimeBudgetExhausted("no-finite-time-escape")
        if st.t1 >= t_end:
            return TimeBudgetExhausted("time")
        if escape_only:
            continue

        fa = run.history[0][2]
        if abs(st.f1) > fa:
            p = run.converging()
            if p is not None and abs(st.z1 - p) < ctl.pole_radius:
                return run.pole_termination(p)
        elif stepper.steps % 16 == 0:
            p = run.equilibrium()
            if p is not None:
                return EquilibriumApproach(p)
        period = run.periodic(st)
        if period is not None:
            return Periodic(float(period))


def _classify_stall(run: _Run) -> Termination:
    if len(run.history) >= 2:
        p = run.converging()
        if p is not None and run.history[-1][2] > run.history[0][2]:
            return run.pole_termination(p)
        if run.growing() or len(run.crossings) >= 3:
            return run.escape_termination()
    return StepUnderflow()


def escape_time(f: Expression, partial: Trajectory, controls: IntegrationControls | None = None) -> EscapeTime:
    """Extrapolate the escape time of a trajectory that has left the first escape radius.

    Integration resumes from the last sample of ``partial``; crossing times of
    ``|z| = R0 * 2**k`` are Aitken-extrapolated.  When the time axis stalls
    before three radii are crossed the uncertainty is infinite.  The time
    budget ``controls.max_time`` counts from the resume point.

    Raises
    ------
    NoFiniteTimeEscape
        If the crossing-time differences stop decreasing, or the budget runs
        out before the crossings settle.
    """
    ctl = controls or IntegrationControls()
    if abs(partial.z[-1]) < ctl.radii[0] and not np.any(np.abs(partial.z) >= ctl.radii[0]):
        raise ValueError("trajectory has not left the first escape radius")
    t_last, z_last = float(partial.t[-1]), complex(partial.z[-1])
    run = _Run(f, z_last, ctl, t0=t_last)
    # crossings already present in the partial trajectory
    for i in range(len(partial.t) - 1):
        st = _Step(partial.t[i], partial.z[i], partial.t[i + 1], partial.z[i + 1], 0j,
                   tuple(partial.dense[i]), 0.0)
        k = len(run.crossings)
        while k < len(run.radii) and abs(st.z1) >= run.radii[k] and abs(st.z0) < run.radii[k]:
            th = _crossing_theta(np.array(st.rcont), run.radii[k])
            run.crossings.append(st.t0 + th * (st.t1 - st.t0))
            k += 1
    run.time_error = partial.time_error
    f0 = run.f(z_last)
    run.history.append((t_last, z_last, abs(f0)))
    term = _drive(run, _Stepper(run.f, t_last, z_last, f0, ctl), escape_only=True)
    if isinstance(term, EscapedFiniteTime):
        if len(run.crossings) < 3:
            return EscapeTime(term.T_est, math.inf)
        return EscapeTime(term.T_est, term.uncertainty)
    if isinstance(term, TimeBudgetExhausted) and term.reason != "no-finite-time-escape":
        raise NoFiniteTimeEscape(run.crossings, f"{term.reason} budget exhausted before the crossings settled")
    raise NoFiniteTimeEscape(run.crossings)


# ------------------------------------------------------ zero approach check

@dataclass(frozen=True)
class ShellTransit:
    n: int
    t_enter: float  # |z - zero| = 2^-n
    t_exit: float   # |z - zero| = 2^-(n+1)
    bound: float

    @property
    def transit(self) -> float:
        return self.t_exit - self.t_enter

    @property
    def ok(self) -> bool:
        return self.transit >= self.bound


@dataclass(frozen=True)
class ZeroApproachReport:
    applicable: bool
    shells: list[ShellTransit]
    reason: str = ""

    @property
    def all_ok(self) -> bool:
        return self.applicable and all(s.ok for s in self.shells)


def zero_approach_bound_check(
    f: Expression,
    z0: complex,
    zero: complex,
    order: int,
    C: float,
    shells: tuple[int, int] = (3, 20),
    controls: IntegrationControls | None = None,
) -> ZeroApproachReport:
    """Time spent crossing each dyadic shell around a zero of order ``order``.

    Shell ``n`` is ``2^(-n-1) <= |z - zero| <= 2^(-n)``; its transit time must be
    at least ``2^((order-1) n - 1) / C`` whenever ``|f(z)| <= C |z - zero|^order``.
    """
    ctl = controls or IntegrationControls(max_time=math.inf)
    n_lo, n_hi = shells
    zero = complex(zero)
    g = compile_scalar(f)
    try:
        f0 = g(complex(z0))
    except NonFiniteValue as exc:
        raise SeedRejected(exc.reason) from None
    if f0 == 0:
        return ZeroApproachReport(False, [], "seed is an equilibrium")
    targets = [2.0 ** -n for n in range(n_lo, n_hi + 2)]
    if abs(complex(z0) - zero) <= targets[0]:
        return ZeroApproachReport(False, [], "seed already inside the outermost shell")
    hits: list[float] = []
    stepper = _Stepper(g, 0.0, complex(z0), f0, ctl)
    t_end = ctl.max_time
    d_prev = abs(complex(z0) - zero)
    while len(hits) < len(targets):
        if stepper.steps >= ctl.max_steps:
            return ZeroApproachReport(False, [], "step budget exhausted before the innermost shell")
        try:
            st = stepper.advance(t_end)
        except _Stall:
            return ZeroApproachReport(False, [], "integration stalled")
        d1 = abs(st.z1 - zero)
        rc = np.array(st.rcont, dtype=complex)
        while len(hits) < len(targets) and d1 <= targets[len(hits)] < d_prev:
            r = targets[len(hits)]
            th = brentq(lambda x: abs(complex(_dense_eval(rc, x)[0]) - zero) - r, 0.0, 1.0,
                        xtol=1e-15, rtol=4 * _EPS)
            hits.append(st.t0 + th * (st.t1 - st.t0))
        d_prev = d1
        if st.t1 >= t_end:
            return ZeroApproachReport(False, [], "trajectory does not approach the zero within the budget")
    out = [ShellTransit(n, hits[i], hits[i + 1], 2.0 ** ((order - 1) * n - 1) / C)
           for i, n in enumerate(range(n_lo, n_hi + 1))]
    return ZeroApproachReport(True, out)
