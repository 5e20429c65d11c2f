"""Wiman-Valiron tools: central index, maximum-modulus point, the power-law disc
and a numerical search for seeds that escape to infinity quickly.

Near a point ``z_r`` of maximum modulus on ``|z| = r`` an entire function of
central index ``N`` behaves like ``(z/z_r)**N f(z_r)``.  On that disc the flow
``z' = f(z)`` has an explicit time function ``F`` with ``|F| ~ |z/r|**(1-N) T_r``,
and the level set ``|F| = S_r`` carries points whose trajectories escape
within time ``P_r = 2 S_r``.
"""
from __future__ import annotations

import cmath
import json
import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np
from scipy.optimize import brentq, minimize_scalar

from .conformal import Arc, Line, PathBlocked, PathSpec
from .expr import Expression, NonFiniteValue, compile_numpy, compile_scalar, differentiate, format_complex
from .flow import EscapedFiniteTime, IntegrationControls, ReachedPole, SeedRejected, integrate
from .quadrature import QuadratureError, integrate_pieces

__all__ = [
    "CoefficientSeries", "TailNotDominated", "central_index", "max_modulus_point",
    "WvContext", "Deviation", "power_law_deviation", "Antiderivative", "build_F",
    "ScanAborted", "SeedResult", "EscapeScanReport", "escape_scan",
]

TIE_RTOL = 1e-12


class TailNotDominated(ValueError):
    """The last ten terms ``|b_k| r**k`` are not decreasing: ``K_max`` is too small."""


# ---------------------------------------------------------------- series

@dataclass(frozen=True)
class CoefficientSeries:
    """Maclaurin coefficients stored as ``log|b_k|`` (``-inf`` for zeros) and ``arg b_k``.

    Log storage keeps series such as ``1/k!`` usable far beyond the range of
    floats.  ``exact`` marks a finite list (a polynomial): no tail check is
    needed because every coefficient beyond ``k_max`` vanishes.
    """

    log_abs: np.ndarray
    phase: np.ndarray
    exact: bool = False

    def __post_init__(self):
        la = np.asarray(self.log_abs, dtype=float)
        ph = np.asarray(self.phase, dtype=float)
        if la.ndim != 1 or la.shape != ph.shape or la.size == 0:
            raise ValueError("log_abs and phase must be equal-length 1-d arrays")
        if not np.any(np.isfinite(la)):
            raise ValueError("at least one coefficient must be nonzero")
        object.__setattr__(self, "log_abs", la)
        object.__setattr__(self, "phase", ph)

    @property
    def k_max(self) -> int:
        return self.log_abs.size - 1

    @classmethod
    def from_coefficients(cls, coeffs: Sequence[complex], exact: bool = True) -> "CoefficientSeries":
        b = np.asarray(coeffs, dtype=complex)
        with np.errstate(divide="ignore"):
            return cls(np.log(np.abs(b)), np.angle(b), exact)

    @classmethod
    def from_rule(cls, rule: Callable[[int], complex], k_max: int) -> "CoefficientSeries":
        return cls.from_coefficients([rule(k) for k in range(k_max + 1)], exact=False)

    @classmethod
    def from_log_rule(cls, log_abs: Callable[[int], float], k_max: int,
                      phase: Callable[[int], float] = lambda k: 0.0) -> "CoefficientSeries":
        ks = range(k_max + 1)
        return cls(np.array([log_abs(k) for k in ks]), np.array([phase(k) for k in ks]))

    @classmethod
    def exp(cls, k_max: int = 1024) -> "CoefficientSeries":
        """``b_k = 1/k!``."""
        return cls.from_log_rule(lambda k: -math.lgamma(k + 1), k_max)

    @classmethod
    def from_function(cls, f: Expression, r: float, max_samples: int = 1 << 16) -> "CoefficientSeries":
        """Coefficients of an entire ``f`` by FFT of its values on ``|z| = r``.

        The sample count doubles until the middle of the spectrum is at
        roundoff level; coefficients below ``1e-14`` of the largest sample are
        set to zero and the result is marked exact.
        """
        fn = compile_numpy(f)
        n = 256
        while True:
            theta = 2 * np.pi * np.arange(n) / n
            vals = fn(r * np.exp(1j * theta))
            if not np.all(np.isfinite(vals)):
                raise ValueError(f"f is not finite on |z| = {r}")
            c = np.fft.fft(vals) / n
            top = np.max(np.abs(vals))
            if top == 0:
                raise ValueError("f vanishes identically on the circle")
            floor = 1e-14 * top  # FFT roundoff is relative to the largest sample
            if np.all(np.abs(c[3 * n // 8: 5 * n // 8]) <= floor):
                break
            if n >= max_samples:
                raise ValueError(f"coefficients do not decay within {max_samples} samples at r = {r}")
            n *= 2
        if np.max(np.abs(c[n // 2:])) > 1e-8 * top:
            raise ValueError("f has negative-power terms on the circle; it is not entire there")
        c = c[: n // 2]
        c = np.where(np.abs(c) <= floor, 0, c)
        last = int(np.max(np.nonzero(c)[0]))
        c = c[: last + 1]
        with np.errstate(divide="ignore"):
            la = np.log(np.abs(c)) - np.arange(c.size) * math.log(r)
        return cls(la, np.angle(c), exact=True)

    def log_terms(self, r: float) -> np.ndarray:
        """``log(|b_k| r**k)`` for ``k = 0..k_max``."""
        return self.log_abs + np.arange(self.log_abs.size) * math.log(r)

    def check_tail(self, r: float) -> None:
        if self.exact:
            return
        tail = self.log_terms(r)[-11:]
        if tail.size < 11 or not np.all(np.diff(tail) < 0):
            raise TailNotDominated(f"terms are not decreasing over the last 10 indices at r = {r}; "
                                   f"raise k_max (now {self.k_max})")


def central_index(series: CoefficientSeries, r: float) -> int:
    """Largest ``n`` with ``|b_n| r**n = max_k |b_k| r**k``.

    Terms within a relative ``1e-12`` of the maximum (compared in log space)
    count as tied; the larger index wins.
    """
    if not r > 0:
        raise ValueError("r must be positive")
    series.check_tail(r)
    t = series.log_terms(r)
    m = np.max(t)
    tied = np.nonzero(t >= m - TIE_RTOL * max(1.0, abs(m)))[0]
    return int(tied[-1])


def max_modulus_point(f: Expression, r: float, samples: int = 4096) -> complex:
    """A point ``z_r`` on ``|z| = r`` where ``|f|`` is largest.

    A scan of ``samples`` equally spaced angles is refined by bounded Brent
    minimisation of ``-log|f|``.  Function values only pin a smooth maximum down
    to about ``sqrt(eps)``, so the angle is then polished to ``1e-13`` as a root
    of ``d/dtheta log|f| = -Im(z f'/f)``.  The refined angle replaces the grid
    angle only if it is not worse.  When ``|f|`` is constant on the circle the
    answer is ``theta = 0``.
    """
    fn = compile_numpy(f)
    theta = 2 * np.pi * np.arange(samples) / samples
    with np.errstate(all="ignore"):
        mod = np.abs(fn(r * np.exp(1j * theta)))
    if not np.all(np.isfinite(mod)):
        raise ValueError(f"f is not finite on |z| = {r}")
    top = float(np.max(mod))
    if top - float(np.min(mod)) <= 1e-12 * top:
        return complex(r, 0.0)
    j = int(np.argmax(mod))
    g = compile_scalar(f)

    def neg_log(th: float) -> float:
        try:
            return -math.log(abs(g(r * cmath.exp(1j * th))))
        except (NonFiniteValue, ValueError):
            return math.inf

    step = 2 * np.pi / samples
    best = minimize_scalar(neg_log, bounds=(theta[j] - step, theta[j] + step), method="bounded",
                           options={"xatol": 1e-12})
    th = float(best.x) if best.fun < neg_log(theta[j]) else float(theta[j])
    th = _polish_angle(f, r, th, step)
    th = (th + math.pi) % (2 * math.pi) - math.pi
    if th == 0.0:
        return complex(r, 0.0)
    return r * cmath.exp(1j * th)


def _polish_angle(f: Expression, r: float, th: float, step: float) -> float:
    g = compile_scalar(f)
    dg = compile_scalar(differentiate(f))

    def slope(x: float) -> float:
        z = r * cmath.exp(1j * x)
        return -(z * dg(z) / g(z)).imag

    try:
        if slope(th) == 0:
            return th
        for width in (1e-7, 1e-5, step):
            a, b = th - width, th + width
            if slope(a) > 0 > slope(b):  # a maximum, not a minimum, lies between
                return brentq(slope, a, b, xtol=1e-13)
    except (NonFiniteValue, ZeroDivisionError):
        pass
    return th


# --------------------------------------------------------------- context

@dataclass(frozen=True)
class WvContext:
    """One radius with its max-modulus point, central index and derived scales."""

    r: float
    z_r: complex
    N: int
    A_r: complex
    L: float = 8.0

    def __post_init__(self):
        if self.N < 2:
            raise ValueError(f"central index {self.N} < 2: the scales need N >= 2")
        if not (cmath.isfinite(self.A_r) and self.A_r != 0):
            raise ValueError("1/f(z_r) must be finite and nonzero")

    @classmethod
    def build(cls, f: Expression, r: float, series: CoefficientSeries | None = None,
              L: float = 8.0) -> "WvContext":
        z_r = max_modulus_point(f, r)
        N = central_index(series if series is not None else CoefficientSeries.from_function(f, r), r)
        try:
            A = 1 / compile_scalar(f)(z_r)
        except (NonFiniteValue, ZeroDivisionError) as exc:
            raise ValueError(f"f(z_r) unusable: {exc}") from None
        return cls(float(r), complex(z_r), int(N), complex(A), float(L))

    @property
    def T_r(self) -> float:
        return self.r * abs(self.A_r) / (self.N - 1)

    @property
    def S_r(self) -> float:
        return self.T_r * math.exp(-self.N ** 0.25)

    @property
    def P_r(self) -> float:
        return 2 * self.S_r

    @property
    def Q(self) -> int:
        return int(math.floor(2 * self.N ** 0.25))

    @property
    def half_width(self) -> float:
        """``N**(-5/8)``: the disc ``D(z_r, L)`` has half-width ``L`` times this in ``log z``."""
        return self.N ** -0.625

    @property
    def w_r(self) -> complex:
        return self.z_r * math.exp(4 * self.half_width)

    def tau(self, z):
        """``log(z/z_r)`` on the branch vanishing at ``z_r``."""
        return np.log(np.asarray(z) / self.z_r)

    def disc_level(self, z) -> np.ndarray:
        """Smallest ``L`` with ``z`` in ``D(z_r, L)``."""
        t = self.tau(z)
        return np.maximum(np.abs(t.real), np.abs(t.imag)) / self.half_width

    def disc_grid(self, L: float, grid: int) -> np.ndarray:
        u = np.linspace(-L * self.half_width, L * self.half_width, grid)
        tau = u[None, :] + 1j * u[:, None]
        return self.z_r * np.exp(tau)

    def to_dict(self) -> dict:
        return {"r": self.r, "N": self.N, "z_r": format_complex(self.z_r), "A_r": format_complex(self.A_r),
                "T_r": self.T_r, "S_r": self.S_r, "P_r": self.P_r, "Q": self.Q, "L": self.L}


class Deviation(float):
    """A float carrying the grid nodes that had to be skipped."""

    skipped: tuple

    def __new__(cls, value: float, skipped: Iterable[complex] = ()):
        obj = super().__new__(cls, value)
        obj.skipped = tuple(skipped)
        return obj


def power_law_deviation(f: Expression, ctx: WvContext, grid: int = 32, L: float | None = None) -> Deviation:
    """``max |f(z) / ((z/z_r)**N f(z_r)) - 1|`` over a ``grid x grid`` mesh of ``D(z_r, L)``.

    The comparison is done on logarithms, ``log(f(z)/f(z_r)) - N log(z/z_r)``,
    so large ``N`` cannot overflow the power.  Nodes where ``f`` is zero or not
    finite are skipped and listed on the result.
    """
    if grid < 8:
        raise ValueError("grid must be at least 8")
    L = ctx.L if L is None else L
    z = ctx.disc_grid(L, grid).ravel()
    fn = compile_numpy(f)
    with np.errstate(all="ignore"):
        q = fn(z) / fn(np.array([ctx.z_r]))[0]
        bad = ~np.isfinite(q) | (q == 0)
        d = np.log(np.where(bad, 1, q)) - ctx.N * ctx.tau(z)
    d = d.real + 1j * ((d.imag + np.pi) % (2 * np.pi) - np.pi)
    with np.errstate(over="ignore"):
        dev = np.abs(np.expm1(d[~bad]))
    value = float(np.max(dev)) if dev.size else math.nan
    return Deviation(value, (complex(v) for v in z[bad]))


# ----------------------------------------------------------- antiderivative

class Antiderivative:
    """``F(z) = w_r A(w_r)/(1-N) + integral of 1/f from w_r to z``.

    The path runs radially from ``w_r`` to ``|z|`` and then along the shorter
    arc of that circle to ``z``.  Arrays of points are integrated together.
    """

    def __init__(self, f: Expression, ctx: WvContext, epsrel: float = 1e-13):
        self.f = f
        self.ctx = ctx
        self.epsrel = epsrel
        self._fn = compile_numpy(f)
        w = ctx.w_r
        try:
            self.constant = w / compile_scalar(f)(w) / (1 - ctx.N)
        except NonFiniteValue as exc:
            raise PathBlocked(f"f unusable at w_r ({exc})", w) from None

    def path(self, z: complex) -> PathSpec:
        w = self.ctx.w_r
        rad = abs(z)
        th0 = cmath.phase(w)
        th1 = th0 + (cmath.phase(z / w))
        return PathSpec((Line(w, rad * cmath.exp(1j * th0)), Arc(0j, rad, th0, th1)))

    def __call__(self, z):
        zs = np.atleast_1d(np.asarray(z, dtype=complex))
        w = self.ctx.w_r
        th0 = cmath.phase(w)
        rad = np.abs(zs)
        dth = np.angle(zs / w)
        hat = rad * np.exp(1j * th0)

        def integrand(idx, s):
            k = idx // 2
            arc = (idx % 2) == 1
            th = th0 + dth[k] * s
            zz = np.where(arc, rad[k] * np.exp(1j * th), w + (hat[k] - w) * s)
            dz = np.where(arc, 1j * rad[k] * dth[k] * np.exp(1j * th), hat[k] - w)
            with np.errstate(all="ignore"):
                return dz / self._fn(zz)

        try:
            res = integrate_pieces(integrand, 2 * zs.size, epsrel=self.epsrel)
        except QuadratureError as exc:
            raise PathBlocked(f"zero or pole of f on the integration path ({exc})",
                              complex(zs[exc.piece // 2])) from None
        vals = self.constant + res.by_piece[0::2] + res.by_piece[1::2]
        return complex(vals[0]) if np.ndim(z) == 0 else vals.reshape(np.shape(z))


def build_F(f: Expression, ctx: WvContext) -> Antiderivative:
    """The time function of the flow on the power-law disc; raises PathBlocked at zeros of f."""
    F = Antiderivative(f, ctx)
    probe = ctx.disc_grid(4.0, 9).ravel()
    with np.errstate(all="ignore"):
        v = compile_numpy(f)(probe)
    if np.any(~np.isfinite(v) | (v == 0)):
        raise PathBlocked("zero or pole of f on D(z_r, 4)", complex(probe[np.argmax(~np.isfinite(v) | (v == 0))]))
    return F


# ------------------------------------------------------------------ scan

class ScanAborted(RuntimeError):
    pass


@dataclass(frozen=True)
class SeedResult:
    y: complex
    T: float | None
    uncertainty: float | None
    outcome: str
    passed: bool
    disc_level: float

    def to_dict(self) -> dict:
        return {"y": format_complex(self.y), "T": self.T, "uncertainty": self.uncertainty,
                "outcome": self.outcome, "pass": self.passed}


def _finite_or_none(x):
    return float(x) if x is not None and math.isfinite(x) else None


@dataclass(frozen=True)
class EscapeScanReport:
    context: WvContext
    seeds: tuple
    min_separation: float | None
    disjoint: bool
    gate_deviation: float
    locus: np.ndarray = field(repr=False, compare=False)

    @property
    def count(self) -> int:
        return sum(s.passed for s in self.seeds)

    @property
    def required(self) -> int:
        return math.ceil(self.context.N ** 0.25)

    def to_dict(self) -> dict:
        c = self.context
        return {"r": c.r, "N": c.N, "z_r": format_complex(c.z_r), "T_r": c.T_r, "S_r": c.S_r,
                "P_r": c.P_r, "Q": c.Q, "seeds": [s.to_dict() for s in self.seeds], "count": self.count,
                "min_separation": _finite_or_none(self.min_separation), "disjoint": self.disjoint,
                "gate_deviation": _finite_or_none(self.gate_deviation)}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


_GL_X, _GL_W = np.polynomial.legendre.leggauss(10)


def _trace_locus(f: Expression, ctx: WvContext, F: Antiderivative, window: float, max_nodes: int):
    """Nodes ``z`` with ``|F(z)| = S_r`` inside ``D(z_r, window)``, with their ``F`` values."""
    g = compile_scalar(f)
    fn = compile_numpy(f)
    logS = math.log(ctx.S_r)
    h = ctx.half_width

    def chord(a, b):
        zz = a + (b - a) * 0.5 * (_GL_X + 1)
        return 0.5 * (b - a) * np.sum(_GL_W / fn(zz))

    def gap(s):
        return math.log(abs(F(ctx.z_r * math.exp(s)))) - logS

    lo, hi = -window * h, window * h
    try:
        s0 = brentq(gap, lo, hi, xtol=1e-15, rtol=1e-14)
    except ValueError:
        raise ScanAborted(f"|F| = S_r is not crossed on the radial segment of D(z_r, {window})") from None
    z0 = ctx.z_r * math.exp(s0)
    F0 = F(z0)
    step = 1e-2 * ctx.r * h

    branches = []
    for orient in (1, -1):
        zs, Fs = [], []
        z, Fz = z0, F0
        for _ in range(max_nodes):
            grad = 1 / (g(z) * Fz)  # d log F / dz
            zp = z + orient * step * 1j * grad.conjugate() / abs(grad)
            Fp = Fz + chord(z, zp)
            for _newton in range(2):
                gp = 1 / (g(zp) * Fp)
                delta = (logS - math.log(abs(Fp))) / abs(gp)
                zn = zp + delta * gp.conjugate() / abs(gp)
                Fp = Fp + chord(zp, zn)
                zp = zn
            if ctx.disc_level(zp) > window:
                break
            if len(zs) > 10 and abs(zp - z0) < 0.5 * step:
                break  # closed loop
            z, Fz = zp, Fp
            zs.append(z)
            Fs.append(Fz)
        else:
            raise ScanAborted(f"locus tracing exceeded {max_nodes} nodes")
        branches.append((zs, Fs))
    (fz, fF), (bz, bF) = branches
    nodes = np.array(bz[::-1] + [z0] + fz, dtype=complex)
    values = np.array(bF[::-1] + [F0] + fF, dtype=complex)
    return nodes, values, step


def _refine_seed(f: Expression, F: Antiderivative, z: complex, target: float) -> complex:
    g = compile_scalar(f)
    for _ in range(30):
        err = F(z) - target
        dz = -err * g(z)
        z = z + dz
        if abs(err) <= 1e-13 * abs(target):
            break
    return z


def _run_seed(args):
    f, y, controls = args
    try:
        return integrate(f, y, controls)
    except SeedRejected:
        return None


def escape_scan(
    f: Expression,
    ctx: WvContext,
    controls: IntegrationControls | None = None,
    window: float = 2.0,
    map_fn: Callable = map,
    max_nodes: int = 100_000,
    gate_grid: int = 32,
) -> EscapeScanReport:
    """Seeds on ``|F| = S_r`` with ``F`` real negative, each integrated and checked against ``P_r``.

    The locus is followed through ``D(z_r, window)`` starting from its crossing
    of the radial segment through ``z_r``.  Points where ``Im F`` changes sign
    with ``Re F < 0`` are polished by Newton's method on ``F(z) = -S_r``.  A
    seed passes when its trajectory escapes (or reaches a pole) within ``P_r``.

    ``map_fn`` is used for the seed integrations; pass an executor's ``map``
    to run them concurrently.  Seeds stay ordered along the locus.
    """
    controls = controls or IntegrationControls()
    F = build_F(f, ctx)
    nodes, values, step = _trace_locus(f, ctx, F, window, max_nodes)

    seeds = []
    im = values.imag
    for k in range(len(nodes) - 1):
        if values[k].real < 0 and values[k + 1].real < 0 and (im[k] == 0 or im[k] * im[k + 1] < 0):
            w = im[k] / (im[k] - im[k + 1]) if im[k] != im[k + 1] else 0.0
            y = _refine_seed(f, F, nodes[k] + w * (nodes[k + 1] - nodes[k]), -ctx.S_r)
            if ctx.disc_level(y) <= window and all(abs(y - s) > 10 * step for s in seeds):
                seeds.append(complex(y))

    trajs = list(map_fn(_run_seed, [(f, y, controls) for y in seeds]))
    results = []
    for y, tr in zip(seeds, trajs):
        term = tr.termination if tr is not None else None
        T = unc = None
        if isinstance(term, EscapedFiniteTime):
            T, unc = term.T_est, term.uncertainty
        elif isinstance(term, ReachedPole):
            T, unc = term.T, 0.0
        passed = T is not None and 0 < T <= ctx.P_r
        results.append(SeedResult(y, _finite_or_none(T), _finite_or_none(unc),
                                  term.kind if term is not None else "SeedRejected", passed,
                                  float(ctx.disc_level(y))))

    sep = min((abs(a - b) for i, a in enumerate(seeds) for b in seeds[i + 1:]), default=None)
    disjoint = _trajectories_disjoint([(r, t) for r, t in zip(results, trajs) if r.passed])
    try:
        dev = float(power_law_deviation(f, ctx, gate_grid))
    except (ValueError, OverflowError):
        dev = math.nan
    return EscapeScanReport(ctx, tuple(results), sep, disjoint, dev, nodes)


def _trajectories_disjoint(pairs) -> bool:
    """Trajectories compared at equal elapsed time (equal ``F`` level) never coincide."""
    for i, (ri, ti) in enumerate(pairs):
        for rj, tj in pairs[i + 1:]:
            s = np.linspace(0.0, 0.9, 32) * min(ri.T, rj.T)
            s = s[(s <= ti.t[-1]) & (s <= tj.t[-1])]
            if np.any(np.abs(ti.at(s) - tj.at(s)) == 0):
                return False
    return True
