"""``meroflow`` command line.

Exit codes: 0 success, 1 expression parse error, 2 invalid seed or input,
3 obstructed path, 4 failed gate.
"""
from __future__ import annotations

import csv
import io
import json
import math
import os
import sys
import xml.etree.ElementTree as ET
from concurrent.futures import ThreadPoolExecutor
from contextlib import contextmanager

import click
import numpy as np

from .conformal import CaptureFailed, NotAPole, PathBlocked, PathSpec, pole_incoming_directions, travel_time
from .expr import Add, Const, Expression, ExprSyntaxError, Mul, Pow, Var, format_complex, parse, parse_complex
from .flow import IntegrationControls, SeedRejected, integrate
from .wv import (
    CoefficientSeries, ScanAborted, TailNotDominated, WvContext, escape_scan, power_law_deviation,
)

EXIT_PARSE, EXIT_SEED, EXIT_PATH, EXIT_GATE = 1, 2, 3, 4
SVG_MAX_POINTS = 4096
KIND_COLORS = {
    "EscapedFiniteTime": "#d62728",
    "ReachedPole": "#9467bd",
    "EquilibriumApproach": "#2ca02c",
    "Periodic": "#1f77b4",
    "TimeBudgetExhausted": "#7f7f7f",
    "StepUnderflow": "#ff7f0e",
    "SeedRejected": "#000000",
}


class ComplexType(click.ParamType):
    name = "a+bi"

    def convert(self, value, param, ctx):
        if isinstance(value, complex):
            return value
        try:
            return parse_complex(str(value))
        except ValueError as exc:
            self.fail(str(exc), param, ctx)


COMPLEX = ComplexType()


class Fail(Exception):
    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


def read_config(path: str) -> dict:
    """Flat ``key = value`` file; ``#`` starts a comment, keys may use ``-`` or ``_``."""
    out = {}
    with open(path, encoding="utf-8") as fh:
        for n, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise click.BadParameter(f"{path}:{n}: expected key = value")
            k, v = (s.strip() for s in line.split("=", 1))
            out[k.replace("-", "_")] = v
    return out


def _load_config(ctx, param, value):
    if value:
        cfg = read_config(value)
        ctx.default_map = {name: cfg for name in ctx.command.commands}
    return value


def parse_function(text: str) -> Expression:
    try:
        return parse(text)
    except ExprSyntaxError as exc:
        raise Fail(EXIT_PARSE, f"parse error at offset {exc.offset}: {exc}") from None


def thread_count(flag: int | None) -> int:
    if flag:
        return max(1, flag)
    env = os.environ.get("MEROFLOW_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise click.BadParameter(f"MEROFLOW_THREADS={env!r} is not an integer") from None
    return os.cpu_count() or 1


@contextmanager
def pool(threads: int):
    if threads <= 1:
        yield map
    else:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            yield ex.map  # results come back in submission order


def controls_options(fn):
    opts = [
        click.option("--rtol", type=float, default=None, help="Relative tolerance."),
        click.option("--atol", type=float, default=None, help="Absolute tolerance."),
        click.option("--max-time", type=float, default=None, help="Time budget."),
        click.option("--max-steps", type=int, default=None, help="Step budget."),
        click.option("--escape-radius", type=float, default=None, help="First escape radius R0."),
    ]
    for o in reversed(opts):
        fn = o(fn)
    return fn


def make_controls(rtol, atol, max_time, max_steps, escape_radius) -> IntegrationControls:
    given = {k: v for k, v in dict(rtol=rtol, atol=atol, max_time=max_time, max_steps=max_steps,
                                   escape_radius=escape_radius).items() if v is not None}
    try:
        return IntegrationControls().replace(**given)
    except ValueError as exc:
        raise click.BadParameter(str(exc)) from None


def emit(obj, path: str | None = None) -> None:
    text = json.dumps(obj, indent=2)
    click.echo(text)
    if path:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text + "\n")


class _Group(click.Group):
    def invoke(self, ctx):
        try:
            return super().invoke(ctx)
        except Fail as exc:
            click.echo(f"error: {exc}", err=True)
            ctx.exit(exc.code)


@click.group(cls=_Group)
@click.option("--config", type=click.Path(exists=True, dir_okay=False), callback=_load_config,
              is_eager=True, expose_value=False, help="Flat key = value file; flags override it.")
def main():
    """Integrate and analyse the complex flow z' = f(z)."""


# ------------------------------------------------------------------ flow

@main.command("flow")
@click.option("-f", "--function", "function", required=True, help="Expression in z.")
@click.option("--z0", type=COMPLEX, required=True, help="Seed, e.g. 1+2i.")
@click.option("--csv", "csv_path", type=click.Path(dir_okay=False), help="Write samples t,re,im here.")
@click.option("--json", "json_path", type=click.Path(dir_okay=False), help="Write the termination JSON here.")
@controls_options
def cmd_flow(function, z0, csv_path, json_path, **ctl):
    """Integrate one trajectory and classify how it ends."""
    f = parse_function(function)
    try:
        tr = integrate(f, z0, make_controls(**ctl))
    except SeedRejected as exc:
        raise Fail(EXIT_SEED, f"rejected seed {format_complex(z0)}: {exc}") from None
    if csv_path:
        with open(csv_path, "w", encoding="utf-8", newline="") as fh:
            fh.write(tr.to_csv())
    emit(tr.termination.to_dict(), json_path)


# -------------------------------------------------------------- portrait

def _run_seed(args):
    f, z0, controls = args
    try:
        return integrate(f, z0, controls)
    except SeedRejected:
        return None


def _fmt(x) -> str:
    return "" if x is None else repr(float(x))


def summary_csv(seeds, trajs) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["re0", "im0", "kind", "T_est", "uncertainty"])
    for z0, tr in zip(seeds, trajs):
        if tr is None:
            w.writerow([repr(z0.real), repr(z0.imag), "SeedRejected", "", ""])
            continue
        term = tr.termination
        T = getattr(term, "T_est", getattr(term, "T", None))
        w.writerow([repr(z0.real), repr(z0.imag), term.kind, _fmt(T), _fmt(getattr(term, "uncertainty", None))])
    return buf.getvalue()


def decimate(z: np.ndarray, limit: int = SVG_MAX_POINTS) -> np.ndarray:
    if len(z) <= limit:
        return z
    idx = np.unique(np.linspace(0, len(z) - 1, limit).round().astype(int))
    return z[idx]


def portrait_svg(box, seeds, trajs, width: int = 800) -> str:
    re0, re1, im0, im1 = box
    span = max(re1 - re0, im1 - im0) or 1.0
    pad = 0.05 * span
    vb = (re0 - pad, -(im1 + pad), re1 - re0 + 2 * pad, im1 - im0 + 2 * pad)
    svg = ET.Element("svg", xmlns="http://www.w3.org/2000/svg", version="1.1",
                     width=str(width), height=str(int(width * vb[3] / vb[2]) if vb[2] else width),
                     viewBox=" ".join(f"{v:.6g}" for v in vb))
    defs = ET.SubElement(svg, "defs")
    clip = ET.SubElement(defs, "clipPath", id="view")
    ET.SubElement(clip, "rect", x=f"{vb[0]:.6g}", y=f"{vb[1]:.6g}", width=f"{vb[2]:.6g}", height=f"{vb[3]:.6g}")
    g = ET.SubElement(svg, "g", {"clip-path": "url(#view)", "fill": "none",
                                 "stroke-width": f"{span / 400:.4g}"})
    lim = 10 * span + abs(re0) + abs(re1) + abs(im0) + abs(im1)
    for z0, tr in zip(seeds, trajs):
        kind = tr.termination.kind if tr is not None else "SeedRejected"
        color = KIND_COLORS[kind]
        if tr is None or len(tr.z) < 2:
            ET.SubElement(g, "circle", cx=f"{z0.real:.6g}", cy=f"{-z0.imag:.6g}", r=f"{span / 200:.4g}", fill=color)
            continue
        z = tr.z[np.abs(tr.z) < lim]
        z = decimate(z)
        pts = " ".join(f"{p.real:.6g},{-p.imag:.6g}" for p in z)
        ET.SubElement(g, "polyline", points=pts, stroke=color)
    return ET.tostring(svg, encoding="unicode", xml_declaration=False)


def grid_seeds(re_min, re_max, im_min, im_max, nx, ny, jitter: float, seed: int) -> list[complex]:
    if nx == 0 or ny == 0:
        return []
    xs = np.linspace(re_min, re_max, nx)
    ys = np.linspace(im_min, im_max, ny)
    pts = (xs[None, :] + 1j * ys[:, None]).ravel()
    if jitter:
        rng = np.random.default_rng(seed)
        dx = (re_max - re_min) / max(nx - 1, 1)
        dy = (im_max - im_min) / max(ny - 1, 1)
        pts = pts + jitter * (dx * rng.uniform(-0.5, 0.5, pts.size) + 1j * dy * rng.uniform(-0.5, 0.5, pts.size))
    return [complex(p) for p in pts]


@main.command("portrait")
@click.option("-f", "--function", "function", required=True)
@click.option("--re-min", type=float, default=-2.0)
@click.option("--re-max", type=float, default=2.0)
@click.option("--im-min", type=float, default=-2.0)
@click.option("--im-max", type=float, default=2.0)
@click.option("--nx", type=click.IntRange(0, 512), default=21)
@click.option("--ny", type=click.IntRange(0, 512), default=21)
@click.option("--jitter", type=click.FloatRange(0, 1), default=0.0, help="Random offset as a fraction of the cell.")
@click.option("--seed", type=int, default=0, help="RNG seed for the jitter.")
@click.option("--csv", "csv_path", type=click.Path(dir_okay=False), default="portrait.csv")
@click.option("--svg", "svg_path", type=click.Path(dir_okay=False), default="portrait.svg")
@click.option("--threads", type=int, default=None)
@controls_options
def cmd_portrait(function, re_min, re_max, im_min, im_max, nx, ny, jitter, seed, csv_path, svg_path, threads, **ctl):
    """Integrate a grid of seeds; write a summary CSV and an SVG."""
    f = parse_function(function)
    controls = make_controls(**ctl)
    seeds = grid_seeds(re_min, re_max, im_min, im_max, nx, ny, jitter, seed)
    with pool(thread_count(threads)) as mapper:
        trajs = list(mapper(_run_seed, [(f, z0, controls) for z0 in seeds]))
    with open(csv_path, "w", encoding="utf-8", newline="") as fh:
        fh.write(summary_csv(seeds, trajs))
    with open(svg_path, "w", encoding="utf-8") as fh:
        fh.write(portrait_svg((re_min, re_max, im_min, im_max), seeds, trajs))
    counts: dict[str, int] = {}
    for tr in trajs:
        k = tr.termination.kind if tr is not None else "SeedRejected"
        counts[k] = counts.get(k, 0) + 1
    emit({"seeds": len(seeds), "kinds": dict(sorted(counts.items())), "csv": csv_path, "svg": svg_path})


# ------------------------------------------------------------------ time

@main.command("time")
@click.option("-f", "--function", "function", required=True)
@click.option("--w0", type=COMPLEX, required=True)
@click.option("--w1", type=COMPLEX, required=True)
@click.option("--via", default="", help="Comma-separated waypoints, e.g. 1+1i,0+1i.")
@click.option("--path", "path_file", type=click.Path(exists=True, dir_okay=False), help="PathSpec JSON file.")
def cmd_time(function, w0, w1, via, path_file):
    """Complex travel time: the integral of 1/f from w0 to w1."""
    f = parse_function(function)
    if path_file:
        with open(path_file, encoding="utf-8") as fh:
            try:
                hint = PathSpec.from_json(fh.read())
            except (ValueError, KeyError, TypeError) as exc:
                raise Fail(EXIT_SEED, f"malformed path file: {exc!r}") from None
    else:
        hint = [COMPLEX.convert(p, None, None) for p in via.split(",") if p.strip()]
    try:
        T = travel_time(f, w0, w1, hint)
    except PathBlocked as exc:
        raise Fail(EXIT_PATH, f"path obstructed at {format_complex(exc.location)}") from None
    except ValueError as exc:
        raise Fail(EXIT_SEED, str(exc)) from None
    emit({"w0": format_complex(w0), "w1": format_complex(w1), "time": format_complex(T)})


# ----------------------------------------------------------------- poles

@main.command("poles")
@click.option("-f", "--function", "function", required=True)
@click.option("--at", "z1", type=COMPLEX, required=True, help="Location of the pole.")
def cmd_poles(function, z1):
    """Order, leading coefficient and incoming directions at a pole."""
    f = parse_function(function)
    try:
        data = pole_incoming_directions(f, z1)
    except NotAPole as exc:
        raise Fail(EXIT_SEED, str(exc)) from None
    emit(data.to_dict())
    if not all(data.verified):
        raise Fail(EXIT_GATE, "some directions failed the capture check")


# -------------------------------------------------------------------- wv

def series_expression(coeffs) -> Expression:
    e: Expression | None = None
    for k, b in enumerate(coeffs):
        if b == 0:
            continue
        term = Const(complex(b)) if k == 0 else Mul(Const(complex(b)), Pow(Var(), k))
        e = term if e is None else Add(e, term)
    if e is None:
        raise click.BadParameter("all coefficients are zero")
    return e


def _function_and_series(function, series):
    if series is None:
        if function is None:
            raise click.UsageError("give --function or --series")
        return parse_function(function), None
    if series.strip().lower() == "exp":
        return (parse_function(function) if function else parse("exp(z)")), CoefficientSeries.exp()
    coeffs = [COMPLEX.convert(c, None, None) for c in series.split(",")]
    s = CoefficientSeries.from_coefficients(coeffs)
    return (parse_function(function) if function else series_expression(coeffs)), s


@main.command("wv")
@click.option("-f", "--function", "function", default=None)
@click.option("--series", default=None, help="'exp' or comma-separated coefficients b_0,b_1,...")
@click.option("-r", "--radius", "r", type=click.FloatRange(min=0, min_open=True), required=True)
@click.option("-L", "--disc", "L", type=click.FloatRange(min=0), default=8.0, help="Disc parameter L.")
@click.option("--grid", type=click.IntRange(min=8), default=32)
@click.option("--max-deviation", type=float, default=None, help="Gate on the power-law deviation.")
def cmd_wv(function, series, r, L, grid, max_deviation):
    """Central index, max-modulus point, scales and power-law deviation at radius r."""
    f, s = _function_and_series(function, series)
    try:
        ctx = WvContext.build(f, r, s, L)
    except (TailNotDominated, ValueError) as exc:
        raise Fail(EXIT_SEED, str(exc)) from None
    dev = float(power_law_deviation(f, ctx, grid))
    out = ctx.to_dict()
    out["deviation"] = dev if math.isfinite(dev) else None
    emit(out)
    if max_deviation is not None and not dev <= max_deviation:
        raise Fail(EXIT_GATE, f"deviation {dev:.3g} exceeds {max_deviation}")


@main.command("escape-scan")
@click.option("-f", "--function", "function", required=True)
@click.option("-r", "--radius", "r", type=click.FloatRange(min=0, min_open=True), required=True)
@click.option("-L", "--disc", "L", type=click.FloatRange(min=0), default=8.0, help="Disc for the deviation gate.")
@click.option("--window", type=click.FloatRange(min=0, min_open=True), default=2.0,
              help="Trace the locus inside D(z_r, window).")
@click.option("--min-count", type=int, default=None, help="Seeds required; default ceil(N^(1/4)).")
@click.option("--max-deviation", type=float, default=None, help="Optional gate on the power-law deviation.")
@click.option("--out", "out_path", type=click.Path(dir_okay=False), default=None)
@click.option("--threads", type=int, default=None)
@controls_options
def cmd_escape_scan(function, r, L, window, min_count, max_deviation, out_path, threads, **ctl):
    """Search |F| = S_r for seeds that escape within P_r."""
    f = parse_function(function)
    try:
        ctx = WvContext.build(f, r, None, L)
    except (TailNotDominated, ValueError) as exc:
        raise Fail(EXIT_SEED, str(exc)) from None
    try:
        with pool(thread_count(threads)) as mapper:
            rep = escape_scan(f, ctx, make_controls(**ctl), window=window, map_fn=mapper)
    except ScanAborted as exc:
        raise Fail(EXIT_GATE, f"scan aborted: {exc}") from None
    except PathBlocked as exc:
        raise Fail(EXIT_PATH, f"{exc}") from None
    emit(rep.to_dict(), out_path)
    need = rep.required if min_count is None else min_count
    problems = []
    if rep.count < need:
        problems.append(f"{rep.count} passing seeds < {need}")
    if not rep.disjoint:
        problems.append("trajectories intersect")
    if max_deviation is not None and not rep.gate_deviation <= max_deviation:
        problems.append(f"deviation {rep.gate_deviation:.3g} exceeds {max_deviation}")
    if problems:
        raise Fail(EXIT_GATE, "; ".join(problems))


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
