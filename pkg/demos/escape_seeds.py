"""Escape seeds for exp(z) near its maximum-modulus point.

At r = 30 the central index is N = 30 and the maximum of |exp| on |z| = r is at
z_r = 30.  The antiderivative F of 1/f is -exp(-z) up to a constant, so the set
|F| = S_r is a small level set near z_r.  Seeds on it with F = -S_r escape in time
close to S_r, well under the bound P_r = 2 S_r.

Run:  python demos/escape_seeds.py
"""
import math

from meroflow import WvContext, escape_scan, parse, power_law_deviation

f = parse("exp(z)")
ctx = WvContext.build(f, 30.0)
print(f"N = {ctx.N}, z_r = {ctx.z_r}, T_r = {ctx.T_r:.4e}, S_r = {ctx.S_r:.4e}, P_r = {ctx.P_r:.4e}")

rep = escape_scan(f, ctx)
print(f"{rep.count} seeds found, {rep.required} required, disjoint trajectories: {rep.disjoint}")
for s in rep.seeds:
    print(f"  y = {s.y:.6f}  T = {s.T:.6e}  T / exp(-Re y) = {s.T / math.exp(-s.y.real):.9f}  pass = {s.passed}")

# The pure-power approximation is good only close to z_r: the deviation grows fast with L.
for L in (0.25, 1.0, 4.0):
    print(f"power-law deviation with L = {L}: {float(power_law_deviation(f, WvContext.build(f, 30.0, L=L))):.3g}")
