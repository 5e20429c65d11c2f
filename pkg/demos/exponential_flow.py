"""The flow z' = -exp(-z): one seed escapes, its neighbour on the other branch does not.

Along any trajectory exp(z(t)) = exp(z0) - t, so from z0 = 0 the solution hits
exp(z) = 0 at t = 1, which is z = infinity.  From z0 = i*pi, exp(z(t)) = -1 - t
never vanishes and the trajectory wanders off with Re z ~ log t.

Run:  python demos/exponential_flow.py
"""
import cmath
import math

import numpy as np

from meroflow import IntegrationControls, contour_integral_reciprocal, integrate, parse, PathSpec

f = parse("-exp(-z)")

tr = integrate(f, 0)
print(f"z0 = 0       -> {type(tr.termination).__name__}, T_est = {tr.termination.T_est:.12f}")
print(f"   uncertainty from the crossing-time extrapolation: {tr.termination.uncertainty:.1e}")
drift = np.max(np.abs(np.exp(tr.z) + tr.t - 1))
print(f"   max |exp(z(t)) + t - 1| over {len(tr)} samples: {drift:.2e}")

tr = integrate(f, 1j * math.pi, IntegrationControls(max_time=200.0))
print(f"z0 = i*pi    -> {type(tr.termination).__name__} at t = {tr.t[-1]:.0f}, |z| = {abs(tr.z[-1]):.2f}")

# Elapsed time along a trajectory is the integral of 1/f.
tr = integrate(f, 0.2 + 0.5j, IntegrationControls(max_time=0.5))
T = contour_integral_reciprocal(f, PathSpec.polyline(tr.z))
print(f"elapsed {tr.t[-1]:.12f} vs integral of 1/f {T.real:.12f} (imag {T.imag:+.1e})")
print(f"closed form: exp(z0) - exp(z1) = {(cmath.exp(tr.z[0]) - cmath.exp(tr.z[-1])).real:.12f}")
