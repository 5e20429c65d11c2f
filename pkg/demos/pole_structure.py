"""Near a pole of order m, exactly m+1 trajectories run into it.

For f ~ c (z - z1)^(-m) the incoming rays sit at angles (pi + arg c + 2 pi k)/(m+1).
Each one is confirmed by integrating from a point on the ray; the time a seed
needs to reach the pole comes from the same integration.

Run:  python demos/pole_structure.py
"""
import math

from meroflow import parse, pole_incoming_directions, time_to_pole

for text, z1 in [("1/z", 0), ("1/z^2", 0), ("-1/z^3", 0), ("1/(z-1)^2", 1), ("tan(z)", math.pi / 2)]:
    data = pole_incoming_directions(parse(text), z1)
    degs = ", ".join(f"{math.degrees(a):7.2f}" for a in data.directions)
    print(f"{text:>12}  m={data.order}  c={data.coefficient:.3g}  directions(deg)=[{degs}]  all verified: {all(data.verified)}")

# z' = 1/z gives z^2 = z0^2 + 2t, so a seed at i reaches 0 at t = 1/2
res = time_to_pole(parse("1/z"), 1j)
print(f"time from i to the pole of 1/z: {res.T:.10f} (+/- {res.uncertainty:.1e})")
