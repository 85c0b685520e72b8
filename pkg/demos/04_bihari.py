"""Bihari bounds against exact ODE solutions.

For y' = g(t) w(y) the Bihari bound is attained, so the bound and the ODE
solution should agree.  The same holds for a random sample of (a, w, g):
the ratio y/bound may never exceed 1 and stays at 1 up to solver tolerance.
"""
import math

import numpy as np

from iins import bihari as bh

t = np.linspace(0, 4, 2001)
gfun = lambda s: 0.3 * math.exp(-0.5 * s)
spec = bh.BihariSpec(1.2, 0.6, "s_log", t, np.array([gfun(s) for s in t]))
y = bh.ode_oracle(1.2, spec.w, gfun, t)
print(f"equality case: max |y/bound - 1| = {np.max(np.abs(y / bh.bihari_bound(spec) - 1)):.1e}")

rng = np.random.default_rng(3)
for _ in range(5):
    spec, gfun, name = bh.random_spec(rng, n=401)
    y = bh.ode_oracle(spec.a, spec.w, gfun, spec.t)
    r = y / bh.bihari_bound(spec)
    print(f"w = {name:<13s} a = {spec.a:.2f}  max y/bound = {r.max():.6f}  at t_end {r[-1]:.4f}")

td = np.linspace(0, 40, 4001)
print("exp(-t):", bh.decay_detect(td, np.exp(-td), C=1.0)["verdict"],
      "  1/(1+t):", bh.decay_detect(td, 1 / (1 + td))["verdict"])
