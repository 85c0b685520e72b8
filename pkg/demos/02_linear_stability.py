"""Dispersion relation of a heavy-over-light step.

Scans horizontal wavenumbers for the smoothed step used by the RT scenario
and prints the growth rate Lambda(k).  Viscosity cuts off short waves, so
there is a most unstable k.  Each eigenpair also reports the residual of the
energy identity it must satisfy.
"""
import numpy as np

from iins.grid import Grid
from iins.linstab import dispersion_scan, most_unstable, richardson_ratio, growth_rate
from iins.scenarios import scan_wavenumbers, scenario, stability_template

cfg = scenario("rt-unstable")
grid = Grid(64, 64)
tmpl = stability_template(cfg, grid)
ks = scan_wavenumbers(grid, 10)
for k, r in zip(ks, dispersion_scan(tmpl, ks)):
    print(f"k = {k:6.2f}   Lambda = {r.Lambda.real:8.5f}   residual = {r.variational_residual:.1e}")
best = most_unstable(dispersion_scan(tmpl, ks))
print(f"most unstable k = {best.k:.2f}")

# grid convergence of the leading rate at that k
lams = [growth_rate(stability_template(cfg, Grid(64, nz)).with_k(best.k)).Lambda.real for nz in (32, 64, 128)]
print("Lambda(nz=32, 64, 128) =", np.round(lams, 6), f" Richardson ratio {richardson_ratio(*lams):.2f} (order 2 -> 4)")
