"""Nonlinear run against the linear prediction.

Seeds the most unstable mode at ||u|| = 1e-4 on a coarse grid and compares
the measured exponential growth of ||u|| with linstab's Lambda.  Roughly a
minute on one core.
"""
import tempfile

from iins.report import read_columns
from iins.linstab import measured_growth_rate
from iins.scenarios import run_config, scenario

cfg = scenario("rt-unstable")
cfg["grid"].update(nx=32, nz=32)
cfg["time"]["t_end"] = 2.0
cfg["io"]["sample_every"] = 1
with tempfile.TemporaryDirectory() as out:
    res = run_config(cfg, out)
    cols = read_columns(f"{out}/diagnostics.csv")
rate, (t0, t1) = measured_growth_rate(cols["t"], cols["u_l2"], 3e-4, 3e-3)
lam = res.setup.mode.Lambda.real
print(f"linstab Lambda = {lam:.4f} at k = {res.setup.mode.k:.2f}")
print(f"measured rate  = {rate:.4f} over t in [{t0:.2f}, {t1:.2f}]   relative difference {abs(rate / lam - 1):.2%}")
