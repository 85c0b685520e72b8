"""Verdicts for a run directory and the plain-text report.

The report works from the files alone (``config.ini``, ``diagnostics.csv``,
``linstab.csv``, ``status.txt``), so replaying stored outputs reproduces it
byte for byte.  Exit codes: 0 all asserted checks pass, 1 a check failed,
2 inputs incomplete (a needed series is missing or the run stopped early).
"""
from __future__ import annotations

import csv
import os
from dataclasses import dataclass
from typing import List, Optional

import numpy as np

from . import config as cfgmod

EXIT_PASS, EXIT_FAIL, EXIT_INCOMPLETE, EXIT_ABORT = 0, 1, 2, 3

# thresholds of the asserted checks
REST_UMAX = 1e-11
ENERGY_TOL = 2e-2
DGAMMA_TOL = 1e-10
MASS_TOL = 1e-9
GROWTH_TOL = 0.05
GROWTH_WINDOW = (3e-4, 3e-3)
DECAY_RATIO = {"grad_u_l2": 1e-3, "ut_l2": 1e-3, "weak_max": 5e-2, "w_norm": 5e-2}
GAP_LINEAR_FACTOR = 3.0
GAP_RT_FACTOR = 10.0


class MissingSeries(KeyError):
    pass


@dataclass
class Check:
    name: str
    status: str                 # "pass", "fail" or "skipped"
    value: Optional[float] = None
    limit: Optional[str] = None
    note: str = ""

    def line(self):
        parts = [f"{self.name}: {self.status.upper()}"]
        if self.value is not None:
            parts.append(f"value={self.value:.6e}")
        if self.limit:
            parts.append(f"limit={self.limit}")
        if self.note:
            parts.append(self.note)
        return " ".join(parts)


def read_columns(path):
    """``name -> array`` for every column of a CSV file."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        return {}
    head, body = rows[0], rows[1:]
    return {name: np.array([float(r[i]) for r in body]) for i, name in enumerate(head)}


class Series:
    def __init__(self, cols):
        self.cols = cols

    def __getitem__(self, name):
        if name not in self.cols:
            raise MissingSeries(name)
        return self.cols[name]


def classify(cfg):
    """Which family of checks applies to a configuration."""
    if cfg["init"]["kind"] == "rest":
        return "rest"
    if cfg["profile"]["kind"] == "unstable-step":
        return "rt"
    if cfg["init"]["kind"] == "streamfunction":
        return "linear"
    return "relax"


def _bounded(name, value, limit, below=True):
    ok = value <= limit if below else value >= limit
    return Check(name, "pass" if ok else "fail", value, f"{'<=' if below else '>='}{limit:.3e}")


def energy_scale(s):
    """Tolerance-sized scale of the energy ledger: ``ENERGY_TOL * max(1, ke0 + |pe0|)``."""
    return ENERGY_TOL * max(1.0, s["ke"][0] + abs(s["pe"][0]))


def _energy(s):
    scale = max(1.0, s["ke"][0] + abs(s["pe"][0]))
    e = s["E"] + s["diss_accum"]
    return float(np.max(np.abs(e - e[0]))) / scale


def _gamma(s, gamma):
    e = s["E_gamma"] + gamma * s["diss_accum"]
    return float(np.max(np.abs(e - e[0]))) / max(1.0, abs(s["E_gamma"][0]))


def _dgamma(s, beta):
    d = s["D_gamma"] - s["D_gamma"][0]
    rhs = 0.5 * (s["rho_l2sq"] - s["rho_l2sq"][0]) - beta * (s["mass"] - s["mass"][0])
    scale = max(1.0, abs(s["D_gamma"][0]), s["rho_l2sq"][0], abs(beta * s["mass"][0]))
    return float(np.max(np.abs(d - rhs))) / scale


def _growth(s, lin_path):
    from .linstab import measured_growth_rate

    lin = read_columns(lin_path)
    lam = float(np.max(lin["ReLambda"]))
    rate, window = measured_growth_rate(s["t"], s["u_l2"], *GROWTH_WINDOW)
    rel = abs(rate - lam) / abs(lam)
    c = _bounded("growth_rate_vs_linstab", rel, GROWTH_TOL)
    c.note = f"measured={rate:.6e} linstab={lam:.6e} window=[{window[0]:.4g},{window[1]:.4g}]"
    return c


def _gap(s, gamma):
    lhs = 2.0 * gamma * (s["pe"][0] - s["pe"][-1])
    gap = lhs - s["theta_l2sq"][0]
    return gap, float(s["theta_l2sq"][-1])


def _guard(name, fn):
    try:
        return fn()
    except MissingSeries as exc:
        return Check(name, "skipped", note=f"missing series {exc.args[0]}")
    except (FileNotFoundError, ValueError) as exc:
        return Check(name, "skipped", note=str(exc).replace("\n", " "))


def evaluate(outdir) -> List[Check]:
    """All checks that apply to the run in ``outdir``."""
    cfg = cfgmod.load(os.path.join(outdir, "config.ini"))
    family = classify(cfg)
    gamma, beta = cfg["physics"]["gamma"], cfg["physics"]["beta"]
    try:
        s = Series(read_columns(os.path.join(outdir, "diagnostics.csv")))
    except FileNotFoundError:
        return [Check("diagnostics", "skipped", note="diagnostics.csv missing")]
    checks = []
    status_path = os.path.join(outdir, "status.txt")
    status = "missing"
    if os.path.exists(status_path):
        with open(status_path) as fh:
            status = fh.readline().split(":", 1)[-1].strip()
    checks.append(Check("run_complete", "pass" if status == "complete" else "skipped",
                        note=f"status={status}"))

    checks.append(_guard("dgamma_bookkeeping", lambda: _bounded("dgamma_bookkeeping", _dgamma(s, beta), DGAMMA_TOL)))
    checks.append(_guard("mass_drift", lambda: _bounded(
        "mass_drift", float(np.max(np.abs(s["mass"] - s["mass"][0]))) / abs(s["mass"][0]), MASS_TOL)))

    def bounds():
        lo, hi = s["rho_min"][0], s["rho_max"][0]
        excess = max(0.0, lo - float(s["rho_min"].min()), float(s["rho_max"].max()) - hi)
        return Check("density_bounds", "pass" if excess == 0.0 else "fail", excess, "0 (exact)")
    checks.append(_guard("density_bounds", bounds))

    if family == "rest":
        checks.append(_guard("rest_u_max", lambda: _bounded("rest_u_max", float(np.max(s["u_max"])), REST_UMAX)))
    if family in ("relax", "linear", "rest"):
        checks.append(_guard("energy_identity", lambda: _bounded("energy_identity", _energy(s), ENERGY_TOL)))
        checks.append(_guard("gamma_identity", lambda: _bounded("gamma_identity", _gamma(s, gamma), ENERGY_TOL)))
    if family in ("relax", "rt"):
        for name, lim in DECAY_RATIO.items():
            def ratio(name=name, lim=lim):
                c = s[name]
                m = float(c.max())
                return _bounded(f"decay_{name}", float(c[-1]) / m if m > 0 else 0.0, lim)
            checks.append(_guard(f"decay_{name}", ratio))
    if family == "rt":
        checks.append(_guard("growth_rate_vs_linstab",
                             lambda: _growth(s, os.path.join(outdir, "linstab.csv"))))

        def rt_gap():
            gap, th = _gap(s, gamma)
            scale = energy_scale(s)
            ok = gap < 0 and abs(gap) >= GAP_RT_FACTOR * scale
            return Check("linear_profile_rejected", "pass" if ok else "fail", gap,
                         f"<-{GAP_RT_FACTOR * scale:.3e}", f"theta_l2sq_end={th:.6e}")
        checks.append(_guard("linear_profile_rejected", rt_gap))
    if family == "linear":
        def lin_gap():
            gap, th = _gap(s, gamma)
            c = _bounded("linear_profile_gap", abs(gap + th), GAP_LINEAR_FACTOR * energy_scale(s))
            c.note = f"gap={gap:.6e} theta_l2sq_end={th:.6e}"
            return c
        checks.append(_guard("linear_profile_gap", lin_gap))
    return checks


def exit_code(checks):
    if any(c.status == "skipped" for c in checks):
        return EXIT_INCOMPLETE
    if any(c.status == "fail" for c in checks):
        return EXIT_FAIL
    return EXIT_PASS


def render(outdir, checks):
    cfg_kind = "unknown"
    try:
        cfg_kind = classify(cfgmod.load(os.path.join(outdir, "config.ini")))
    except (FileNotFoundError, cfgmod.ConfigError):
        pass
    code = exit_code(checks)
    lines = [f"run: {os.path.basename(os.path.normpath(outdir))}", f"family: {cfg_kind}"]
    lines += [c.line() for c in checks]
    lines.append(f"overall: {['PASS', 'FAIL', 'INCOMPLETE'][code]}")
    return "\n".join(lines) + "\n"


def report(outdir, write=True):
    """Evaluate ``outdir``; returns ``(text, exit_code)`` and writes ``report.txt``."""
    if not os.path.exists(os.path.join(outdir, "config.ini")):
        checks = [Check("config", "skipped", note="config.ini missing")]
    else:
        checks = evaluate(outdir)
    text = render(outdir, checks)
    if write:
        with open(os.path.join(outdir, "report.txt"), "w") as fh:
            fh.write(text)
    return text, exit_code(checks)
