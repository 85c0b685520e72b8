"""Named scenarios and the machinery that turns a config into a run.

A run directory holds ``config.ini``, ``diagnostics.csv``, optional
``snap_*.iins`` snapshots (each with a ``.json`` sidecar carrying the step
counter and accumulated dissipation so a restart continues the ledgers), a
``linstab.csv`` scan for mode-seeded runs and ``report.txt``.
"""
from __future__ import annotations

import copy
import json
import math
import os
import re
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import config as cfgmod
from . import snapshot as snap
from .diagnostics import Recorder, write_csv
from .equilibrium import (Potential, Profile, make_exponential_profile, make_linear_profile,
                          make_profile_of_f, make_unstable_step, sampled_potential,
                          step_function, uniform_gravity, warn_if_unstable)
from .grid import Grid, VectorField, from_streamfunction
from .linstab import (dispersion_scan, most_unstable, problem_from_profile,
                      seed_fields, vertical_mode, write_scan)
from .solver import Params, RunSummary, State, run

NAMES = ("rest", "stable-relax", "rt-unstable", "linear-converge")
MAX_SCAN = 12


class ScenarioError(ValueError):
    pass


def _set(cfg, **sections):
    for sec, vals in sections.items():
        cfg[sec].update(vals)
    return cfg


def scenario(name):
    """Complete configuration of a named scenario.

    rest
        Hydrostatic linear stratification at rest; must stay at rest.
    stable-relax
        ``rho_s = 2 - z`` with the (k=1, n=1) normal mode added at
        ``||u|| = 1e-2``; relaxes back to rest.
    rt-unstable
        Heavy-over-light smoothed step seeded with the most unstable mode at
        ``||u|| = 1e-4``; grows, saturates and relaxes.
    linear-converge
        Linear stratification plus a small density bump and a horizontal
        shear (orthogonal to ``grad f``); the density stays close to linear.
    """
    cfg = cfgmod.default_config()
    if name == "rest":
        _set(cfg, grid={"nx": 128, "nz": 64},
             physics={"nu": 0.01, "g": 1.0, "gamma": 1.0, "beta": 2.0, "bc": "no-slip"},
             profile={"kind": "linear"}, init={"kind": "rest"},
             time={"t_end": 5.0, "dt_max": 0.005, "viscous": "explicit"},
             io={"sample_every": 100})
    elif name == "stable-relax":
        _set(cfg, grid={"nx": 128, "nz": 64},
             physics={"nu": 0.065, "g": 1.0, "gamma": 1.0, "beta": 2.0, "bc": "free-slip"},
             profile={"kind": "linear"},
             init={"kind": "mode", "amplitude": 1e-2, "k": 1.0, "n": 1},
             time={"t_end": 40.0, "dt_max": 0.01, "viscous": "cn"},
             io={"sample_every": 10})
    elif name == "rt-unstable":
        _set(cfg, grid={"nx": 64, "nz": 64},
             physics={"nu": 0.25, "g": 10.0, "gamma": 0.2, "beta": 3.0, "bc": "free-slip"},
             profile={"kind": "unstable-step", "alpha1": 1.0, "alpha2": 3.0,
                      "interface": 0.5, "thickness": 0.05},
             init={"kind": "mode", "amplitude": 1e-4, "k": 0.0, "n": 1},
             time={"t_end": 30.0, "dt_max": 0.01, "viscous": "cn"},
             io={"sample_every": 5})
    elif name == "linear-converge":
        _set(cfg, grid={"nx": 128, "nz": 64},
             physics={"nu": 0.065, "g": 1.0, "gamma": 1.0, "beta": 2.0, "bc": "free-slip"},
             profile={"kind": "linear"},
             init={"kind": "streamfunction", "amplitude": 1e-2, "rho_amplitude": 1e-2,
                   "k": 1.0, "n": 2},
             time={"t_end": 40.0, "dt_max": 0.01, "viscous": "cn"},
             io={"sample_every": 10})
    else:
        raise ScenarioError(f"unknown scenario {name!r}; valid names: {', '.join(NAMES)}")
    return cfgmod.validate(cfg)


@dataclass
class Setup:
    grid: Grid
    pot: Potential
    profile: Profile
    params: Params
    initial: State
    mode: Optional[object] = None
    scan: Optional[tuple] = None


def build_potential(cfg, grid):
    path = cfg["physics"]["potential"]
    if path:
        s = snap.read(path)
        if (s.grid.nx, s.grid.nz) != (grid.nx, grid.nz):
            raise cfgmod.ConfigError("potential snapshot does not match the grid")
        return sampled_potential(grid, s.rho)
    return uniform_gravity(grid, cfg["physics"]["g"])


def _step_FdF(cfg):
    pr, g = cfg["profile"], cfg["physics"]["g"]
    # the step is specified in z; with f = g z it sits at f = g * interface
    return step_function(pr["alpha1"], pr["alpha2"], g * pr["interface"], g * pr["thickness"])


def profile_functions(cfg, fmax=None):
    """``(F, dF)`` with ``rho_s = F(f)``, for the stability problem.

    ``fmax`` (the largest sampled potential) fixes the rate of the
    exponential profile, as in :func:`make_exponential_profile`.
    """
    pr, ph = cfg["profile"], cfg["physics"]
    kind = pr["kind"]
    if kind == "linear":
        return (lambda s: ph["beta"] - ph["gamma"] * s), (lambda s: -ph["gamma"] * np.ones_like(s))
    if kind == "unstable-step":
        return _step_FdF(cfg)
    a1, a2 = pr["alpha1"], pr["alpha2"]
    if fmax is None:
        raise ValueError("the exponential profile needs fmax")
    lam = math.log(a2 / a1) / fmax
    return (lambda s: a2 * np.exp(-lam * s)), (lambda s: -lam * a2 * np.exp(-lam * s))


def build_profile(cfg, pot):
    pr, ph = cfg["profile"], cfg["physics"]
    if pr["kind"] == "linear":
        prof = make_linear_profile(pot, ph["gamma"], ph["beta"])
    elif pr["kind"] == "exponential":
        prof = make_exponential_profile(pot, pr["alpha1"], pr["alpha2"])
    else:
        if not pot.z_only or pot.g is None:
            F, dF = _step_FdF(cfg)
            prof = make_profile_of_f(pot, F, dF)
        else:
            prof = make_unstable_step(pot, pr["alpha1"], pr["alpha2"], pr["interface"], pr["thickness"])
    warn_if_unstable(prof)
    return prof


def build_params(cfg):
    ph, tm, ps = cfg["physics"], cfg["time"], cfg["poisson"]
    return Params(nu=ph["nu"], t_end=tm["t_end"], gamma=ph["gamma"], beta=ph["beta"],
                  cfl=tm["cfl"], bc=ph["bc"], dt_max=tm["dt_max"], viscous=tm["viscous"],
                  limiter=tm["limiter"], poisson_tol=ps["tol"], poisson_max_iter=ps["max_iter"],
                  tol_div=ps["tol_div"])


def stability_template(cfg, grid, k=1.0):
    ph = cfg["physics"]
    if cfg["physics"]["potential"]:
        raise cfgmod.ConfigError("mode seeding needs uniform gravity")
    F, dF = profile_functions(cfg, ph["g"] * float(grid.zc[-1]))
    return problem_from_profile(grid.nz, k, ph["nu"], ph["g"], F, dF, grid.h)


def scan_wavenumbers(grid, count=MAX_SCAN):
    return 2.0 * math.pi / grid.Lx * np.arange(1, count + 1)


def _shear_initial(cfg, grid, prof):
    ini = cfg["init"]
    n, h = ini["n"], grid.h
    # psi on the corner nodes, constant in x: u1 = amplitude cos(n pi z / h), u2 = 0
    psi = (ini["amplitude"] * h / (n * math.pi)) * np.sin(n * math.pi * grid.zf / h)
    u = from_streamfunction(grid, np.repeat(psi[:, None], grid.nx, axis=1), cfg["physics"]["bc"])
    X, Z = grid.centers()
    bump = ini["rho_amplitude"] * np.cos(ini["k"] * X) * np.sin(math.pi * Z / h)
    return u, prof.rho_s + bump


def build(cfg):
    """Grid, potential, profile, parameters and initial state for ``cfg``."""
    gc = cfg["grid"]
    grid = Grid(gc["nx"], gc["nz"], gc["Lx"], gc["h"])
    pot = build_potential(cfg, grid)
    prof = build_profile(cfg, pot)
    params = build_params(cfg)
    bc = cfg["physics"]["bc"]
    ini = cfg["init"]
    mode = scan = None
    if ini["kind"] == "rest":
        u, rho = VectorField.zeros(grid, bc), prof.rho_s.copy()
    elif ini["kind"] == "mode":
        tmpl = stability_template(cfg, grid)
        if ini["k"] > 0:
            mode = vertical_mode(tmpl.with_k(ini["k"]), ini["n"])
        else:
            ks = scan_wavenumbers(grid)
            results = dispersion_scan(tmpl, ks)
            mode = most_unstable(results)
            scan = (ks, results)
        u, varrho = seed_fields(grid, mode, ini["amplitude"], bc)
        rho = prof.rho_s + varrho
    else:
        u, rho = _shear_initial(cfg, grid, prof)
    initial = State(u.with_bc(bc), rho, prof.p_s.copy())
    return Setup(grid, pot, prof, params, initial, mode, scan)


# ---------------------------------------------------------------------------
# running
# ---------------------------------------------------------------------------

def sidecar_path(snapshot_path):
    return os.path.splitext(snapshot_path)[0] + ".json"


def _step_from_name(path):
    m = re.search(r"snap_(\d+)\.iins$", os.path.basename(path))
    return int(m.group(1)) if m else 0


def load_restart(path, bc):
    """State and accumulated dissipation stored at a snapshot."""
    s = snap.read(path)
    meta = {"step": _step_from_name(path), "diss_accum": 0.0}
    side = sidecar_path(path)
    if os.path.exists(side):
        with open(side) as fh:
            meta.update(json.load(fh))
    return State.from_snapshot(s, bc=bc, step=int(meta["step"])), float(meta["diss_accum"])


@dataclass
class RunOutput:
    outdir: str
    setup: Setup
    summary: RunSummary
    records: list


def run_config(cfg, outdir=None, restart=None, max_steps=None):
    """Run ``cfg`` and write the run directory; returns :class:`RunOutput`."""
    cfg = copy.deepcopy(cfg)
    outdir = outdir or cfg["io"]["outdir"]
    os.makedirs(outdir, exist_ok=True)
    # the stored config describes the run, not where it was written, so reruns elsewhere match
    stored = copy.deepcopy(cfg)
    stored["io"]["outdir"] = "."
    cfgmod.dump(stored, os.path.join(outdir, "config.ini"))
    setup = build(cfg)
    if setup.scan is not None:
        write_scan(os.path.join(outdir, "linstab.csv"), *setup.scan)
    initial, diss = setup.initial, 0.0
    if restart:
        initial, diss = load_restart(restart, setup.params.bc)
    io = cfg["io"]
    rec = Recorder(setup.pot, setup.profile, setup.params, sample_every=io["sample_every"],
                   initial=initial, diss_accum=diss)
    every = io["snapshot_every"]

    def sidecar(prev, new, info):
        if every and new.step % every == 0:
            side = sidecar_path(os.path.join(outdir, f"snap_{new.step:07d}.iins"))
            with open(side, "w") as fh:
                json.dump({"step": new.step, "diss_accum": rec.diss_accum}, fh)

    summary = run(initial, setup.params, setup.pot, hooks=[rec, sidecar],
                  snapshot_every=every, outdir=outdir, max_steps=max_steps)
    rec.finalize(summary.state)
    write_csv(os.path.join(outdir, "diagnostics.csv"), rec.records)
    with open(os.path.join(outdir, "status.txt"), "w") as fh:
        fh.write(f"status: {summary.status}\nsteps: {summary.steps}\nt: {summary.state.t!r}\n")
    return RunOutput(outdir, setup, summary, rec.records)
