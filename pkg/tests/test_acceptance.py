"""Acceptance criteria, one test each, at their stated tolerances.

Each test records a one-line verdict that the terminal summary prints.  Runs
shared between criteria are module fixtures, so the whole file executes each
scenario once (about ten minutes on one core).
"""
import filecmp
import math
import os
import subprocess
import sys
import time

import numpy as np
import pytest

import conftest
from iins import bihari as bh
from iins import snapshot as snap
from iins.elliptic import DEFAULT_TOL, helmholtz_decompose, orthogonality
from iins.equilibrium import make_profile_of_f, sampled_potential, step_function, uniform_gravity
from iins.grid import Grid, VectorField, face_average, from_streamfunction, integrate, vnorm
from iins.linstab import (asymptotic_rate, constant_problem, dispersion_scan, growth_rate,
                          problem_from_profile, richardson_ratio)
from iins.report import energy_scale, evaluate, read_columns, report, Series, _energy, _gamma
from iins.scenarios import run_config, scenario
from iins.transport import advect_density, density_l2, transport_cfl

from conftest import random_vector

RUNS = []   # every run directory produced here; criterion 5 audits all of them


def record(n, title, ok, detail):
    conftest.CRITERIA[n] = f"criterion {n:2d} {'PASS' if ok else 'FAIL'}  {title}: {detail}"
    print(conftest.CRITERIA[n])


def checks_of(outdir):
    return {c.name: c for c in evaluate(str(outdir))}


@pytest.fixture(scope="module")
def base(tmp_path_factory):
    return tmp_path_factory.mktemp("acceptance")


def _run(base, name, cfg):
    out = base / name
    t0 = time.perf_counter()
    res = run_config(cfg, str(out))
    wall = time.perf_counter() - t0
    report(str(out))
    RUNS.append(out)
    return out, res, wall


@pytest.fixture(scope="module")
def rest_run(base):
    return _run(base, "rest", scenario("rest"))


@pytest.fixture(scope="module")
def relax_run(base):
    return _run(base, "stable-relax", scenario("stable-relax"))


@pytest.fixture(scope="module")
def rt_run(base):
    return _run(base, "rt-unstable", scenario("rt-unstable"))


@pytest.fixture(scope="module")
def linear_run(base):
    return _run(base, "linear-converge", scenario("linear-converge"))


@pytest.fixture(scope="module")
def refinement(base):
    out = []
    for nx, nz, dt, every in [(32, 16, 0.04, 5), (64, 32, 0.02, 10), (128, 64, 0.01, 20)]:
        c = scenario("stable-relax")
        c["grid"].update(nx=nx, nz=nz)
        c["time"].update(t_end=10.0, dt_max=dt)
        c["io"]["sample_every"] = every
        d, _, _ = _run(base, f"refine-{nx}x{nz}", c)
        out.append(Series(read_columns(d / "diagnostics.csv")))
    return out


# ---------------------------------------------------------------------------

def test_c01_well_balanced_rest(rest_run):
    out, res, wall = rest_run
    umax = float(np.max(read_columns(out / "diagnostics.csv")["u_max"]))
    ok = res.summary.steps == 1000 and umax <= 1e-11 and wall <= 30.0
    record(1, "rest state 128x64, 1000 steps", ok,
           f"max|u|={umax:.2e} (<=1e-11), steps={res.summary.steps}, wall={wall:.1f}s (<=30s)")
    assert ok


def _refinement_line(values):
    ratios = [values[i] / values[i + 1] for i in range(len(values) - 1)]
    return ratios, ", ".join(f"{v:.2e}" for v in values) + " ratios " + ", ".join(f"{r:.1f}" for r in ratios)


def test_c02_energy_identity(relax_run, refinement):
    out, _, _ = relax_run
    c = checks_of(out)["energy_identity"]
    levels = [_energy(s) for s in refinement]
    ratios, line = _refinement_line(levels)
    ok = c.status == "pass" and all(r >= 2.0 for r in ratios)
    record(2, "energy identity", ok, f"stable-relax residual={c.value:.2e} (<=2e-2); refinement {line} (>=2)")
    assert ok


def test_c03_gamma_energy_identity(relax_run, refinement):
    out, _, _ = relax_run
    c = checks_of(out)["gamma_identity"]
    levels = [_gamma(s, 1.0) for s in refinement]
    ratios, line = _refinement_line(levels)
    ok = c.status == "pass" and all(r >= 2.0 for r in ratios)
    record(3, "gamma-energy identity", ok, f"stable-relax residual={c.value:.2e} (<=2e-2); refinement {line} (>=2)")
    assert ok


def test_c04_transport_guarantees():
    g = Grid(64, 32)
    X, Z = g.centers()
    a1, a2 = 1.0, 3.0
    rho = a1 + (a2 - a1) * (np.hypot(X - 2.0, Z - 0.4) < 0.25)
    rho[(np.abs(X - 4.5) < 0.6) & (Z > 0.6)] = a2

    def cellular(phase):
        xn = np.arange(g.nx) * g.dx
        zn = g.zf[:, None]
        psi = 0.2 * np.sin(np.pi * zn) * (np.sin(xn + phase) + 0.5 * np.sin(2 * xn - phase))
        return from_streamfunction(g, psi)

    flows = [cellular(p) for p in (0.0, 1.3, 2.9)]
    m0 = integrate(g, rho)
    prev = density_l2(g, rho)
    worst_mass = 0.0
    bounds_ok = l2_ok = True
    for n in range(10_000):
        u = flows[(n // 50) % 3]
        rho = advect_density(rho, u, 0.5 / transport_cfl(u, 1.0))
        bounds_ok &= bool(rho.min() >= a1 and rho.max() <= a2)
        cur = density_l2(g, rho)
        l2_ok &= cur <= prev
        prev = cur
        worst_mass = max(worst_mass, abs(integrate(g, rho) - m0) / m0)
    ok = bounds_ok and l2_ok and worst_mass <= 1e-9
    record(4, "transport, 1e4 stirred steps", ok,
           f"bounds [1,3] exact={bounds_ok}, int rho^2 nonincreasing={l2_ok}, mass drift={worst_mass:.1e} (<=1e-9)")
    assert ok


def test_c06_linear_rt_identity():
    F, dF = step_function(1.0, 3.0, 0.5, 0.05)
    worst = 0.0
    for nz in (32, 64, 128):
        p = problem_from_profile(nz, 4.0, 0.05, 1.0, F, dF)
        for j in range(6):
            worst = max(worst, growth_rate(p, which=j).variational_residual)
        for r in dispersion_scan(p, np.arange(1.0, 13.0)):
            worst = max(worst, r.variational_residual)
    lams = [growth_rate(problem_from_profile(nz, 4.0, 0.05, 1.0, F, dF)).Lambda.real for nz in (64, 128, 256)]
    ratio = richardson_ratio(*lams)
    big = growth_rate(constant_problem(128, 50.0, 1e-4, 10.0, 2.0, 1.0)).Lambda.real
    rel = abs(big / asymptotic_rate(10.0, 1.0, 2.0) - 1)
    ok = worst <= 1e-8 and 3.0 <= ratio <= 5.0 and rel <= 0.02
    record(6, "linear RT identity", ok,
           f"max residual={worst:.1e} (<=1e-8), Richardson={ratio:.2f} ([3,5]), asymptote err={rel:.2%} (<=2%)")
    assert ok


def test_c07_growth_rate_cross_validation(base):
    c = scenario("rt-unstable")
    c["grid"].update(nx=128, nz=128)
    c["time"]["t_end"] = 2.0
    c["io"]["sample_every"] = 1
    out, _, wall = _run(base, "rt-growth-128", c)
    g = checks_of(out)["growth_rate_vs_linstab"]
    ok = g.status == "pass" and wall <= 300.0
    record(7, "growth rate vs linstab at 128x128", ok, f"rel err={g.value:.2e} (<=5e-2) {g.note}, wall={wall:.0f}s (<=300s)")
    assert ok


def test_c08_relaxation_surrogates(relax_run, rt_run):
    parts, ok = [], True
    for label, (out, _, _) in (("stable-relax", relax_run), ("rt-unstable", rt_run)):
        cs = checks_of(out)
        decay = [cs[f"decay_{k}"] for k in ("grad_u_l2", "ut_l2", "weak_max", "w_norm")]
        ok &= all(d.status == "pass" for d in decay)
        parts.append(label + " " + " ".join(f"{d.name[6:]}={d.value:.1e}{'' if d.status == 'pass' else '!'}"
                                            for d in decay))
    record(8, "relaxation surrogates (limits 1e-3,1e-3,5e-2,5e-2; ! = fail)", ok, "; ".join(parts))
    assert ok


def test_c09_theorem_condition(linear_run, rt_run):
    lin = checks_of(linear_run[0])["linear_profile_gap"]
    rt = checks_of(rt_run[0])["linear_profile_rejected"]
    ok = lin.status == "pass" and rt.status == "pass"
    record(9, "linear-profile condition", ok,
           f"linear-converge |gap+theta^2|={lin.value:.1e} ({lin.limit}); rt-unstable gap={rt.value:.3f} ({rt.limit})")
    assert ok


def test_c10_helmholtz():
    rng = np.random.default_rng(2024)
    g = Grid(48, 24, 5.0, 1.0)
    worst_rec = worst_orth = 0.0
    for i in range(100):
        v = random_vector(g, rng, walls=bool(i % 2))
        w, _, gq = helmholtz_decompose(v)
        nv = vnorm(v)
        worst_rec = max(worst_rec, vnorm(v - w - gq) / nv)
        worst_orth = max(worst_orth, orthogonality(w, gq) / nv ** 2)
    # rho(f)-compatible: rho = F(f) with a nonlinear f(z) and a steep F
    _, Z = g.centers()
    pot = sampled_potential(g, 1.0 + 2.0 * Z + 0.3 * np.sin(3 * Z))
    F, dF = step_function(1.0, 3.0, 2.0, 0.1)
    prof = make_profile_of_f(pot, F, dF)
    rf = face_average(g, prof.rho_s)
    v = VectorField(g, rf.u1 * pot.gradf.u1, rf.u2 * pot.gradf.u2)
    w, _, _ = helmholtz_decompose(v)
    compat = vnorm(w) / vnorm(v)
    ok = worst_rec <= 10 * DEFAULT_TOL and worst_orth <= 1e-8 and compat <= 1e-6
    record(10, "Helmholtz decomposition", ok,
           f"reconstruction={worst_rec:.1e} (<={10 * DEFAULT_TOL:.0e}), orthogonality={worst_orth:.1e} (<=1e-8), "
           f"rho(f) |w|/|v|={compat:.1e} (<=1e-6)")
    assert ok


def test_c11_bihari_engine():
    t = np.linspace(0, 3, 3001)
    g = 0.5 + 0.2 * np.sin(t)
    exact = 1.5 * np.exp(0.5 * t + 0.2 * (1 - np.cos(t)))
    gron = np.max(np.abs(bh.bihari_bound(bh.BihariSpec(1.5, 1.0, "linear", t, g)) / exact - 1))
    rng = np.random.default_rng(11)
    dominated = 0
    for _ in range(50):
        spec, gfun, _ = bh.random_spec(rng, n=401)
        y = bh.ode_oracle(spec.a, spec.w, gfun, spec.t)
        dominated += bool(np.all(y <= bh.bihari_bound(spec) * (1 + 1e-6)))
    gfun = lambda s: 0.3 * math.exp(-0.5 * s)
    t = np.linspace(0, 4, 4001)
    spec = bh.BihariSpec(1.2, 0.6, "s_log", t, np.array([gfun(s) for s in t]))
    eq = np.max(np.abs(bh.ode_oracle(1.2, spec.w, gfun, t) / bh.bihari_bound(spec) - 1))
    td = np.linspace(0, 40, 4001)
    fast = bh.decay_detect(td, np.exp(-td), C=1.0)["verdict"]
    slow = bh.decay_detect(td, 1.0 / (1.0 + td))
    ok = gron <= 1e-8 and dominated == 50 and eq <= 1e-6 and fast == "decayed" and not slow["integrable"]
    record(11, "Bihari/Gronwall engine", ok,
           f"Gronwall err={gron:.1e} (<=1e-8), dominated {dominated}/50, equality err={eq:.1e} (<=1e-6), "
           f"exp(-t) {fast}, 1/(1+t) integrable={slow['integrable']}")
    assert ok


def _cli_run(outdir, threads, extra=()):
    env = dict(os.environ, IINS_THREADS=str(threads))
    for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        env.pop(var, None)
    cmd = [sys.executable, "-m", "iins.cli", "run", "--scenario", "linear-converge",
           "--set", "grid.nx=32", "--set", "grid.nz=16", "--set", "time.t_end=2.0",
           "--set", "io.snapshot_every=50", "--outdir", str(outdir), *extra]
    return subprocess.run(cmd, env=env, capture_output=True, text=True)


def test_c12_determinism_and_restart(base):
    a, b, r = base / "det1" / "run", base / "det2" / "run", base / "det3" / "run"
    codes = [_cli_run(a, 1).returncode, _cli_run(b, 2).returncode,
             _cli_run(r, 1, ["--restart", str(a / "snap_0000050.iins")]).returncode]
    RUNS.extend([a, b, r])
    names = sorted(os.listdir(a))
    _, mismatch, errors = filecmp.cmpfiles(a, b, names, shallow=False)
    identical = sorted(os.listdir(b)) == names and not mismatch and not errors
    last = max(n for n in names if n.endswith(".iins"))
    fa, fr = snap.read(a / last), snap.read(r / last)
    rel = max(float(np.max(np.abs(getattr(fa, k) - getattr(fr, k)))) / max(1.0, float(np.max(np.abs(getattr(fa, k)))))
              for k in ("rho", "u1", "u2", "P"))
    ok = codes == [0, 0, 0] and identical and rel <= 1e-12
    record(12, "determinism and restart", ok,
           f"{len(names)} files byte-identical across 1 and 2 threads={identical}, restart rel diff={rel:.1e} (<=1e-12)")
    assert ok


def test_c05_dgamma_bookkeeping_on_every_run(rest_run, relax_run, rt_run, linear_run, refinement):
    # named c05 but sorted last so that it sees every run made above
    worst, bad = 0.0, []
    for out in RUNS:
        c = checks_of(out)["dgamma_bookkeeping"]
        worst = max(worst, c.value)
        if c.status != "pass":
            bad.append(out.name)
    ok = not bad and len(RUNS) >= 10
    record(5, "D_gamma bookkeeping", ok, f"{len(RUNS)} runs, worst residual={worst:.1e} (<=1e-10)"
           + (f", failing: {bad}" if bad else ""))
    assert ok
