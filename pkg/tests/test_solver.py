import os

import numpy as np
import pytest

from iins import snapshot as snap
from iins import solver as sv
from iins.equilibrium import make_linear_profile, sampled_potential, uniform_gravity
from iins.grid import Grid, div, from_streamfunction, inner, vnorm
from iins.solver import (Params, SolverAbort, State, StiffnessError, advection, compute_dt, rest_state, run,
                         step, velocity_rhs)


def _vortex(g, amp, bc="no-slip"):
    X, Z = np.meshgrid(g.xf, g.zf)
    return from_streamfunction(g, amp * np.sin(X) * np.sin(np.pi * Z) ** 2, bc)


def test_params_validation():
    with pytest.raises(ValueError):
        Params(nu=0.0, t_end=1.0)
    with pytest.raises(ValueError):
        Params(nu=0.1, t_end=1.0, bc="slippery")
    with pytest.raises(ValueError):
        Params(nu=0.1, t_end=1.0, viscous="implicit")
    with pytest.raises(ValueError):
        Params(nu=0.1, t_end=1.0, cfl=1.5)


@pytest.mark.parametrize("bc", ["no-slip", "free-slip"])
def test_advection_is_energy_neutral(bc, rng):
    g = Grid(16, 12)
    psi = rng.standard_normal((g.nz + 1, g.nx))
    psi[0] = psi[-1] = 0.0
    u = from_streamfunction(g, psi, bc)
    assert abs(inner(advection(u), u)) <= 1e-14 * vnorm(u) ** 3


@pytest.mark.parametrize("viscous", ["explicit", "cn"])
def test_rest_state_is_a_fixed_point(viscous):
    g = Grid(32, 16)
    pot = uniform_gravity(g, 3.0)
    prof = make_linear_profile(pot, 0.2, 2.0)
    st = rest_state(g, prof.rho_s, prof.p_s)
    s = run(st, Params(nu=0.01, t_end=1.0, dt_max=0.01, viscous=viscous), pot)
    assert s.steps == 100
    assert s.state.u.max_abs() <= 1e-12
    assert np.abs(s.state.rho - prof.rho_s).max() <= 1e-13
    assert vnorm(velocity_rhs(st, Params(nu=0.01, t_end=1.0), pot)) <= 1e-12


@pytest.mark.parametrize("viscous", ["explicit", "cn"])
def test_second_order_in_time(viscous):
    g = Grid(32, 16)
    pot = sampled_potential(g, np.ones(g.shape))
    u = _vortex(g, 0.5)
    out = []
    for dt in (0.02, 0.01, 0.005, 0.0025):
        st = State(u, np.ones(g.shape), np.zeros(g.shape))
        out.append(run(st, Params(nu=0.02, t_end=0.4, dt_max=dt, viscous=viscous, cfl=1.0), pot).state.u)
    e = [vnorm(out[i] - out[-1]) for i in range(3)]
    # Richardson against the finest run: ratio 4 -> 5 for the closest pair
    assert 3.2 <= e[0] / e[1] <= 5.5


def test_step_keeps_divergence_and_energy_budget():
    g = Grid(32, 16)
    pot = uniform_gravity(g)
    prof = make_linear_profile(pot, 1.0, 2.0)
    st = State(_vortex(g, 0.05), prof.rho_s.copy(), prof.p_s.copy())
    p = Params(nu=0.01, t_end=1.0, dt_max=0.01, tol_div=1e-10)
    new, info = step(st, p, pot)
    assert np.abs(div(new.u)).max() <= 1e-9
    assert new.step == 1 and new.t == pytest.approx(info.dt)
    assert info.transport.get("high_order", 0) >= 2


def test_compute_dt_limits():
    g = Grid(32, 16)
    st = State(_vortex(g, 1.0), np.ones(g.shape), np.zeros(g.shape))
    p = Params(nu=1.0, t_end=1.0, dt_max=1.0)
    dt = compute_dt(st, p)
    assert dt <= 0.25 * g.dz ** 2 / 1.0 * (1 + 1e-12)
    assert compute_dt(st, Params(nu=1.0, t_end=1.0, dt_max=1.0, viscous="cn")) > dt


def test_stiffness_floor():
    g = Grid(16, 8)
    st = State(_vortex(g, 0.1), np.ones(g.shape), np.zeros(g.shape))
    with pytest.raises(StiffnessError):
        step(st, Params(nu=0.1, t_end=1.0), sampled_potential(g, np.ones(g.shape)), dt=1e-13)


def test_hooks_snapshots_and_max_steps(tmp_path):
    g = Grid(16, 8)
    pot = uniform_gravity(g)
    prof = make_linear_profile(pot, 1.0, 2.0)
    st = State(_vortex(g, 0.05), prof.rho_s.copy(), prof.p_s.copy())
    seen = []
    s = run(st, Params(nu=0.05, t_end=1.0, dt_max=0.01), pot, hooks=[lambda a, b, i: seen.append(b.step)],
            snapshot_every=3, outdir=str(tmp_path), max_steps=7)
    assert s.status == "incomplete" and s.steps == 7 and seen == list(range(1, 8))
    assert [os.path.basename(p) for p in s.snapshots] == ["snap_0000003.iins", "snap_0000006.iins"]
    back = snap.read(s.snapshots[-1])
    assert back.t == pytest.approx(0.06)


def test_nonfinite_state_aborts_with_checkpoint(tmp_path, monkeypatch):
    g = Grid(16, 8)
    pot = uniform_gravity(g)
    prof = make_linear_profile(pot, 1.0, 2.0)
    st = State(_vortex(g, 0.05), prof.rho_s.copy(), prof.p_s.copy())
    real_step = sv.step
    calls = []

    def bad_step(state, params, pot, dt=None):
        new, info = real_step(state, params, pot, dt)
        calls.append(1)
        if len(calls) == 3:
            new.u.u1[0, 0] = np.nan
        return new, info

    monkeypatch.setattr(sv, "step", bad_step)
    with pytest.raises(SolverAbort) as ei:
        run(st, Params(nu=0.05, t_end=1.0, dt_max=0.01), pot, outdir=str(tmp_path))
    assert ei.value.checkpoint == str(tmp_path / "abort.iins")
    assert ei.value.state.step == 2
    assert snap.read(ei.value.checkpoint).t == pytest.approx(0.02)
