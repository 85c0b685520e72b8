"""Time integration of the variable-density Navier-Stokes system.

One step of size ``dt``:

1. density half step: ``rho <- T(u^n, dt/2) rho``;
2. two-stage Runge-Kutta (Heun, written as predictor plus trapezoidal
   corrector) for momentum with the density frozen, every stage followed by
   a variable-density projection; the buoyancy ``-grad f`` enters the
   projection source so that a discrete hydrostatic pair is an exact fixed
   point;
3. density half step with the new velocity.

Momentum advection uses the divergence form of Morinishi-type staggered
schemes, which conserves the discrete kinetic energy of a divergence-free
constant-density flow.  Viscosity is explicit by default; ``viscous="cn"``
makes it trapezoidal (Crank-Nicolson) in both stages, which keeps the step
second order and removes the diffusive step limit.
"""
from __future__ import annotations

import logging
import math
import os
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from . import snapshot as snap
from .elliptic import (DEFAULT_MAX_ITER, DEFAULT_TOL, ModeTridiagonal, SolverError,
                       density_preconditioner, project, wavenumbers_sq)
from .grid import NO_SLIP, WALL_CONDITIONS, VectorField, _rsum, face_average, grad, vector_laplacian
from .transport import CFLError, advect_density, max_cfl, transport_cfl

log = logging.getLogger(__name__)

DT_FLOOR = 1e-12


class StiffnessError(RuntimeError):
    """The admissible time step fell below :data:`DT_FLOOR`."""


class SolverAbort(RuntimeError):
    """Non-finite values appeared; ``state`` holds the last valid state."""

    def __init__(self, msg, state=None, checkpoint=None):
        super().__init__(msg)
        self.state = state
        self.checkpoint = checkpoint


@dataclass
class Params:
    nu: float
    t_end: float
    gamma: float = 0.0
    beta: float = 0.0
    cfl: float = 0.5
    bc: str = NO_SLIP
    dt_max: float = 1e-2
    viscous: str = "explicit"
    limiter: str = "minmod"
    poisson_tol: float = DEFAULT_TOL
    poisson_max_iter: int = DEFAULT_MAX_ITER
    tol_div: float = 1e-8
    alpha1: Optional[float] = None

    def __post_init__(self):
        if not self.nu > 0:
            raise ValueError("nu must be positive")
        if not 0 < self.cfl <= 1:
            raise ValueError("cfl must lie in (0, 1]")
        if not self.dt_max > 0:
            raise ValueError("dt_max must be positive")
        if self.t_end < 0:
            raise ValueError("t_end must be non-negative")
        if self.bc not in WALL_CONDITIONS:
            raise ValueError(f"unknown wall condition {self.bc!r}")
        if self.viscous not in ("explicit", "cn"):
            raise ValueError("viscous must be 'explicit' or 'cn'")


@dataclass
class State:
    u: VectorField
    rho: np.ndarray
    P: np.ndarray
    t: float = 0.0
    step: int = 0

    def copy(self):
        return State(self.u.copy(), self.rho.copy(), self.P.copy(), self.t, self.step)

    def finite(self):
        return bool(np.isfinite(self.u.u1).all() and np.isfinite(self.u.u2).all()
                    and np.isfinite(self.rho).all() and np.isfinite(self.P).all())

    def to_snapshot(self):
        return snap.Snapshot(self.u.grid, self.t, self.rho, self.u.u1, self.u.u2, self.P)

    @classmethod
    def from_snapshot(cls, s, bc=NO_SLIP, step=0):
        return cls(VectorField(s.grid, s.u1.copy(), s.u2.copy(), bc), s.rho.copy(), s.P.copy(), s.t, step)


@dataclass
class StepInfo:
    dt: float
    poisson_iterations: tuple
    transport: dict = field(default_factory=dict)


# ---------------------------------------------------------------------------
# spatial terms
# ---------------------------------------------------------------------------

def advection(u):
    """``div(u (x) u)`` interpolated to faces; zero flux through the walls."""
    g = u.grid
    a, w = u.u1, u.u2
    c1 = 0.5 * (a + np.roll(a, -1, axis=1))              # u1 at centres
    c2 = 0.5 * (w[1:] + w[:-1])                          # u2 at centres
    # corner products at (x-face i, z-face j); u2 = 0 makes the wall rows vanish
    w_x = 0.5 * (w + np.roll(w, 1, axis=1))
    a_z = np.zeros_like(w)
    a_z[1:-1] = 0.5 * (a[1:] + a[:-1])
    q = w_x * a_z
    n1 = (c1 ** 2 - np.roll(c1 ** 2, 1, axis=1)) / g.dx + (q[1:] - q[:-1]) / g.dz
    n2 = np.zeros_like(w)
    r = c2 ** 2
    n2[1:-1] = (np.roll(q, -1, axis=1)[1:-1] - q[1:-1]) / g.dx + (r[1:] - r[:-1]) / g.dz
    return VectorField(g, n1, n2, u.bc)


class _CrankNicolson:
    """Solves ``(I - c L / rho_face) v = r`` for a frozen density.

    Multiplying by ``rho_face`` gives the symmetric positive definite system
    ``(rho_face - c L) v = rho_face r``, solved by conjugate gradients with
    the x-averaged density in an FFT/tridiagonal preconditioner.
    """

    def __init__(self, grid, bc, rho, coeff, tol=1e-13, max_iter=500):
        self.grid, self.bc, self.c, self.tol, self.max_iter = grid, bc, coeff, tol, max_iter
        self.rf = face_average(grid, rho)
        kap2 = wavenumbers_sq(grid)
        idz2 = coeff / grid.dz ** 2

        def tri(rbar, end):
            n = len(rbar)
            main = (rbar + 2 * idz2)[:, None] + coeff * kap2[None, :]
            main[0] -= end * idz2
            main[-1] -= end * idz2
            off = np.full(n, -idz2)
            return ModeTridiagonal(grid.nx, off, main, off)

        ghost = -1.0 if bc == NO_SLIP else 1.0
        self.p1 = tri(self.rf.u1.mean(axis=1), ghost)
        self.p2 = tri(self.rf.u2[1:-1].mean(axis=1), 0.0)

    def _apply(self, v):
        lap = vector_laplacian(v)
        out = VectorField(self.grid, self.rf.u1 * v.u1 - self.c * lap.u1,
                          self.rf.u2 * v.u2 - self.c * lap.u2, self.bc)
        out.u2[0] = out.u2[-1] = 0.0
        return out

    def _precond(self, r):
        z = VectorField.zeros(self.grid, self.bc)
        z.u1 = self.p1.solve(r.u1)
        z.u2[1:-1] = self.p2.solve(r.u2[1:-1])
        return z

    def solve(self, r):
        b = VectorField(self.grid, self.rf.u1 * r.u1, self.rf.u2 * r.u2, self.bc)
        b.u2[0] = b.u2[-1] = 0.0
        x = self._precond(b)
        res = b - self._apply(x)
        bn = np.sqrt(_vdot(b, b))
        if bn == 0.0:
            return x
        z = self._precond(res)
        p = z.copy()
        rz = _vdot(res, z)
        for _ in range(self.max_iter):
            if np.sqrt(_vdot(res, res)) <= self.tol * bn:
                return x
            Ap = self._apply(p)
            alpha = rz / _vdot(p, Ap)
            x = x + alpha * p
            res = res - alpha * Ap
            z = self._precond(res)
            rz_new = _vdot(res, z)
            p = z + (rz_new / rz) * p
            rz = rz_new
        raise SolverError("Crank-Nicolson viscous solve did not converge")


def _vdot(a, b):
    return _rsum(a.u1 * b.u1) + _rsum(a.u2 * b.u2)


def acceleration(u, rho_face, nu, viscous=True):
    """``-N(u) + nu lap(u) / rho`` on the faces (buoyancy and pressure excluded)."""
    a = -advection(u)
    if viscous:
        lap = vector_laplacian(u)
        a.u1 += nu * lap.u1 / rho_face.u1
        a.u2[1:-1] += nu * lap.u2[1:-1] / rho_face.u2[1:-1]
    a.u2[0] = a.u2[-1] = 0.0
    return a


# ---------------------------------------------------------------------------
# time stepping
# ---------------------------------------------------------------------------

def compute_dt(state, params):
    """Advective, diffusive and user limits on the step (see module docstring)."""
    g = state.u.grid
    dt = params.dt_max
    m1 = float(np.abs(state.u.u1).max())
    m2 = float(np.abs(state.u.u2).max())
    if m1 > 0:
        dt = min(dt, params.cfl * g.dx / m1)
    if m2 > 0:
        dt = min(dt, params.cfl * g.dz / m2)
    if params.viscous == "explicit":
        a1 = params.alpha1 if params.alpha1 is not None else float(state.rho.min())
        dt = min(dt, 0.25 * min(g.dx, g.dz) ** 2 * a1 / params.nu)
    return dt


def _transport(rho, u, dt, limiter, stats):
    """Density update over ``dt``, subcycled if the convex CFL bound would be violated."""
    c = transport_cfl(u, dt)
    n = max(1, math.ceil(c / max_cfl(limiter) * (1 + 1e-9)))
    h = dt / n
    for _ in range(n):
        rho = advect_density(rho, u, h, limiter, stats)
    if n > 1:
        stats["subcycled"] = stats.get("subcycled", 0) + 1
    return rho


def step(state, params, pot, dt=None):
    """Advance ``state`` by one step; returns ``(new_state, StepInfo)``."""
    if dt is None:
        dt = compute_dt(state, params)
    if dt < DT_FLOOR:
        raise StiffnessError(f"time step {dt:.3g} below {DT_FLOOR:g}")
    grid = state.u.grid
    u0 = state.u.with_bc(params.bc)
    stats: dict = {}
    rho = _transport(state.rho, u0, 0.5 * dt, params.limiter, stats)
    rf = face_average(grid, rho)
    gf = pot.gradf
    explicit = params.viscous == "explicit"
    pre = density_preconditioner(grid, rho)
    cn = None if explicit else _CrankNicolson(grid, params.bc, rho, 0.5 * dt * params.nu)
    if cn is not None:
        lap0 = vector_laplacian(u0)
        visc0 = VectorField(grid, 0.5 * params.nu * lap0.u1 / rf.u1, 0.5 * params.nu * lap0.u2 / rf.u2)
        visc0.u2[0] = visc0.u2[-1] = 0.0
        # incremental form: carry the old pressure gradient through the implicit solve
        gp = grad(grid, state.P, params.bc)
        gp0 = VectorField(grid, gp.u1 / rf.u1, gp.u2 / rf.u2, params.bc)

    def stage(acc, x0):
        # u* = u0 + dt (acc - grad f) [+ dt nu (L u0 + L u*) / (2 rho)], then project
        star = VectorField(grid, u0.u1 + dt * (acc.u1 - gf.u1), u0.u2 + dt * (acc.u2 - gf.u2), params.bc)
        if cn is not None:
            star = cn.solve(star + dt * (visc0 - gp0)) + dt * gp0
        return project(star, rho, dt, params.poisson_tol, params.tol_div, params.poisson_max_iter, x0=x0,
                       preconditioner=pre)

    a0 = acceleration(u0, rf, params.nu, viscous=explicit)
    u1, _, phi1, r1 = stage(a0, state.P)
    a1 = acceleration(u1, rf, params.nu, viscous=explicit)
    u2, _, phi2, r2 = stage((a0 + a1) * 0.5, phi1)
    rho_new = _transport(rho, u2, 0.5 * dt, params.limiter, stats)
    new = State(u2, rho_new, phi2, state.t + dt, state.step + 1)
    return new, StepInfo(dt, (r1.iterations, r2.iterations), stats)


@dataclass
class RunSummary:
    state: State
    steps: int
    status: str = "complete"
    snapshots: list = field(default_factory=list)
    last_info: Optional[StepInfo] = None


def snapshot_path(outdir, n):
    return os.path.join(outdir, f"snap_{n:07d}.iins")


def run(initial, params, pot, hooks: Sequence[Callable] = (), snapshot_every=0, outdir=None,
        max_steps=None):
    """Advance ``initial`` to ``params.t_end``.

    Every hook is called after each step as ``hook(prev, new, info)``.  With
    ``snapshot_every > 0`` a snapshot is written every that many steps (by
    global step count, so a restarted run writes the same files).  On a
    non-finite state the last valid state is written to ``abort.iins`` and
    :class:`SolverAbort` is raised.
    """
    state = initial.copy()
    state.u = state.u.with_bc(params.bc)
    summary = RunSummary(state, 0)
    if outdir:
        os.makedirs(outdir, exist_ok=True)
    eps = 1e-12 * max(1.0, params.t_end)
    while state.t < params.t_end - eps:
        if max_steps is not None and summary.steps >= max_steps:
            summary.status = "incomplete"
            break
        dt = compute_dt(state, params)
        dt = min(dt, params.t_end - state.t)
        try:
            new, info = step(state, params, pot, dt)
        except (SolverError, StiffnessError, CFLError):
            _checkpoint(state, outdir)
            raise
        if not new.finite():
            path = _checkpoint(state, outdir)
            raise SolverAbort(f"non-finite state at t={new.t:.6g}", state, path)
        for hook in hooks:
            hook(state, new, info)
        state = new
        summary.steps += 1
        summary.last_info = info
        if outdir and snapshot_every and state.step % snapshot_every == 0:
            p = snapshot_path(outdir, state.step)
            snap.write(p, state.to_snapshot())
            summary.snapshots.append(p)
    summary.state = state
    return summary


def _checkpoint(state, outdir):
    if not outdir:
        return None
    path = os.path.join(outdir, "abort.iins")
    snap.write(path, state.to_snapshot())
    return path


def rest_state(grid, rho_s, p_s, bc=NO_SLIP):
    return State(VectorField.zeros(grid, bc), np.array(rho_s, dtype=float), np.array(p_s, dtype=float))


def velocity_rhs(state, params, pot):
    """Instantaneous ``du/dt`` (projected acceleration) at frozen density, for ``u_t`` checks."""
    grid = state.u.grid
    rf = face_average(grid, state.rho)
    a = acceleration(state.u.with_bc(params.bc), rf, params.nu)
    star = VectorField(grid, a.u1 - pot.gradf.u1, a.u2 - pot.gradf.u2, params.bc)
    v, _, _, _ = project(star, state.rho, 1.0, params.poisson_tol, None, params.poisson_max_iter, x0=state.P)
    return v
