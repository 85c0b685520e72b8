"""Gravitational potentials and hydrostatic profiles.

Hydrostatic pressures are built by a discrete vertical antiderivative that
uses the same face averaging as the flow solver, so ``grad(p_s) + rho_s grad f``
vanishes at every interior face to roundoff and a resting stratification is
a fixed point of the discrete dynamics.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .grid import Grid, VectorField, face_average, grad, integrate, vector_laplacian, vnorm


class ProfileError(ValueError):
    """Raised for non-positive densities or inconsistent potentials."""


@dataclass
class Potential:
    grid: Grid
    f: np.ndarray
    gradf: VectorField
    kind: str = "custom"
    g: Optional[float] = None

    @property
    def z_only(self):
        return bool(np.all(self.f == self.f[:, :1]))


def _from_values(grid, f, kind, g=None):
    f = grid.check_scalar(np.asarray(f, dtype=float))
    if not np.all(f > 0):
        raise ProfileError("potential must be strictly positive")
    return Potential(grid, f, grad(grid, f), kind, g)


def uniform_gravity(grid, g=1.0):
    """``f = g z`` sampled at cell centres (positive since centres sit above the wall)."""
    if g <= 0:
        raise ProfileError("gravity must be positive")
    _, Z = grid.centers()
    return _from_values(grid, g * Z, "uniform", float(g))


def sampled_potential(grid, f):
    return _from_values(grid, f, "custom")


@dataclass
class Profile:
    """Hydrostatic state ``(rho_s, p_s)`` with ``slope = d rho_s / d f``."""

    rho_s: np.ndarray
    p_s: np.ndarray
    slope: np.ndarray
    gamma: Optional[float] = None
    beta: Optional[float] = None

    @property
    def is_stable(self):
        return bool(np.max(self.slope) < 0)

    @property
    def rt_unstable(self):
        return bool(np.max(self.slope) > 0)

    def delta0(self):
        """Largest ``d0`` with ``slope <= -d0`` everywhere (negative when unstable)."""
        return float(-np.max(self.slope))


def _mean_zero(grid, p):
    return p - integrate(grid, p) / (grid.Lx * grid.h)


def discrete_hydrostatic_pressure(pot, rho):
    """Integrate ``dp/dz = -rho_face df/dz`` up each column, then remove the mean.

    Exact discrete balance needs ``f`` independent of x; for other potentials
    the x-faces carry an O(dx^2) residual.
    """
    grid = pot.grid
    rf = face_average(grid, rho)
    incr = -rf.u2[1:-1] * (pot.f[1:] - pot.f[:-1])
    p = np.zeros(grid.shape)
    p[1:] = np.cumsum(incr, axis=0)
    return _mean_zero(grid, p)


def balance_residual(pot, rho, p):
    """Face field ``grad(p) + rho_face grad(f)`` (wall rows zero)."""
    rf = face_average(pot.grid, rho)
    gp = grad(pot.grid, p)
    return VectorField(pot.grid, gp.u1 + rf.u1 * pot.gradf.u1, gp.u2 + rf.u2 * pot.gradf.u2)


def _check_positive(rho, alpha1):
    if not np.all(np.isfinite(rho)) or np.min(rho) <= 0 or np.min(rho) < alpha1:
        raise ProfileError(f"density profile drops to {np.min(rho):.6g}, below alpha1={alpha1}")


def make_linear_profile(pot, gamma, beta, alpha1=0.0):
    """``rho_s = -gamma f + beta`` with ``p_s = gamma f^2 / 2 - beta f`` (mean removed).

    The quadratic pressure balances the averaged-face buoyancy exactly for any
    sampled ``f``.
    """
    if not gamma > 0:
        raise ProfileError("linear profile needs gamma > 0")
    rho = -gamma * pot.f + beta
    _check_positive(rho, alpha1 if alpha1 > 0 else np.finfo(float).tiny)
    p = _mean_zero(pot.grid, 0.5 * gamma * pot.f ** 2 - beta * pot.f)
    return Profile(rho, p, np.full(pot.grid.shape, -float(gamma)), float(gamma), float(beta))


def antiderivative_table(F, lo, hi, panels=4096):
    """Composite Simpson table of ``Q(s) = int_lo^s F``; returns ``(nodes, Q)``."""
    if panels % 2:
        panels += 1
    s = np.linspace(lo, hi, panels + 1)
    v = np.asarray(F(s), dtype=float)
    step = (hi - lo) / panels
    # cumulative Simpson on each double panel, then cubic Hermite in between
    q = np.zeros_like(s)
    pair = step / 3.0 * (v[0:-2:2] + 4 * v[1:-1:2] + v[2::2])
    q[2::2] = np.cumsum(pair)
    # odd nodes: Simpson over the half pair via the 3/8-free midpoint formula
    q[1::2] = q[0:-2:2] + step / 12.0 * (5 * v[0:-2:2] + 8 * v[1:-1:2] - v[2::2])
    return s, q


def make_profile_of_f(pot, F: Callable, dF: Callable, alpha1=0.0, panels=4096):
    """``rho_s = F(f)`` for a scalar function ``F`` of the potential.

    ``p_s`` comes from the discrete column antiderivative when ``f`` depends on
    z only (exact balance).  Otherwise ``p_s = -Q(f)`` with ``Q`` a composite
    Simpson antiderivative of ``F`` over the range of ``f``.
    """
    f = pot.f
    rho = np.asarray(F(f), dtype=float) * np.ones_like(f)
    _check_positive(rho, alpha1 if alpha1 > 0 else np.finfo(float).tiny)
    slope = np.asarray(dF(f), dtype=float) * np.ones_like(f)
    if pot.z_only:
        p = discrete_hydrostatic_pressure(pot, rho)
    else:
        lo, hi = float(f.min()), float(f.max())
        s, q = antiderivative_table(F, lo, hi, panels)
        p = _mean_zero(pot.grid, -np.interp(f, s, q))
    return Profile(rho, p, slope)


def make_exponential_profile(pot, alpha1, alpha2):
    """``rho_s = alpha2 exp(-lam f)`` with ``lam`` chosen so the minimum equals ``alpha1``."""
    if not 0 < alpha1 < alpha2:
        raise ProfileError("exponential profile needs 0 < alpha1 < alpha2")
    lam = np.log(alpha2 / alpha1) / float(pot.f.max())
    return make_profile_of_f(pot, lambda s: alpha2 * np.exp(-lam * s),
                             lambda s: -lam * alpha2 * np.exp(-lam * s), alpha1)


def step_function(alpha1, alpha2, s_i, width):
    """Smoothed heavy-over-light step in the potential variable: ``F(s) -> alpha2`` for large ``s``."""
    amp = 0.5 * (alpha2 - alpha1)

    def F(s):
        return alpha1 + amp * (1.0 + np.tanh((s - s_i) / width))

    def dF(s):
        return amp / width / np.cosh((s - s_i) / width) ** 2

    return F, dF


def make_unstable_step(pot, alpha1, alpha2, interface=0.5, thickness=0.05):
    """Heavy fluid above light; ``interface`` and ``thickness`` are in z units for uniform gravity."""
    g = pot.g if pot.g is not None else 1.0
    F, dF = step_function(alpha1, alpha2, g * interface, g * thickness)
    return make_profile_of_f(pot, F, dF, alpha1 * (1 - 1e-12))


def verify_hydrostatic(pot, u, rho, P, nu, tol):
    """Velocity size and momentum balance ``nu lap u - grad P - rho grad f`` for a stored state."""
    grid = pot.grid
    if u.grid != grid:
        raise ProfileError("state and potential live on different grids")
    vel = vnorm(u)
    lap = vector_laplacian(u)
    bal = balance_residual(pot, rho, P)
    r = VectorField(grid, nu * lap.u1 - bal.u1, nu * lap.u2 - bal.u2)
    r.u2[0] = r.u2[-1] = 0.0
    res = vnorm(r)
    return {"velocity_norm": vel, "balance_residual": res,
            "is_equilibrium": bool(vel <= tol and res <= tol)}


def classify_slope(profile):
    if profile.rt_unstable:
        return "RT-unstable"
    if profile.is_stable:
        return "stable"
    return "neutral"


def warn_if_unstable(profile):
    if profile.rt_unstable:
        warnings.warn("profile increases with the potential somewhere (RT-unstable)", stacklevel=2)
