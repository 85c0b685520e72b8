"""Pressure Poisson solves, variable-density projection and Helmholtz splitting.

The variable-coefficient operator is ``A phi = div(grad(phi) / rho_face)`` with
zero wall flux and periodic x.  It is solved by preconditioned conjugate
gradients on ``-A``; the preconditioner is the same operator with the
coefficients replaced by their x-averages, inverted exactly by a real FFT in
x and one sparse LU factorisation of the resulting block-tridiagonal system
in z.  It is exact whenever the density does not depend on x.
"""
from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass

import numpy as np

from .grid import VectorField, _rsum, div, face_average, grad, inner, integrate

log = logging.getLogger(__name__)

DEFAULT_TOL = 1e-10
DEFAULT_MAX_ITER = 10000


class SolverError(RuntimeError):
    def __init__(self, msg, report=None):
        super().__init__(msg)
        self.report = report


@dataclass
class PoissonReport:
    iterations: int
    final_residual: float
    tolerance: float
    mean_removed: float = 0.0


def _dot(a, b):
    return _rsum(a * b)


def wavenumbers_sq(grid):
    """Eigenvalues of the periodic second difference in x for each real-FFT mode."""
    m = np.arange(grid.nx // 2 + 1)
    return (2.0 * np.sin(np.pi * m / grid.nx) / grid.dx) ** 2


class ModeTridiagonal:
    """Batched Thomas factorisation of one tridiagonal z-system per x-wavenumber.

    ``lower[k]`` and ``upper[k]`` couple row ``k`` to rows ``k - 1`` and
    ``k + 1`` and are shared by all modes; ``main`` has shape ``(n, nmodes)``.
    With ``pin_mean`` the last pivot of mode 0 is dropped, which selects one
    solution of a consistent singular Neumann problem.
    """

    def __init__(self, nx, lower, main, upper, pin_mean=False):
        n = main.shape[0]
        self.nx = nx
        cp = np.zeros_like(main)
        inv = np.zeros_like(main)
        for k in range(n):
            d = main[k] - (lower[k] * cp[k - 1] if k else 0.0)
            if pin_mean and k == n - 1:
                d = d.copy()
                d[0] = np.inf
            inv[k] = 1.0 / d
            cp[k] = upper[k] * inv[k]
        self.lower, self.cp, self.inv = np.asarray(lower, dtype=float), cp, inv

    def solve(self, rhs):
        r = np.fft.rfft(rhs, axis=1)
        n = r.shape[0]
        y = np.empty_like(r)
        y[0] = r[0] * self.inv[0]
        for k in range(1, n):
            y[k] = (r[k] - self.lower[k] * y[k - 1]) * self.inv[k]
        for k in range(n - 2, -1, -1):
            y[k] -= self.cp[k] * y[k + 1]
        return np.fft.irfft(y, n=self.nx, axis=1)


class ColumnSolver:
    """Exact inverse of ``div(c_x(z) d/dx, c_z(z) d/dz)`` with x-independent coefficients.

    ``cx`` has one value per cell row and ``cz`` one per interior z-face.  A
    real FFT in x leaves one tridiagonal system per wavenumber (see
    :class:`ModeTridiagonal`); the singular mean mode is pinned, and
    ``solve`` returns the mean-zero solution for mean-zero data.
    """

    def __init__(self, grid, cx, cz):
        self.grid = grid
        nz = grid.nz
        kap2 = wavenumbers_sq(grid)
        off = np.zeros(nz + 1)
        off[1:-1] = np.asarray(cz, dtype=float) / grid.dz ** 2    # coupling across z-face j
        cx = np.asarray(cx, dtype=float)
        main = -(off[1:] + off[:-1])[:, None] - cx[:, None] * kap2[None, :]
        self.tri = ModeTridiagonal(grid.nx, off[:-1], main, off[1:], pin_mean=True)

    def solve(self, rhs):
        phi = self.tri.solve(rhs)
        return phi - np.mean(phi)


def constant_solver(grid, coeff=1.0):
    return ColumnSolver(grid, np.full(grid.nz, coeff), np.full(grid.nz - 1, coeff))


def variable_operator(grid, inv_rho_face):
    """Return ``phi -> div(grad(phi) * inv_rho_face)``."""
    b1, b2 = inv_rho_face.u1, inv_rho_face.u2

    def apply(phi):
        gp = grad(grid, phi)
        return div(VectorField(grid, gp.u1 * b1, gp.u2 * b2))

    return apply


def _inverse_face_density(grid, rho):
    rf = face_average(grid, rho)
    return VectorField(grid, 1.0 / rf.u1, 1.0 / rf.u2)


def density_preconditioner(grid, rho):
    """Column solver with the x-averaged face coefficients ``1 / rho_face``."""
    ib = _inverse_face_density(grid, rho)
    return ColumnSolver(grid, ib.u1.mean(axis=1), ib.u2[1:-1].mean(axis=1))


def solve_variable_poisson(grid, rho, rhs, tol=DEFAULT_TOL, max_iter=DEFAULT_MAX_ITER,
                           x0=None, atol_inf=None, preconditioner=None):
    """Solve ``div(grad(phi) / rho) = rhs`` for mean-zero ``phi`` by PCG.

    Convergence: ``||r||_2 <= tol ||rhs||_2`` and, when ``atol_inf`` is given,
    ``max |r| <= atol_inf``.  An incompatible right-hand side has its mean
    removed with a warning.
    """
    rho = grid.check_scalar(rho)
    if np.min(rho) <= 0:
        raise SolverError("density must be positive")
    rhs = grid.check_scalar(rhs)
    area = grid.Lx * grid.h
    mean = integrate(grid, rhs) / area
    scale = max(float(np.abs(rhs).max()), 1e-300)
    # relative test with an absolute floor so roundoff on near-solenoidal data stays quiet
    if abs(mean) > max(1e-10 * scale, 1e-12):
        warnings.warn(f"incompatible Poisson data (mean {mean:.3g}); projecting it out", stacklevel=2)
    b = rhs - mean
    ib = _inverse_face_density(grid, rho)
    A = variable_operator(grid, ib)
    M = preconditioner or density_preconditioner(grid, rho)

    x = np.zeros(grid.shape) if x0 is None else np.array(x0, dtype=float)
    x -= np.mean(x)
    # CG on the SPD system (-A) x = -b; residual r = -b - (-A) x
    r = A(x) - b
    bnorm = np.sqrt(_dot(b, b))
    report = PoissonReport(0, 0.0, tol, mean)
    if bnorm == 0.0:
        return np.zeros(grid.shape), report

    def converged(r):
        rel = np.sqrt(_dot(r, r)) / bnorm
        ok = rel <= tol and (atol_inf is None or float(np.abs(r).max()) <= atol_inf)
        return ok, rel

    ok, rel = converged(r)
    if ok:
        report.final_residual = float(rel)
        return x, report
    z = -M.solve(r)
    p = z.copy()
    rz = _dot(r, z)
    for it in range(1, max_iter + 1):
        Ap = -A(p)
        alpha = rz / _dot(p, Ap)
        x += alpha * p
        r -= alpha * Ap
        ok, rel = converged(r)
        if ok:
            report.iterations, report.final_residual = it, float(rel)
            return x - np.mean(x), report
        z = -M.solve(r)
        rz_new = _dot(r, z)
        p = z + (rz_new / rz) * p
        rz = rz_new
    report.iterations, report.final_residual = max_iter, float(rel)
    raise SolverError(f"PCG did not converge in {max_iter} iterations (residual {rel:.3g})", report)


def project(u_star, rho, dt, tol=DEFAULT_TOL, tol_div=None, max_iter=DEFAULT_MAX_ITER, x0=None,
            preconditioner=None):
    """Variable-density projection ``u = u* - dt grad(phi) / rho``.

    Returns ``(u, grad(phi), phi, report)``.  ``u2`` on the walls is reset to
    exactly zero; ``phi`` is the (mean-zero) pressure of the step.
    """
    grid = u_star.grid
    w = u_star.copy()
    w.u2[0] = 0.0
    w.u2[-1] = 0.0
    rhs = div(w) / dt
    atol = None if tol_div is None else tol_div / dt
    phi, report = solve_variable_poisson(grid, rho, rhs, tol, max_iter, x0=x0, atol_inf=atol,
                                         preconditioner=preconditioner)
    gp = grad(grid, phi, w.bc)
    rf = face_average(grid, rho)
    u = VectorField(grid, w.u1 - dt * gp.u1 / rf.u1, w.u2 - dt * gp.u2 / rf.u2, w.bc)
    u.u2[0] = 0.0
    u.u2[-1] = 0.0
    return u, gp, phi, report


def helmholtz_decompose(v, solver=None):
    """Split ``v = w + grad(q)`` with ``div w = 0``, ``w.n = 0`` on walls, mean-zero ``q``.

    The wall-normal data of ``v`` is carried by the gradient part (inhomogeneous
    Neumann condition); the returned gradient field therefore equals
    ``v - w`` exactly, including wall rows.
    """
    grid = v.grid
    solver = solver or constant_solver(grid)
    # zero-flux interior problem: move the wall normal flux into the data
    vi = v.copy()
    vi.u2[0] = 0.0
    vi.u2[-1] = 0.0
    q = solver.solve(div(vi))
    gq = grad(grid, q, v.bc)
    w = VectorField(grid, vi.u1 - gq.u1, vi.u2 - gq.u2, v.bc)
    gq.u2[0] = v.u2[0]
    gq.u2[-1] = v.u2[-1]
    return w, q, gq


def orthogonality(w, gq):
    return abs(inner(w, gq))
