"""Normal-mode stability of a resting stratification in the free-slip channel.

Perturbations ``(u, varrho) ~ exp(i k x + Lambda t)`` of the linearised
system are written with a stream function, ``u1 = psi'`` and
``u2 = -i k psi``, which eliminates the pressure.  With ``varrho = i r`` the
problem is real:

    Lambda L psi = -nu M^2 psi + k g r,      Lambda r = k g delta psi,

where ``M = D^2 - k^2`` (Dirichlet, so ``M^2`` carries ``psi = psi'' = 0``),
``L psi = -(rho_s psi')' + k^2 rho_s psi`` and ``delta = d rho_s / d f``
(positive where heavy fluid lies above light).  The z-grid is the corner
grid of the MAC solver: ``psi`` and ``r`` live on the ``nz_modes - 1``
interior nodes, ``rho_s`` on the cell centres between them.

Eliminating ``r`` gives the exact discrete identity

    Lambda^2 <L psi, psi> + Lambda nu |M psi|^2 - k^2 g^2 sum delta |psi|^2 = 0,

which is what :func:`variational_residual` evaluates.
"""
from __future__ import annotations

import csv
import logging
import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
import scipy.linalg as sla

log = logging.getLogger(__name__)


class AssemblyError(ValueError):
    pass


class EigenError(RuntimeError):
    pass


@dataclass
class StabilityProblem:
    """Data of one normal-mode problem.

    ``rho_half`` holds ``rho_s`` at the ``nz_modes`` cell centres and
    ``delta_nodes`` holds ``delta`` at the ``nz_modes - 1`` interior nodes.
    """

    nz_modes: int
    k: float
    nu: float
    g: float
    rho_half: np.ndarray
    delta_nodes: np.ndarray
    h: float = 1.0

    def __post_init__(self):
        self.rho_half = np.asarray(self.rho_half, dtype=float)
        self.delta_nodes = np.asarray(self.delta_nodes, dtype=float)
        if self.rho_half.shape != (self.nz_modes,) or self.delta_nodes.shape != (self.nz_modes - 1,):
            raise AssemblyError("profile samples do not match nz_modes")
        if not self.k > 0:
            raise AssemblyError("wavenumber must be positive")
        if np.min(self.rho_half) <= 0:
            raise AssemblyError("rho_s must be positive")

    @property
    def dz(self):
        return self.h / self.nz_modes

    @property
    def z_nodes(self):
        return np.arange(1, self.nz_modes) * self.dz

    def with_k(self, k):
        return StabilityProblem(self.nz_modes, k, self.nu, self.g, self.rho_half, self.delta_nodes, self.h)


def problem_from_profile(nz_modes, k, nu, g, F: Callable, dF: Callable, h=1.0):
    """Sample ``rho_s = F(f)`` and ``delta = dF(f)`` for the uniform potential ``f = g z``."""
    dz = h / nz_modes
    zc = (np.arange(nz_modes) + 0.5) * dz
    zn = np.arange(1, nz_modes) * dz
    return StabilityProblem(nz_modes, k, nu, g, np.asarray(F(g * zc)) * np.ones(nz_modes),
                            np.asarray(dF(g * zn)) * np.ones(nz_modes - 1), h)


def constant_problem(nz_modes, k, nu, g, rho_bar, delta0, h=1.0):
    return StabilityProblem(nz_modes, k, nu, g, np.full(nz_modes, float(rho_bar)),
                            np.full(nz_modes - 1, float(delta0)), h)


@dataclass
class Operators:
    M: np.ndarray
    L: np.ndarray
    A: np.ndarray
    B: np.ndarray


def assemble(p: StabilityProblem) -> Operators:
    """Dense ``A v = Lambda B v`` with ``v = (psi, r)`` on the interior nodes."""
    n = p.nz_modes - 1
    dz2 = p.dz ** 2
    D2 = (np.diag(np.full(n - 1, 1.0), -1) - 2 * np.eye(n) + np.diag(np.full(n - 1, 1.0), 1)) / dz2
    M = D2 - p.k ** 2 * np.eye(n)
    rh = p.rho_half
    rn = 0.5 * (rh[1:] + rh[:-1])
    L = np.diag((rh[1:] + rh[:-1]) / dz2 + p.k ** 2 * rn)
    L -= np.diag(rh[1:-1] / dz2, 1) + np.diag(rh[1:-1] / dz2, -1)
    kg = p.k * p.g
    A = np.block([[-p.nu * (M @ M), kg * np.eye(n)], [kg * np.diag(p.delta_nodes), np.zeros((n, n))]])
    B = np.block([[L, np.zeros((n, n))], [np.zeros((n, n)), np.eye(n)]])
    return Operators(M, L, A, B)


@dataclass
class StabilityResult:
    k: float
    Lambda: complex
    psi: np.ndarray
    mode_u1: np.ndarray        # at cell centres
    mode_u2: np.ndarray        # at interior nodes
    mode_rho: np.ndarray       # at interior nodes
    variational_residual: float
    spectrum: np.ndarray = field(default_factory=lambda: np.zeros(0, complex), repr=False)


def variational_residual(p: StabilityProblem, ops: Operators, lam, psi):
    """Relative residual of the energy identity for the pair ``(lam, psi)``."""
    Lq = np.vdot(psi, ops.L @ psi).real * p.dz
    Mq = np.linalg.norm(ops.M @ psi) ** 2 * p.dz
    Dq = np.sum(p.delta_nodes * np.abs(psi) ** 2) * p.dz
    k2g2 = (p.k * p.g) ** 2
    r = lam * lam * Lq + lam * p.nu * Mq - k2g2 * Dq
    scale = abs(lam) ** 2 * Lq + abs(lam) * p.nu * Mq + k2g2 * abs(Dq)
    return float(abs(r) / (scale + 1e-300))


def _frozen(lam, v, n, tol):
    """Pure density modes (``Lambda = 0`` with ``psi = 0``) that exist where ``delta`` vanishes."""
    return abs(lam) <= tol or np.linalg.norm(v[:n]) <= 1e-12 * np.linalg.norm(v)


def _solve(p):
    ops = assemble(p)
    n = p.nz_modes - 1
    try:
        lam, V = sla.eig(ops.A, ops.B)
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise EigenError(f"eigen-solve failed at k={p.k}: {exc}") from exc
    finite = np.isfinite(lam)
    tol = 1e-10 * max(1.0, float(np.max(np.abs(lam[finite]))) if finite.any() else 1.0)
    keep = [j for j in range(len(lam)) if finite[j] and not _frozen(lam[j], V[:, j], n, tol)]
    if not keep:
        raise EigenError(f"no admissible eigenpairs at k={p.k}")
    keep = np.array(keep)
    order = keep[np.lexsort((lam[keep].imag, lam[keep].real))[::-1]]
    return ops, lam, V, order


def _refine(ops, lam, v, steps=2):
    """Shifted inverse iteration on one eigenpair.

    QZ vectors of clustered slow modes carry errors near 1e-8; two steps
    bring them to roundoff.  The eigenvalue is updated by the ``B``-weighted
    quotient.
    """
    for _ in range(steps):
        try:
            x = sla.solve(ops.A - lam * ops.B, ops.B @ v)
        except (np.linalg.LinAlgError, ValueError):
            break
        if not np.all(np.isfinite(x)):
            break
        v = x / np.linalg.norm(x)
        Bv = ops.B @ v
        lam = np.vdot(Bv, ops.A @ v) / np.vdot(Bv, Bv)
    return lam, v


def _result(p, ops, lam, V, j, spectrum):
    n = p.nz_modes - 1
    with warnings.catch_warnings():
        # the shifted matrix is singular to working precision by design
        warnings.simplefilter("ignore", sla.LinAlgWarning)
        lj, v = _refine(ops, complex(lam[j]), V[:, j].astype(complex))
    lj = complex(lj)
    psi = v[:n]
    r = v[n:]
    # fix the phase so the largest psi entry is real and positive
    m = np.argmax(np.abs(psi))
    ph = np.abs(psi[m]) / psi[m]
    psi, r = psi * ph / np.abs(psi[m]), r * ph / np.abs(psi[m])
    if abs(lj.imag) <= 1e-12 * max(1.0, abs(lj)):
        psi, r = psi.real.astype(float), r.real.astype(float)
        lj = complex(lj.real, 0.0)
    full = np.concatenate([[0.0], psi, [0.0]])
    u1 = (full[1:] - full[:-1]) / p.dz
    res = variational_residual(p, ops, lj, psi)
    return StabilityResult(p.k, lj, psi, u1, -1j * p.k * psi, 1j * r, res, spectrum)


def growth_rate(p: StabilityProblem, which: int = 0) -> StabilityResult:
    """Eigenpair with the largest ``Re Lambda`` (ties broken by the larger ``Im Lambda``).

    ``which = j`` returns the ``j``-th in that order instead.
    """
    ops, lam, V, order = _solve(p)
    return _result(p, ops, lam, V, order[which], lam[order])


def vertical_mode(p: StabilityProblem, n: int = 1) -> StabilityResult:
    """Eigenpair whose stream function is closest in shape to ``sin(n pi z / h)``.

    Closeness is the normalised overlap with the sine; among equally close
    modes the least damped wins.  Only modes with ``Im Lambda >= 0`` are considered, so a damped oscillatory
    pair is represented once.
    """
    ops, lam, V, order = _solve(p)
    m = p.nz_modes - 1
    ref = np.sin(n * np.pi * p.z_nodes / p.h)
    ref /= np.linalg.norm(ref)
    best, score = None, -1.0
    for j in order:
        if lam[j].imag < -1e-12 * max(1.0, abs(lam[j])):
            continue
        psi = V[:m, j]
        c = abs(np.vdot(ref, psi)) / np.linalg.norm(psi)
        if c > score + 1e-9:
            best, score = j, c
    return _result(p, ops, lam, V, best, lam[order])


def dispersion_scan(template: StabilityProblem, ks, csv_path: Optional[str] = None):
    """Independent solves for each ``k``; failures are recorded as ``None`` and the scan continues."""
    out = []
    for k in ks:
        try:
            out.append(growth_rate(template.with_k(float(k))))
        except (EigenError, AssemblyError) as exc:
            log.warning("k=%g skipped: %s", k, exc)
            out.append(None)
    if csv_path:
        write_scan(csv_path, ks, out)
    return out


def most_unstable(results):
    best = None
    for r in results:
        if r is not None and (best is None or r.Lambda.real > best.Lambda.real):
            best = r
    return best


def write_scan(path, ks, results):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["k", "ReLambda", "ImLambda", "residual"])
        for k, r in zip(ks, results):
            if r is None:
                w.writerow([f"{float(k):.17g}", "nan", "nan", "nan"])
            else:
                w.writerow([f"{r.k:.17g}", f"{r.Lambda.real:.17g}", f"{r.Lambda.imag:.17g}",
                            f"{r.variational_residual:.17g}"])


# ---------------------------------------------------------------------------
# analytic references
# ---------------------------------------------------------------------------

def constant_coefficient_rate(k, n, nu, g, rho_bar, delta0, h=1.0):
    """Largest root of ``rho Lambda^2 + nu K^2 Lambda - delta g^2 k^2 / K^2 = 0`` for the mode ``sin(n pi z / h)``."""
    K2 = k * k + (n * math.pi / h) ** 2
    a, b, c = rho_bar, nu * K2, -delta0 * g * g * k * k / K2
    disc = complex(b * b - 4 * a * c)
    return (-b + disc ** 0.5) / (2 * a)


def discrete_constant_rate(nz_modes, k, n, nu, g, rho_bar, delta0, h=1.0):
    """Same dispersion relation with the discrete eigenvalues of ``D^2``."""
    dz = h / nz_modes
    lam_d2 = (2.0 / dz * math.sin(n * math.pi * dz / (2 * h))) ** 2
    K2 = k * k + lam_d2
    a, b, c = rho_bar, nu * K2, -delta0 * g * g * k * k / K2
    disc = complex(b * b - 4 * a * c)
    return (-b + disc ** 0.5) / (2 * a)


def asymptotic_rate(g, delta0, rho_bar):
    """Inviscid large-``k`` limit ``g sqrt(delta0 / rho_bar)``."""
    return g * math.sqrt(delta0 / rho_bar)


def richardson_ratio(l1, l2, l3):
    """``(L(n) - L(2n)) / (L(2n) - L(4n))``; about 4 for a second-order method."""
    return (l1 - l2) / (l2 - l3)


# ---------------------------------------------------------------------------
# coupling to the nonlinear solver
# ---------------------------------------------------------------------------

def seed_fields(grid, result: StabilityResult, amplitude, bc="free-slip"):
    """MAC velocity and density perturbation of a mode, ``||u|| = amplitude``.

    The real part of ``psi_j e^{ikx}`` on the cell corners gives an exactly
    divergence-free velocity; the density perturbation is the real part of
    ``varrho_j e^{ikx}`` averaged from the nodes to the cell centres.
    """
    from .grid import from_streamfunction, vnorm

    if grid.nz != len(result.psi) + 1:
        raise ValueError("mode resolution must match the grid (nz_modes == nz)")
    psi = np.concatenate([[0.0], result.psi, [0.0]]).astype(complex)
    rho = np.concatenate([[0.0], result.mode_rho, [0.0]]).astype(complex)
    u = from_streamfunction(grid, np.real(psi[:, None] * np.exp(1j * result.k * grid.xf)[None, :]), bc)
    rc = 0.5 * (rho[1:] + rho[:-1])
    varrho = np.real(rc[:, None] * np.exp(1j * result.k * grid.xc)[None, :])
    s = amplitude / vnorm(u)
    return u * s, varrho * s


def measured_growth_rate(t, norm, lo, hi):
    """Least-squares slope of ``log(norm)`` over the first contiguous stretch with ``lo <= norm <= hi``."""
    t = np.asarray(t, dtype=float)
    y = np.asarray(norm, dtype=float)
    inside = (y >= lo) & (y <= hi)
    idx = np.flatnonzero(inside)
    if len(idx) < 3:
        raise ValueError("too few samples in the growth window")
    # first contiguous run
    br = np.flatnonzero(np.diff(idx) > 1)
    idx = idx[: br[0] + 1] if len(br) else idx
    if len(idx) < 3:
        raise ValueError("too few samples in the growth window")
    slope, _ = np.polyfit(t[idx], np.log(y[idx]), 1)
    return float(slope), (float(t[idx[0]]), float(t[idx[-1]]))
