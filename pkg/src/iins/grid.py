"""Staggered (MAC) channel grid, field containers and discrete calculus.

The domain is ``[0, Lx) x (0, h)``, periodic in x and bounded by walls at
``z = 0`` and ``z = h``.  Storage conventions (all arrays are C-ordered with
x varying fastest):

* cell-centred scalars: shape ``(nz, nx)``, located at ``((i+1/2) dx, (k+1/2) dz)``
* horizontal velocity ``u1``: shape ``(nz, nx)``, on x-faces ``(i dx, (k+1/2) dz)``
* vertical velocity ``u2``: shape ``(nz + 1, nx)``, on z-faces ``((i+1/2) dx, j dz)``;
  rows ``0`` and ``nz`` are the walls.

Cell-centred scalars are plain ``numpy`` arrays; face data always travels in a
:class:`VectorField`, so a centre/face mix-up is caught by type rather than
by shape.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

NO_SLIP = "no-slip"
FREE_SLIP = "free-slip"
WALL_CONDITIONS = (NO_SLIP, FREE_SLIP)


class StaggeringError(TypeError):
    """Raised when an operator receives data on the wrong staggering site."""


def _rsum(a):
    # fixed-order reduction: per row, then over rows
    return float(np.sum(np.sum(a, axis=-1)))


@dataclass(frozen=True)
class Grid:
    nx: int
    nz: int
    Lx: float = 2.0 * np.pi
    h: float = 1.0

    def __post_init__(self):
        if int(self.nx) < 4 or int(self.nz) < 4:
            raise ValueError(f"grid needs nx, nz >= 4, got {self.nx}x{self.nz}")
        if not (self.Lx > 0 and self.h > 0):
            raise ValueError("Lx and h must be positive")
        object.__setattr__(self, "nx", int(self.nx))
        object.__setattr__(self, "nz", int(self.nz))
        object.__setattr__(self, "Lx", float(self.Lx))
        object.__setattr__(self, "h", float(self.h))

    @property
    def dx(self) -> float:
        return self.Lx / self.nx

    @property
    def dz(self) -> float:
        return self.h / self.nz

    @property
    def cell_area(self) -> float:
        return self.dx * self.dz

    @property
    def shape(self):
        return (self.nz, self.nx)

    # coordinates -----------------------------------------------------------
    @property
    def xc(self):
        return (np.arange(self.nx) + 0.5) * self.dx

    @property
    def xf(self):
        return np.arange(self.nx) * self.dx

    @property
    def zc(self):
        return (np.arange(self.nz) + 0.5) * self.dz

    @property
    def zf(self):
        return np.arange(self.nz + 1) * self.dz

    def centers(self):
        """``(X, Z)`` meshes of cell centres, each of shape ``(nz, nx)``."""
        return np.meshgrid(self.xc, self.zc)

    def xfaces(self):
        return np.meshgrid(self.xf, self.zc)

    def zfaces(self):
        return np.meshgrid(self.xc, self.zf)

    def zeros(self):
        return np.zeros(self.shape)

    def check_scalar(self, s):
        s = np.asarray(s)
        if isinstance(s, VectorField) or s.shape != self.shape:
            raise StaggeringError(f"expected cell-centred array of shape {self.shape}, got {s.shape}")
        return s


@dataclass
class VectorField:
    """Face-centred velocity-like field with its wall condition."""

    grid: Grid
    u1: np.ndarray
    u2: np.ndarray
    bc: str = NO_SLIP

    def __post_init__(self):
        g = self.grid
        self.u1 = np.asarray(self.u1, dtype=float)
        self.u2 = np.asarray(self.u2, dtype=float)
        if self.u1.shape != (g.nz, g.nx) or self.u2.shape != (g.nz + 1, g.nx):
            raise StaggeringError(
                f"u1 must be {(g.nz, g.nx)} and u2 {(g.nz + 1, g.nx)}, "
                f"got {self.u1.shape} and {self.u2.shape}"
            )
        if self.bc not in WALL_CONDITIONS:
            raise ValueError(f"unknown wall condition {self.bc!r}")

    @classmethod
    def zeros(cls, grid, bc=NO_SLIP):
        return cls(grid, np.zeros((grid.nz, grid.nx)), np.zeros((grid.nz + 1, grid.nx)), bc)

    def copy(self):
        return VectorField(self.grid, self.u1.copy(), self.u2.copy(), self.bc)

    def with_bc(self, bc):
        return VectorField(self.grid, self.u1, self.u2, bc)

    def __add__(self, other):
        return VectorField(self.grid, self.u1 + other.u1, self.u2 + other.u2, self.bc)

    def __sub__(self, other):
        return VectorField(self.grid, self.u1 - other.u1, self.u2 - other.u2, self.bc)

    def __mul__(self, c):
        return VectorField(self.grid, self.u1 * c, self.u2 * c, self.bc)

    __rmul__ = __mul__

    def __neg__(self):
        return self * -1.0

    def wall_normal_max(self):
        return float(max(np.abs(self.u2[0]).max(), np.abs(self.u2[-1]).max()))

    def max_abs(self):
        return float(max(np.abs(self.u1).max(), np.abs(self.u2).max()))


# ---------------------------------------------------------------------------
# quadrature and norms
# ---------------------------------------------------------------------------

def integrate(grid, s):
    """Midpoint rule over the channel."""
    s = grid.check_scalar(s)
    return _rsum(s) * grid.cell_area


def lp_norm(grid, s, p=2.0):
    """Discrete L^p norm of cell-centred data; ``p = inf`` gives the max norm."""
    if not p >= 1:
        raise ValueError(f"lp_norm needs p >= 1, got {p}")
    s = grid.check_scalar(s)
    if np.isinf(p):
        return float(np.abs(s).max())
    return (_rsum(np.abs(s) ** p) * grid.cell_area) ** (1.0 / p)


def _zface_weights(grid):
    w = np.ones((grid.nz + 1, 1))
    w[0] = w[-1] = 0.5
    return w


def inner(a, b):
    """Face inner product; wall rows of ``u2`` carry half weight."""
    g = a.grid
    w = _zface_weights(g)
    return (_rsum(a.u1 * b.u1) + _rsum(w * a.u2 * b.u2)) * g.cell_area


def vnorm(v):
    return np.sqrt(inner(v, v))


def weighted_sq(v, rho):
    """``sum rho_face |v|^2`` over faces, i.e. the discrete ``||sqrt(rho) v||^2``."""
    g = v.grid
    rf = face_average(g, rho)
    w = _zface_weights(g)
    return (_rsum(rf.u1 * v.u1 ** 2) + _rsum(w * rf.u2 * v.u2 ** 2)) * g.cell_area


# ---------------------------------------------------------------------------
# differential operators
# ---------------------------------------------------------------------------

def face_average(grid, s):
    """Arithmetic average of a centred scalar onto faces (walls take the adjacent cell)."""
    s = grid.check_scalar(s)
    a1 = 0.5 * (s + np.roll(s, 1, axis=1))
    a2 = np.empty((grid.nz + 1, grid.nx))
    a2[1:-1] = 0.5 * (s[1:] + s[:-1])
    a2[0] = s[0]
    a2[-1] = s[-1]
    return VectorField(grid, a1, a2)


def grad(grid, s, bc=NO_SLIP):
    """Centred differences centres -> faces; the wall-normal component is zero."""
    s = grid.check_scalar(s)
    g1 = (s - np.roll(s, 1, axis=1)) / grid.dx
    g2 = np.zeros((grid.nz + 1, grid.nx))
    g2[1:-1] = (s[1:] - s[:-1]) / grid.dz
    return VectorField(grid, g1, g2, bc)


def div(v):
    """Faces -> centres.  Wall fluxes in ``u2[0]`` and ``u2[-1]`` are included."""
    if not isinstance(v, VectorField):
        raise StaggeringError("div expects a VectorField")
    g = v.grid
    return (np.roll(v.u1, -1, axis=1) - v.u1) / g.dx + (v.u2[1:] - v.u2[:-1]) / g.dz


def laplacian(grid, s):
    """Five-point Laplacian with homogeneous Neumann walls (``div o grad``)."""
    return div(grad(grid, s))


def _u1_ghosts(v):
    """``u1`` padded with one ghost row below and above according to the wall condition."""
    sign = -1.0 if v.bc == NO_SLIP else 1.0
    return np.vstack([sign * v.u1[:1], v.u1, sign * v.u1[-1:]])


def vector_laplacian(v):
    """Component-wise viscous operator; symmetric negative semi-definite for either wall condition."""
    g = v.grid
    idx2, idz2 = 1.0 / g.dx ** 2, 1.0 / g.dz ** 2
    u = v.u1
    up = _u1_ghosts(v)
    l1 = (np.roll(u, -1, axis=1) - 2 * u + np.roll(u, 1, axis=1)) * idx2 + (up[2:] - 2 * u + up[:-2]) * idz2
    w = v.u2
    l2 = np.zeros_like(w)
    wi = w[1:-1]
    l2[1:-1] = (np.roll(wi, -1, axis=1) - 2 * wi + np.roll(wi, 1, axis=1)) * idx2 + (w[2:] - 2 * wi + w[:-2]) * idz2
    return VectorField(g, l1, l2, v.bc)


def grad_norm_sq(v):
    """``||grad u||^2`` from the same face differences as :func:`vector_laplacian`.

    For ``u2 = 0`` at the walls this equals ``-inner(vector_laplacian(v), v)``
    to roundoff, so the discrete viscous dissipation is exactly this quantity.
    """
    g = v.grid
    u = v.u1
    dxu = (np.roll(u, -1, axis=1) - u) / g.dx
    up = _u1_ghosts(v)
    dzu = (up[1:] - up[:-1]) / g.dz              # nz+1 rows; wall rows are half cells
    w = v.u2
    dxw = (np.roll(w[1:-1], -1, axis=1) - w[1:-1]) / g.dx
    dzw = (w[1:] - w[:-1]) / g.dz
    wz = _zface_weights(g)
    total = _rsum(dxu ** 2) + _rsum(wz * dzu ** 2) + _rsum(dxw ** 2) + _rsum(dzw ** 2)
    return total * g.cell_area


def to_centers(v):
    """Average face components to cell centres; returns ``(c1, c2)``."""
    c1 = 0.5 * (v.u1 + np.roll(v.u1, -1, axis=1))
    c2 = 0.5 * (v.u2[1:] + v.u2[:-1])
    return c1, c2


def from_streamfunction(grid, psi_nodes, bc=NO_SLIP):
    """Discretely divergence-free field from a stream function on cell corners.

    ``psi_nodes`` has shape ``(nz + 1, nx)`` at ``(i dx, j dz)``;
    ``u1 = d psi / dz`` and ``u2 = -d psi / dx``.  Wall rows of ``psi`` must be
    constant along x for the wall-normal velocity to vanish.
    """
    psi = np.asarray(psi_nodes, dtype=float)
    if psi.shape != (grid.nz + 1, grid.nx):
        raise StaggeringError(f"stream function must have shape {(grid.nz + 1, grid.nx)}")
    u1 = (psi[1:] - psi[:-1]) / grid.dz
    u2 = -(np.roll(psi, -1, axis=1) - psi) / grid.dx
    return VectorField(grid, u1, u2, bc)
