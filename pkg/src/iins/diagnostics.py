"""Energy ledgers, relaxation surrogates and time-series output.

All functionals are discrete quadratures built from :mod:`iins.grid`
operators.  :class:`Recorder` is a step hook for :func:`iins.solver.run`: it
accumulates the viscous dissipation trapezoidally on every step and stores a
:class:`DiagnosticsRecord` every ``sample_every`` steps.
"""
from __future__ import annotations

import csv
import math
import warnings
from dataclasses import asdict, dataclass, field, fields
from typing import List

import numpy as np

from .elliptic import constant_solver, helmholtz_decompose
from .grid import (VectorField, face_average, grad_norm_sq, inner, integrate,
                   to_centers, vnorm, weighted_sq)


@dataclass
class DiagnosticsRecord:
    t: float
    ke: float
    pe: float
    E: float
    diss_accum: float
    grad_u_l2: float
    ut_l2: float
    theta_l2sq: float
    E_gamma: float
    D_gamma: float
    rho_l2sq: float
    mass: float
    w_norm: float
    weak_max: float
    weak_momentum_max: float
    ln_ratio: float
    u_l2: float
    u_max: float
    rho_min: float
    rho_max: float
    weak_tests: List[float] = field(default_factory=list)


SCALAR_FIELDS = [f.name for f in fields(DiagnosticsRecord) if f.name != "weak_tests"]


# ---------------------------------------------------------------------------
# test bank for weak limits
# ---------------------------------------------------------------------------

@dataclass
class TestField:
    """``phi = a(x) s(z) e_c`` with ``s = sin^2(n pi z / h)`` (vanishing with its slope at the walls)."""

    __test__ = False    # not a pytest class

    m: int
    n: int
    trig: str       # "cos" or "sin"
    comp: int       # 1 or 2

    def _parts(self, grid, X, Z):
        k = 2 * np.pi * self.m / grid.Lx
        q = np.pi * self.n / grid.h
        if self.trig == "cos":
            a, ap, app = np.cos(k * X), -k * np.sin(k * X), -k * k * np.cos(k * X)
        else:
            a, ap, app = np.sin(k * X), k * np.cos(k * X), -k * k * np.sin(k * X)
        s = np.sin(q * Z) ** 2
        sp_ = q * np.sin(2 * q * Z)
        spp = 2 * q * q * np.cos(2 * q * Z)
        return a, ap, app, s, sp_, spp

    def _field(self, grid, which):
        out = []
        for comp, mesh in ((1, grid.xfaces()), (2, grid.zfaces())):
            if comp != self.comp:
                out.append(np.zeros(mesh[0].shape))
                continue
            a, ap, app, s, sp_, spp = self._parts(grid, *mesh)
            out.append(a * s if which == "value" else app * s + a * spp)
        return VectorField(grid, out[0], out[1])

    def value(self, grid):
        return self._field(grid, "value")

    def laplacian(self, grid):
        return self._field(grid, "lap")

    def divergence(self, grid):
        a, ap, app, s, sp_, spp = self._parts(grid, *grid.centers())
        return ap * s if self.comp == 1 else a * sp_


def default_test_bank():
    return [TestField(m, n, trig, c) for c in (1, 2) for n in (1, 2)
            for m in (1, 2) for trig in ("cos", "sin")]


class _Bank:
    """Sampled test fields for one grid."""

    def __init__(self, grid, bank):
        self.fields = bank
        self.values = [b.value(grid) for b in bank]
        self.laps = [b.laplacian(grid) for b in bank]
        self.divs = [b.divergence(grid) for b in bank]


def weak_convergence_surrogate(u, bank, grid=None):
    """``<lap u, phi_k> = <u, lap phi_k>`` for each test field (no boundary terms by support)."""
    grid = grid or u.grid
    b = bank if isinstance(bank, _Bank) else _Bank(grid, bank)
    return np.array([inner(u, lap) for lap in b.laps])


def weak_momentum(P, rho, gradf, bank):
    """``<grad P + rho grad f, phi_k>`` with the pressure derivative moved onto ``phi_k``."""
    grid = gradf.grid
    b = bank if isinstance(bank, _Bank) else _Bank(grid, bank)
    rf = face_average(grid, rho)
    buoy = VectorField(grid, rf.u1 * gradf.u1, rf.u2 * gradf.u2)
    return np.array([-integrate(grid, P * d) + inner(buoy, v) for d, v in zip(b.divs, b.values)])


# ---------------------------------------------------------------------------
# functionals
# ---------------------------------------------------------------------------

def ln_ratio(u, rho):
    """Logarithmic interpolation ratio; 0 for ``u = 0``."""
    grid = u.grid
    l2sq = inner(u, u)
    h1 = math.sqrt(l2sq + grad_norm_sq(u))
    if h1 == 0.0:
        return 0.0
    c1, c2 = to_centers(u)
    l4sq = math.sqrt(integrate(grid, rho ** 2 * (c1 ** 2 + c2 ** 2) ** 2))
    wl2 = math.sqrt(weighted_sq(u, rho))
    return l4sq / ((1.0 + wl2) * h1 * math.sqrt(math.log(2.0 + h1 * h1)))


def w_norm(rho, rho_s, gradf, solver=None):
    """``||P(varrho grad f)||`` with the perturbation averaged to faces."""
    grid = gradf.grid
    vf = face_average(grid, rho - rho_s)
    v = VectorField(grid, vf.u1 * gradf.u1, vf.u2 * gradf.u2)
    w, _, _ = helmholtz_decompose(v, solver)
    return vnorm(w)


class Recorder:
    """Step hook that keeps the ledgers for one run.

    Parameters
    ----------
    pot, profile:
        Potential and reference hydrostatic profile (``profile.rho_s`` defines
        the perturbation).
    params:
        Solver parameters; ``nu``, ``gamma`` and ``beta`` are read from it.
    sample_every:
        Sampling stride in steps.  Dissipation is accumulated on every step.
    """

    def __init__(self, pot, profile, params, sample_every=1, bank=None, initial=None,
                 diss_accum=0.0):
        self.pot = pot
        self.rho_s = profile.rho_s
        self.params = params
        self.sample_every = int(sample_every)
        grid = pot.grid
        self.bank = _Bank(grid, bank or default_test_bank())
        self.solver = constant_solver(grid)
        self.records: List[DiagnosticsRecord] = []
        self.diss_accum = float(diss_accum)
        self._last_gn = None
        self._last = None
        if initial is not None:
            self.records.append(self.sample(initial, None, 0.0))

    def sample(self, state, prev, dt):
        p = self.params
        grid = self.pot.grid
        f = self.pot.f
        u, rho = state.u, state.rho
        gn = grad_norm_sq(u)
        ke = 0.5 * weighted_sq(u, rho)
        pe = integrate(grid, (rho - self.rho_s) * f)
        theta = rho + p.gamma * f - p.beta
        th2 = integrate(grid, theta * theta)
        rf = integrate(grid, rho * f)
        ut = vnorm(u - prev.u) / dt if prev is not None and dt > 0 else 0.0
        weak = weak_convergence_surrogate(u, self.bank)
        mom = weak_momentum(state.P, rho, self.pot.gradf, self.bank)
        return DiagnosticsRecord(
            t=state.t, ke=ke, pe=pe, E=ke + pe, diss_accum=self.diss_accum,
            grad_u_l2=math.sqrt(gn), ut_l2=ut, theta_l2sq=th2,
            E_gamma=p.gamma * ke + 0.5 * th2, D_gamma=0.5 * th2 - p.gamma * rf,
            rho_l2sq=integrate(grid, rho * rho), mass=integrate(grid, rho),
            w_norm=w_norm(rho, self.rho_s, self.pot.gradf, self.solver),
            weak_max=float(np.abs(weak).max()), weak_momentum_max=float(np.abs(mom).max()),
            ln_ratio=ln_ratio(u, rho), u_l2=vnorm(u), u_max=u.max_abs(),
            rho_min=float(rho.min()), rho_max=float(rho.max()), weak_tests=[float(x) for x in weak])

    def __call__(self, prev, new, info):
        g0 = self._last_gn if self._last_gn is not None else grad_norm_sq(prev.u)
        g1 = grad_norm_sq(new.u)
        self.diss_accum += 0.5 * info.dt * self.params.nu * (g0 + g1)
        self._last_gn = g1
        self._last = (prev, info.dt)
        if self.sample_every > 0 and new.step % self.sample_every == 0:
            self.records.append(self.sample(new, prev, info.dt))

    def finalize(self, state):
        """Append a record for the final ``state`` unless it was just sampled."""
        if not self.records or self.records[-1].t != state.t:
            prev, dt = self._last if self._last is not None else (None, 0.0)
            self.records.append(self.sample(state, prev, dt))


# ---------------------------------------------------------------------------
# ledgers and verdicts
# ---------------------------------------------------------------------------

def _col(series, name):
    return np.array([getattr(r, name) for r in series])


def energy_identity_residual(series):
    """Max over samples of ``|E + diss - E(0)| / max(1, ke(0) + |pe(0)|)``."""
    r0 = series[0]
    scale = max(1.0, r0.ke + abs(r0.pe))
    e = _col(series, "E") + _col(series, "diss_accum")
    return float(np.max(np.abs(e - (r0.ke + r0.pe)))) / scale


def gamma_identity_residual(series, gamma, normalize=True):
    """Max over samples of ``|E_gamma + gamma diss - E_gamma(0)|``, relative to ``max(1, E_gamma(0))``."""
    r0 = series[0]
    e = _col(series, "E_gamma") + gamma * _col(series, "diss_accum")
    res = float(np.max(np.abs(e - r0.E_gamma)))
    return res / max(1.0, abs(r0.E_gamma)) if normalize else res


def dgamma_bookkeeping_check(series, gamma, beta):
    """Residual of ``D_gamma - D_gamma(0) = (R - R(0)) / 2 - beta (M - M(0))``.

    ``R`` is ``rho_l2sq`` and ``M`` the mass; the relation is algebraic, so the
    residual is roundoff only.  Relative to ``max(1, |D_gamma(0)|, R(0))``.
    """
    r0 = series[0]
    d = _col(series, "D_gamma") - r0.D_gamma
    rhs = 0.5 * (_col(series, "rho_l2sq") - r0.rho_l2sq) - beta * (_col(series, "mass") - r0.mass)
    scale = max(1.0, abs(r0.D_gamma), r0.rho_l2sq, abs(beta * r0.mass))
    return float(np.max(np.abs(d - rhs))) / scale


def settled(series, ratio=1e-3):
    ut = _col(series, "ut_l2")
    return bool(ut.max() == 0 or ut[-1] <= ratio * ut.max())


def theorem16_condition(series, gamma, beta):
    """Finite-time form of the linear-profile convergence criterion.

    ``lhs = 2 gamma (int varrho_0 f - int varrho_T f)``, ``rhs`` is the initial
    ``theta_l2sq`` and ``gap = lhs - rhs``.  The two discrete ledgers give
    ``gap + theta_l2sq(T) = rho_l2sq(T) - rho_l2sq(0)`` when mass is
    conserved, i.e. minus the variance lost in transport.
    """
    r0, rT = series[0], series[-1]
    lhs = 2.0 * gamma * (r0.pe - rT.pe)
    rhs = r0.theta_l2sq
    ok = settled(series)
    if not ok:
        warnings.warn("run has not settled; the linear-profile gap check is provisional", stacklevel=2)
    return {"lhs": lhs, "rhs": rhs, "gap": lhs - rhs, "theta_l2sq_end": rT.theta_l2sq,
            "variance_change": rT.rho_l2sq - r0.rho_l2sq, "settled": ok}


def decay_ratios(series):
    """End value over run maximum for each relaxation surrogate."""
    out = {}
    for name in ("grad_u_l2", "ut_l2", "weak_max", "w_norm"):
        c = _col(series, name)
        m = float(c.max())
        out[name] = float(c[-1]) / m if m > 0 else 0.0
    return out


def monotone_after_last_max(series, name="grad_u_l2", noise=1e-6):
    """True when ``name`` never rises by more than ``noise`` (relative to its max) after its last local maximum."""
    c = _col(series, name)
    if len(c) < 3:
        return True
    peaks = [i for i in range(1, len(c) - 1) if c[i] >= c[i - 1] and c[i] >= c[i + 1]]
    start = peaks[-1] if peaks else 0
    tail = np.diff(c[start:])
    return bool(np.all(tail <= noise * max(c.max(), 1e-300)))


# ---------------------------------------------------------------------------
# output
# ---------------------------------------------------------------------------

def _fmt(x):
    return repr(float(x)) if not math.isfinite(x) else f"{x:.17g}"


def write_csv(path, series):
    nweak = len(series[0].weak_tests) if series else 0
    header = SCALAR_FIELDS + [f"weak_{k}" for k in range(nweak)]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in series:
            d = asdict(r)
            w.writerow([_fmt(d[k]) for k in SCALAR_FIELDS] + [_fmt(x) for x in r.weak_tests])


def read_csv(path):
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    out = []
    for row in rows:
        weak = [float(row[k]) for k in sorted((k for k in row if k.startswith("weak_") and k[5:].isdigit()),
                                              key=lambda s: int(s[5:]))]
        vals = {k: float(row[k]) for k in SCALAR_FIELDS}
        out.append(DiagnosticsRecord(**vals, weak_tests=weak))
    return out


def write_report(path, items):
    """Plain ``key: value`` summary file, in insertion order."""
    with open(path, "w") as fh:
        for k, v in items.items():
            if isinstance(v, float):
                v = f"{v:.17g}"
            fh.write(f"{k}: {v}\n")


def read_report(path):
    out = {}
    with open(path) as fh:
        for line in fh:
            if ":" in line:
                k, v = line.split(":", 1)
                out[k.strip()] = v.strip()
    return out
