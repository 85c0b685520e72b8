"""Bihari-Gronwall bounds and a Barbalat-style decay detector.

For a positive nondecreasing ``w`` and ``G(z) = int_{u0}^{z} ds / w(s)``, a
function with ``y(t) <= a + int_0^t g(s) w(y(s)) ds`` obeys

    y(t) <= G^{-1}(G(a) + int_0^t g),

with equality for the solution of ``y' = g(t) w(y)``, ``y(0) = a``.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy import integrate as spi
from scipy import optimize as spo

CUTOFF = 1e12


class BihariDomainError(ValueError):
    pass


class BihariOverflowError(OverflowError):
    """``G^{-1}`` exceeded :data:`CUTOFF`: ``w`` grows too slowly to reach the requested level."""


BUILTIN_W = {
    "linear": lambda s: s,
    "s_log": lambda s: s * np.log(2.0 + s),
    "shifted_log": lambda s: (2.0 + s) * np.log(2.0 + s),
    "sqrt_plus_one": lambda s: np.sqrt(s) + 1.0,
}


def builtin_w(name):
    try:
        return BUILTIN_W[name]
    except KeyError:
        raise KeyError(f"unknown w {name!r}; builtins are {sorted(BUILTIN_W)}") from None


@dataclass
class BihariSpec:
    """Data of one bound: ``a >= u0 > 0``, nonlinearity ``w`` and samples ``(t, g)``."""

    a: float
    u0: float
    w: Callable
    t: Optional[np.ndarray] = None
    g: Optional[np.ndarray] = None

    def __post_init__(self):
        if not self.u0 > 0:
            raise BihariDomainError("u0 must be positive")
        if self.a < self.u0:
            raise BihariDomainError("a must satisfy a >= u0")
        if isinstance(self.w, str):
            self.w = builtin_w(self.w)
        if self.t is not None:
            self.t = np.asarray(self.t, dtype=float)
            self.g = np.asarray(self.g, dtype=float)
            if self.t.shape != self.g.shape or np.any(np.diff(self.t) < 0):
                raise BihariDomainError("g must be sampled on nondecreasing times")
            if np.any(self.g < 0):
                raise BihariDomainError("g must be nonnegative")


def G_of(spec, z):
    """``int_{u0}^{z} ds / w(s)`` by adaptive quadrature in ``log s``."""
    if z < spec.u0:
        raise BihariDomainError(f"G is defined for z >= u0 = {spec.u0}, got {z}")
    if z == spec.u0:
        return 0.0
    w = spec.w

    def integrand(v):
        s = math.exp(v)
        return s / float(w(s))

    lo, hi = math.log(spec.u0), math.log(z)
    # split long ranges so the adaptive rule sees the curvature of 1/w
    edges = np.linspace(lo, hi, max(2, int(math.ceil(hi - lo)) + 1))
    total = 0.0
    for x0, x1 in zip(edges[:-1], edges[1:]):
        val, _ = spi.quad(integrand, x0, x1, epsabs=0.0, epsrel=1e-13, limit=200)
        total += val
    return total


def G_inverse(spec, y):
    """Inverse of :func:`G_of`; ``y = 0`` gives ``u0``."""
    if y < 0:
        raise BihariDomainError("G_inverse needs y >= 0")
    if y == 0:
        return spec.u0
    lo, hi = spec.u0, 2.0 * spec.u0
    while True:
        ghi = G_of(spec, hi)
        if ghi >= y:
            break
        if hi >= CUTOFF:
            raise BihariOverflowError(f"G^-1({y}) exceeds {CUTOFF:g}")
        lo = hi
        hi = min(2.0 * hi, CUTOFF)
    return spo.brentq(lambda z: G_of(spec, z) - y, lo, hi, xtol=1e-300, rtol=4 * np.finfo(float).eps, maxiter=500)


def cumulative_trapezoid(t, g):
    out = np.zeros(len(t))
    if len(t) > 1:
        out[1:] = np.cumsum(0.5 * (g[1:] + g[:-1]) * np.diff(t))
    return out


def cumulative_integral(t, g):
    """``int_0^{t_i} g`` by the cumulative Simpson rule (trapezoid below three samples)."""
    if len(t) < 3:
        return cumulative_trapezoid(t, g)
    return spi.cumulative_simpson(g, x=t, initial=0.0)


def bihari_bound(spec):
    """``G^{-1}(G(a) + int_0^{t_i} g)`` at every sample time."""
    if spec.t is None:
        raise BihariDomainError("bihari_bound needs sampled g")
    base = G_of(spec, spec.a)
    ig = cumulative_integral(spec.t, spec.g)
    return np.array([G_inverse(spec, base + v) if v > 0 else spec.a for v in ig])


def divergence_suspect(spec, lo=1e6, hi=1e9):
    """Heuristic: True when ``int ds / w`` barely grows between ``lo`` and ``hi`` (looks convergent)."""
    a = G_of(spec, max(lo, spec.u0))
    b = G_of(spec, max(hi, spec.u0))
    return (b - a) <= 1e-6 * max(1.0, a)


def check_divergence(spec):
    if divergence_suspect(spec):
        warnings.warn("int ds/w(s) appears convergent; the Bihari bound may not apply", stacklevel=2)
        return False
    return True


def ode_oracle(a, w, gfun, t):
    """High-order adaptive solution of ``y' = g(t) w(y)``, ``y(t_0) = a``, at the times ``t``."""
    t = np.asarray(t, dtype=float)
    sol = spi.solve_ivp(lambda s, y: [gfun(s) * float(w(y[0]))], (t[0], t[-1]), [a],
                        method="DOP853", t_eval=t, rtol=1e-12, atol=1e-14)
    if not sol.success:
        raise RuntimeError(sol.message)
    return sol.y[0]


def random_spec(rng, n=2001, t_end=5.0):
    """Random ``(spec, gfun)`` pair from the documented generator.

    ``w`` is a builtin, ``a`` uniform in ``[0.5, 3]``, ``u0 = a * U(0.2, 1)``,
    and ``g = c exp(-lam t)`` or ``c / (1 + t)^2`` with ``c`` in ``[0.01, 0.3]``.
    """
    name = sorted(BUILTIN_W)[int(rng.integers(len(BUILTIN_W)))]
    a = float(rng.uniform(0.5, 3.0))
    u0 = a * float(rng.uniform(0.2, 1.0))
    c = float(rng.uniform(0.01, 0.3))
    if rng.random() < 0.5:
        lam = float(rng.uniform(0.2, 2.0))
        gfun = lambda s, c=c, lam=lam: c * math.exp(-lam * s)
    else:
        gfun = lambda s, c=c: c / (1.0 + s) ** 2
    t = np.linspace(0.0, t_end, n)
    g = np.array([gfun(s) for s in t])
    return BihariSpec(a, u0, BUILTIN_W[name], t, g), gfun, name


def decay_detect(t, y, h=None, C=0.0, g=None, q=None, tol=1e-3, tail=0.5, tail_share=0.01):
    """Check the computable hypotheses of the Barbalat-type decay lemma on samples.

    Parameters
    ----------
    t, y : array_like
        Sample times and values of ``y >= 0``.
    h : array_like, optional
        Companion series that must stay bounded (finite).
    C : float
        Additive constant of the slope envelope ``|y'| <= g q(y) + C``.
    g, q : optional
        Envelope coefficient samples and function; omitted means the envelope
        is ``C`` alone when ``C > 0`` and the check is skipped otherwise.
    tol : float
        Threshold on the maximum of ``y`` over the last 10 % of samples.

    ``int y dt`` counts as finite when the last ``tail`` fraction of the time
    window contributes at most ``tail_share`` of the whole integral.
    """
    t = np.asarray(t, dtype=float)
    y = np.asarray(y, dtype=float)
    if len(t) < 10 or len(t) != len(y):
        raise ValueError("decay_detect needs at least 10 matching samples")
    if np.any(y < 0):
        raise ValueError("y must be nonnegative")
    cum = cumulative_trapezoid(t, y)
    total = float(cum[-1])
    t_mid = t[0] + (1 - tail) * (t[-1] - t[0])
    tail_part = total - float(np.interp(t_mid, t, cum))
    integrable = total == 0.0 or tail_part <= tail_share * total
    slope = np.abs(np.diff(y) / np.diff(t))
    if g is not None or C > 0:
        env = C + (np.zeros(len(t)) if g is None else np.asarray(g) * (q(y) if q else y))
        env_mid = np.maximum(env[1:], env[:-1])
        envelope_ok = bool(np.all(slope <= env_mid * (1 + 1e-9) + 1e-300))
    else:
        envelope_ok = True
    h_ok = True if h is None else bool(np.all(np.isfinite(np.asarray(h, dtype=float))))
    n_tail = max(1, int(math.ceil(0.1 * len(y))))
    tail_max = float(np.max(y[-n_tail:]))
    ok = bool(integrable and envelope_ok and h_ok)
    return {"hypotheses_ok": ok, "integral": total, "tail_integral": tail_part,
            "integrable": bool(integrable), "envelope_ok": envelope_ok, "h_bounded": h_ok,
            "max_slope": float(slope.max()), "tail_max": tail_max,
            "verdict": "decayed" if ok and tail_max <= tol else "not-decayed"}
