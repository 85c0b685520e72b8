import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from iins import bihari as bh


def test_G_closed_forms():
    lin = bh.BihariSpec(2.0, 0.5, "linear")
    assert bh.G_of(lin, 3.0) == pytest.approx(math.log(6.0), rel=1e-13)
    sl = bh.BihariSpec(1.0, 1.0, "shifted_log")
    # d/ds log log(2 + s) = 1 / ((2 + s) log(2 + s))
    exact = math.log(math.log(12.0)) - math.log(math.log(3.0))
    assert bh.G_of(sl, 10.0) == pytest.approx(exact, rel=1e-13)
    sq = bh.BihariSpec(1.0, 1.0, "sqrt_plus_one")
    # int ds / (sqrt s + 1) = 2 (sqrt s - log(1 + sqrt s))
    F = lambda s: 2 * (math.sqrt(s) - math.log1p(math.sqrt(s)))
    assert bh.G_of(sq, 50.0) == pytest.approx(F(50.0) - F(1.0), rel=1e-12)


@settings(max_examples=30, deadline=None)
@given(name=st.sampled_from(sorted(bh.BUILTIN_W)), z=st.floats(1.0, 1e5))
def test_G_inverse_roundtrip(name, z):
    spec = bh.BihariSpec(1.0, 1.0, name)
    assert bh.G_inverse(spec, bh.G_of(spec, z)) == pytest.approx(z, rel=1e-11)


def test_gronwall_closed_form():
    t = np.linspace(0, 3, 3001)
    g = 0.5 + 0.2 * np.sin(t)
    spec = bh.BihariSpec(1.5, 1.0, "linear", t, g)
    exact = 1.5 * np.exp(0.5 * t + 0.2 * (1 - np.cos(t)))
    # the quadrature of g is the only approximation
    assert np.max(np.abs(bh.bihari_bound(spec) / exact - 1)) <= 1e-8


def test_equality_case_matches_ode():
    gfun = lambda s: 0.3 * math.exp(-0.5 * s)
    t = np.linspace(0, 4, 4001)
    spec = bh.BihariSpec(1.2, 0.6, "s_log", t, np.array([gfun(s) for s in t]))
    b = bh.bihari_bound(spec)
    y = bh.ode_oracle(1.2, spec.w, gfun, t)
    assert np.max(np.abs(y / b - 1)) <= 1e-6


def test_random_specs_are_dominated():
    rng = np.random.default_rng(7)
    for _ in range(8):
        spec, gfun, _ = bh.random_spec(rng, n=401)
        y = bh.ode_oracle(spec.a, spec.w, gfun, spec.t)
        assert np.all(y <= bh.bihari_bound(spec) * (1 + 1e-6))


def test_domain_errors_and_overflow():
    with pytest.raises(bh.BihariDomainError):
        bh.BihariSpec(0.5, 1.0, "linear")
    with pytest.raises(bh.BihariDomainError):
        bh.BihariSpec(1.0, 0.0, "linear")
    with pytest.raises(bh.BihariDomainError):
        bh.BihariSpec(1.0, 1.0, "linear", [0, 1], [-1, 1])
    with pytest.raises(bh.BihariDomainError):
        bh.G_of(bh.BihariSpec(1.0, 1.0, "linear"), 0.5)
    with pytest.raises(KeyError, match="builtins"):
        bh.builtin_w("cubic")
    fast = bh.BihariSpec(1.0, 1.0, lambda s: s * s)   # int ds / s^2 converges
    with pytest.raises(bh.BihariOverflowError):
        bh.G_inverse(fast, 2.0)
    with pytest.warns(UserWarning, match="convergent"):
        assert not bh.check_divergence(fast)
    assert bh.check_divergence(bh.BihariSpec(1.0, 1.0, "shifted_log"))


def test_decay_detect():
    t = np.linspace(0, 40, 4001)
    out = bh.decay_detect(t, np.exp(-t), C=1.0)
    assert out["verdict"] == "decayed" and out["integrable"] and out["envelope_ok"]
    slow = bh.decay_detect(t, 1.0 / (1.0 + t))
    assert not slow["integrable"] and slow["verdict"] == "not-decayed"
    with pytest.raises(ValueError):
        bh.decay_detect(t[:5], t[:5])
    with pytest.raises(ValueError):
        bh.decay_detect(t, -np.exp(-t))
    steep = bh.decay_detect(t, np.exp(-t), C=0.1)
    assert not steep["envelope_ok"]
