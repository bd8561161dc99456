import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gevrey_forge import jets


def _fd(f, x, h=1e-5):
    return (f(x + h) - f(x - h)) / (2 * h)


@pytest.mark.parametrize("kappa", [1.0, 2.0, 4.0])
def test_smoothstep_ends_and_symmetry(kappa):
    x = np.array([-0.5, 0.0, 0.5, 1.0, 1.5])
    v = jets.smoothstep(x, kappa, 3)
    assert v[0, 0] == 0 and v[0, 1] == 0 and v[0, 3] == 1 and v[0, 4] == 1
    assert np.all(v[1:, [0, 1, 3, 4]] == 0)
    assert v[0, 2] == pytest.approx(0.5)
    # psi(x) + psi(1 - x) = 1
    t = np.linspace(0.05, 0.95, 19)
    s = jets.smoothstep(t, kappa, 0)[0] + jets.smoothstep(1 - t, kappa, 0)[0]
    assert np.allclose(s, 1.0, atol=1e-15)


@settings(max_examples=30, deadline=None)
@given(st.floats(0.05, 0.95), st.sampled_from([1.0, 2.0, 4.0, 6.0]))
def test_smoothstep_derivatives(x, kappa):
    d = jets.smoothstep(np.array([x]), kappa, 4)[:, 0]
    for k in range(4):
        fd = _fd(lambda z: jets.smoothstep(np.array([z]), kappa, k)[k, 0], x)
        assert abs(fd - d[k + 1]) <= 1e-4 * max(1.0, abs(d[k + 1]))


def test_smoothstep_unit_midpoint_slope():
    for kappa in (1.0, 2.0, 4.0):
        assert jets.smoothstep(np.array([0.5]), kappa, 1)[1, 0] == pytest.approx(1.0)


@settings(max_examples=30, deadline=None)
@given(st.floats(-0.9, 0.9))
def test_bump_derivatives(x):
    d = jets.bump(np.array([x]), 3)[:, 0]
    assert d[0] == pytest.approx(math.exp(-1 / (1 - x * x)))
    for k in range(3):
        fd = _fd(lambda z: jets.bump(np.array([z]), k)[k, 0], x)
        assert abs(fd - d[k + 1]) <= 1e-5 * max(1.0, abs(d[k + 1]))


def test_bump_support():
    assert not jets.bump(np.array([-1.0, 1.0, 2.0]), 2).any()


def test_jet_arithmetic():
    x = jets.variable(np.array([0.3, 1.1]), 5)
    e = jets.derivatives(jets.exp(x))
    assert np.allclose(e, np.exp([0.3, 1.1])[None, :].repeat(6, 0))
    r = jets.derivatives(jets.recip(x))
    exact = np.array([(-1) ** k * math.factorial(k) * np.array([0.3, 1.1]) ** (-k - 1) for k in range(6)])
    assert np.allclose(r, exact, rtol=1e-12)
    sq = jets.derivatives(jets.mul(x, x))
    assert np.allclose(sq[:3], [[0.09, 1.21], [0.6, 2.2], [2.0, 2.0]])
    assert not sq[3:].any()
