from fractions import Fraction

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gevrey_forge.spectral import (EVEN, ODD, ExpPoly, eigen_residual, eigenfunction, eigenvalue,
                                   inner_product, laguerre, laguerre_binomial, laguerre_recurrence)


@pytest.mark.parametrize("parity", [EVEN, ODD])
@pytest.mark.parametrize("n", range(4))
def test_eigen_residual_vanishes(parity, n):
    for k in range(11):
        assert eigen_residual(eigenfunction(parity, k, n)).is_zero()


def test_eigenvalues():
    assert eigenvalue(EVEN, 0, 0) == 1
    assert eigenvalue(ODD, 0, 0) == 3
    assert eigenvalue(EVEN, 2, 1) == 19


@pytest.mark.parametrize("n", range(3))
def test_orthogonality_exact(n):
    for parity in (EVEN, ODD):
        fs = [eigenfunction(parity, k, n) for k in range(9)]
        for i, f in enumerate(fs):
            for g in fs[i + 1:]:
                assert inner_product(f, g).coeff == 0
    assert inner_product(eigenfunction(EVEN, 1, n), eigenfunction(ODD, 1, n)).coeff == 0


def test_normalized_diagonal_is_one():
    for k in range(5):
        f = eigenfunction(EVEN, k, 1)
        assert inner_product(f, f, normalized=True) == 1


@pytest.mark.parametrize("parity, k, n", [(EVEN, 0, 0), (EVEN, 3, 1), (ODD, 2, 0), (ODD, 1, 2)])
def test_norm_against_quadrature(parity, k, n):
    f = eigenfunction(parity, k, n)
    mpmath.mp.dps = 30
    integrand = lambda t: t ** (2 * n) * f.rep.eval_exact(t, 30) ** 2
    val = mpmath.quad(integrand, [0, 1, 3, mpmath.inf])
    assert abs(val - f.norm2.value()) < 1e-20 * max(1, abs(val))


@pytest.mark.parametrize("alpha", [Fraction(-1, 2), Fraction(1, 2), Fraction(-1, 4), Fraction(1, 6)])
def test_laguerre_recurrence_matches_binomial(alpha):
    for k in range(13):
        assert laguerre_recurrence(k, alpha) == laguerre_binomial(k, alpha)


def test_flipped_sign_reading_differs():
    assert laguerre_recurrence(2, Fraction(-1, 2), alpha_sign=-1) != laguerre_binomial(2, Fraction(-1, 2))


def test_laguerre_rejects_bad_alpha():
    with pytest.raises(ValueError):
        laguerre(2, -1)


def test_v0_is_the_weight():
    f = eigenfunction(EVEN, 0, 2)
    t = np.linspace(0, 2, 9)
    assert np.allclose(f(t), np.exp(-t**6 / 6), rtol=0, atol=1e-15)


coeff = st.fractions(min_value=-5, max_value=5, max_denominator=7)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2), st.dictionaries(st.integers(0, 6), coeff, min_size=1, max_size=4),
       st.floats(0.2, 1.5))
def test_exppoly_derivative_vs_differences(n, d, t0):
    f = ExpPoly.from_dict(n, d)
    h = 1e-4
    fd = (f(t0 + h) - f(t0 - h)) / (2 * h)
    exact = f.deriv()(t0)
    scale = max(1.0, abs(f(t0)), abs(exact))
    assert abs(fd - exact) <= 1e-6 * scale


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2), st.dictionaries(st.integers(0, 6), coeff, min_size=1, max_size=4))
def test_exppoly_ring_rules(n, d):
    f = ExpPoly.from_dict(n, d)
    # Euler operator is t times the derivative, and derivatives commute with scaling
    assert f.t_dt() == f.deriv().mul_t()
    assert f.scale(3).deriv() == f.deriv().scale(3)
    assert (f - f).is_zero()


def test_bad_eigen_arguments():
    with pytest.raises(ValueError):
        eigenfunction("neither", 0, 0)
    with pytest.raises(ValueError):
        eigenfunction(EVEN, -1, 0)
