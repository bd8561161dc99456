import math

import numpy as np
import pytest

from gevrey_forge.greens import (GreensError, OdeOperator, convolve, decay_constant, discrepancy_constant,
                                 greens, greens_deriv, jump_sum, make_grid, root_residuals,
                                 weak_delta_check)


@pytest.fixture(scope="module")
def family():
    return {(m, E): greens(OdeOperator(m, E)) for m in (1, 2, 3) for E in (1, 5, 9)}


def test_m1_closed_form():
    G = greens(OdeOperator(1, 1))
    rho = np.linspace(-5, 5, 101)
    assert np.abs(G(rho) + 0.25 * np.exp(-2 * np.abs(rho))).max() < 1e-15
    assert greens_deriv(G, 1, np.array([0.5]))[0] == pytest.approx(0.5 * math.exp(-1.0))


@pytest.mark.parametrize("m", [1, 2, 3])
def test_roots_solve_the_symbol(m):
    assert max(root_residuals(OdeOperator(m, 5))) < 1e-30


def test_jump_and_evenness(family):
    rho = np.linspace(0.1, 4, 17)
    for (m, E), G in family.items():
        assert abs(jump_sum(G) - 1) < 1e-12
        for ell in range(2 * m):
            lhs = greens_deriv(G, ell, -rho)
            rhs = (-1) ** ell * greens_deriv(G, ell, rho)
            assert np.allclose(lhs, rhs, rtol=1e-13, atol=0)
        # derivatives below 2m-1 are continuous through the origin
        for ell in range(2 * m - 1):
            a = greens_deriv(G, ell, np.array([0.0]), side=1)[0]
            b = greens_deriv(G, ell, np.array([0.0]), side=-1)[0]
            assert abs(a - b) < 1e-14
        a = greens_deriv(G, 2 * m - 1, np.array([0.0]), side=1)[0]
        b = greens_deriv(G, 2 * m - 1, np.array([0.0]), side=-1)[0]
        assert abs(a - b - 1) < 1e-12


def test_weak_delta(family):
    for G in family.values():
        assert weak_delta_check(G) < (1e-10 if G.m == 1 else 1e-6)


def test_derivatives_vs_differences(family):
    rho = np.array([0.3, 0.9, 1.7, -0.6])
    h = 1e-4
    for (m, E), G in family.items():
        for ell in range(1, 2 * m):
            fd = (greens_deriv(G, ell - 1, rho + h) - greens_deriv(G, ell - 1, rho - h)) / (2 * h)
            exact = greens_deriv(G, ell, rho)
            assert np.all(np.abs(fd - exact) <= 1e-6 * np.abs(exact))


def test_decay_constant_finite(family):
    for G in family.values():
        K = decay_constant(G)
        assert math.isfinite(K) and K > 0


def test_trig_closed_form_differs_by_unit_constant():
    for m in (1, 2, 3):
        z = discrepancy_constant(greens(OdeOperator(m, 3)))
        assert abs(z - 1j) < 1e-10


def test_order_2m_rejected():
    G = greens(OdeOperator(1, 1))
    with pytest.raises(ValueError):
        greens_deriv(G, 2, np.array([1.0]))


def test_check_raises_on_impossible_tolerance():
    with pytest.raises(GreensError):
        greens(OdeOperator(2, 1), tol=0.0)


def test_convolution_closed_form():
    # G * (e^{-2 sigma} on [0, inf)) = -e^{-2 rho}(rho + 1/4)/4 for m = 1, E = 1
    G = greens(OdeOperator(1, 1))
    grid = make_grid(0.0, 40.0, 0.5, q=16)
    tab = convolve(G, np.exp(-2 * grid.nodes), grid, 0.0, orders=[0, 1, 2])
    rho = np.array([0.5, 1.0, 3.0, 7.0])
    e = np.exp(-2 * rho)
    assert np.allclose(tab.value(0, rho), -0.25 * e * (rho + 0.25), rtol=1e-12, atol=0)
    assert np.allclose(tab.value(1, rho), -0.25 * e * (0.5 - 2 * rho), rtol=1e-12, atol=0)
    assert np.allclose(tab.value(2, rho), -0.25 * e * (4 * rho - 3), rtol=1e-12, atol=0)
