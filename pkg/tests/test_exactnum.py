from fractions import Fraction

import mpmath
import pytest
from hypothesis import given, strategies as st

from gevrey_forge.exactnum import (as_fraction, close, delta001, derive_params, operator_row1,
                                   pochhammer, solve_r)

# r fixed by the first-order cancellation, worked out by hand for each pair
R_TABLE = {(0, 1): Fraction(-1), (1, 1): Fraction(-3, 4), (0, 2): Fraction(-5, 6),
           (1, 2): Fraction(-2, 3), (2, 3): Fraction(-3, 5)}

C0_TABLE = {(0, 1): 2.0, (0, 2): 0.9428090415820634, (1, 2): 1.2408064788027995}


@pytest.mark.parametrize("nm, r", sorted(R_TABLE.items()))
def test_solve_r_table(nm, r):
    assert solve_r(*nm) == r


def test_params_example():
    P = derive_params(1, 2)
    assert P.theta == Fraction(4, 3)
    assert P.gamma == Fraction(1, 3)
    assert P.s0 == P.theta
    assert P.alpha == Fraction(-1, 4)
    assert P.r + P.r_kernel_shift == 0


@pytest.mark.parametrize("nm, c0", sorted(C0_TABLE.items()))
def test_c0_values(nm, c0):
    assert abs(float(derive_params(*nm).c0) - c0) < 1e-14


def test_c1_real_for_m1():
    P = derive_params(0, 1)
    assert P.c1.imag == 0
    assert P.c1.real == 2


def test_first_row_at_r_minus_one():
    # the (0,1) first-order row is (1, 2) once r = -1
    assert operator_row1(0, 1, Fraction(-1)) == (Fraction(1), Fraction(2))


def test_theta_const_sign():
    P = derive_params(0, 1)
    # (2i)^2 * E = -4E
    assert mpmath.almosteq(P.theta_const(3), mpmath.mpc(-12, 0))


@given(st.integers(0, 12), st.integers(1, 12))
def test_cancellation_exact(n, m):
    r = solve_r(n, m)
    p10, p11 = operator_row1(n, m, r)
    assert p10 + p11 * delta001(n) == 0


@given(st.integers(0, 12), st.integers(1, 12))
def test_theta_gamma_relation(n, m):
    P = derive_params(n, m, prec=64)
    assert P.theta - 1 == P.gamma * (n + 1) / m
    assert P.theta > 1


def test_bad_indices():
    with pytest.raises(ValueError):
        solve_r(-1, 1)
    with pytest.raises(ValueError):
        derive_params(0, 0)


def test_helpers():
    assert as_fraction("3/4") == Fraction(3, 4)
    assert as_fraction(2) == Fraction(2)
    with pytest.raises(TypeError):
        as_fraction(0.5)
    assert pochhammer(Fraction(5, 2), 0) == 1
    assert pochhammer(5, 3) == 60
    assert close(1.0, 1.0 + 1e-12)
    assert not close(1.0, 1.1)
