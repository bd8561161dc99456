import dataclasses
import random
from fractions import Fraction

import pytest
from hypothesis import given, strategies as st

from gevrey_forge.coeffs import (apply_Pi, b_identity_residual, bd_tables, d_identity_residual,
                                 delta_oracle, delta_table, delta_table_from_oracle, operator_table,
                                 p_coeffs, p_oracle, p_table_by_interpolation, pi_weights,
                                 transfer_weight)
from gevrey_forge.exactnum import derive_params

F = Fraction


# t d/dt v_k expanded by hand for the Hermite-type case n = 0
HAND = {
    (0, 0, 1): {0: F(-1, 2), 1: F(1)},
    (0, 1, 1): {-1: F(-1, 2), 0: F(-1, 2), 1: F(2)},
    (0, 0, 2): {0: F(-1, 4), 1: F(-1), 2: F(2)},
}


@pytest.mark.parametrize("key, row", sorted(HAND.items()))
def test_delta_hand_values(key, row):
    n, k, i = key
    assert delta_oracle(n, k, i) == row
    assert delta_table(n, 4, 4).row(k, i) == row


@pytest.mark.parametrize("n", range(3))
def test_delta_recursion_equals_oracle(n):
    assert delta_table(n, 8, 6).entries == delta_table_from_oracle(n, 8, 6).entries


def test_delta_extreme_entries():
    # top entry (n+1)^i (k+i)!/k!, and nothing below j = -min(i, k)
    for n in range(3):
        tab = delta_table(n, 6, 5)
        for k in range(7):
            for i in range(6):
                row = tab.row(k, i)
                top = F(n + 1) ** i
                for j in range(1, i + 1):
                    top *= k + j
                assert row[i] == top
                assert min(row) >= -min(i, k)


def test_bd_known_entries():
    bd = bd_tables(4, 4)
    assert bd.B(3, 3) == 2
    assert [bd.B(4, l) for l in range(1, 5)] == [1, 6, 11, 6]
    assert bd.D(2, 1) == 1 and bd.D(2, 2) == 1
    assert [bd.D(4, i) for i in range(1, 5)] == [1, 6, 7, 1]


def test_bd_identities_random_probes():
    rng = random.Random(7)
    bd = bd_tables(8, 8)
    for _ in range(50):
        a = F(rng.randint(-40, 40), rng.randint(1, 12))
        theta = F(rng.randint(1, 30), rng.randint(1, 12))
        for p in range(1, 9):
            assert b_identity_residual(p, a, theta, bd) == 0
        for nu in range(1, 9):
            assert d_identity_residual(nu, a, bd) == 0


rationals = st.fractions(min_value=-20, max_value=20, max_denominator=50)


@given(st.integers(1, 8), rationals, rationals.filter(lambda x: x != 0))
def test_b_identity_property(p, a, theta):
    assert b_identity_residual(p, a, theta) == 0


@given(st.integers(1, 8), rationals)
def test_d_identity_property(nu, a):
    assert d_identity_residual(nu, a) == 0


def test_p_table_example():
    tab = p_coeffs(2, 2, 1, F(-5, 2), 0)
    assert tab.rows == ((F(1),), (F(-8), F(2)), (F(77, 4), F(-9), F(1)))
    rep = p_oracle(2, 2, 1, F(-5, 2), 0, [(3, 4)])
    assert rep.ok and rep.residuals[0][1] == 0


@pytest.mark.parametrize("nm", [(0, 1), (1, 1), (0, 2), (1, 2), (2, 3)])
def test_p_oracle_operator_families(nm):
    P = derive_params(*nm)
    n, m, th, ga, r = P.n, P.m, P.theta, P.gamma, P.r
    mons = [(a, b) for a in range(5) for b in (F(-3, 2), 0, 1, F(7, 3), 5)]
    assert p_oracle(2 * m, th, ga, r + 2 * th - 2 * n * ga, 2 * n, mons).ok
    if 2 * m - 1 >= 1:
        assert p_oracle(2 * m - 1, th, ga, r + th - 2 * n * ga, 2 * n, mons).ok


@given(st.integers(1, 6), rationals.filter(lambda x: x > 0), rationals, rationals, st.integers(0, 4))
def test_closed_form_equals_interpolation(p, theta, gamma, q, f):
    assert p_coeffs(p, theta, gamma, q, f).rows == p_table_by_interpolation(p, theta, gamma, q, f).rows


def test_first_row_for_quadratic_case():
    tab = operator_table(derive_params(0, 1))
    assert tab.rows[1] == (F(1), F(2))
    assert tab.rows[0] == (F(1),)


@pytest.mark.parametrize("nm", [(0, 1), (1, 1), (0, 2), (1, 2), (2, 3)])
def test_v0_cancellation(nm):
    P = derive_params(*nm)
    tab = operator_table(P)
    assert transfer_weight(tab, delta_table(P.n, 4, 2 * P.m), 1, 0, 0) == 0


def test_alternative_r_breaks_cancellation():
    # the value -5/2 for (0,1) leaves a nonzero v_0 coefficient
    P = dataclasses.replace(derive_params(0, 1), r=F(-5, 2))
    tab = operator_table(P)
    assert transfer_weight(tab, delta_table(0, 4, 2), 1, 0, 0) != 0


def test_pi_weights_locality():
    P = derive_params(1, 2)
    tab = operator_table(P)
    delta = delta_table(1, 10, 4)
    for i in range(1, 5):
        for dst, terms in pi_weights(i, range(4), tab, delta).items():
            assert all(abs(dst - src) <= i for _, src in terms)


def test_apply_pi_zero_is_theta():
    P = derive_params(0, 1)
    out = apply_Pi(0, {0: lambda k: [1.0, 0.0, 3.0][k]}, P)
    assert out[0] == pytest.approx(3.0 + complex(P.theta_const(P.E(0))))


def test_apply_pi_rejects_bad_index():
    with pytest.raises(ValueError):
        apply_Pi(3, {0: lambda k: 0.0}, derive_params(0, 1))


def test_tables_serialize():
    assert '"rows"' in operator_table(derive_params(0, 1)).to_json()
    assert '"delta"' in delta_table(0, 2, 2).to_json()
