import copy
import dataclasses
import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gevrey_forge.coeffs import operator_table
from gevrey_forge.greens import make_grid
from gevrey_forge.transform import (FitError, QuadratureBudgetError, RemainderSupportError, decay_in_y,
                                    fourier_trace, gevrey_fit, grid_derivative, kernel_eval,
                                    operator_apply_check, oscillatory_nodes, refinement_check,
                                    regularity_probe, remainder, trace_window, truncation_consistency)

POINTS = ((0.3, 0.5), (-0.7, 0.2), (0.5, -0.9), (1.0, 1.0), (-0.15, -0.35))


def test_remainder_support_small(small01):
    _, rep = remainder(small01)
    assert rep.ok
    assert rep.regroup_error < 1e-13
    assert all(d["inner_exact_zero"] for d in rep.per_level)
    assert all(d["outer_ratio"] < 1e-10 for d in rep.per_level)


def test_remainder_strict_raises(small01):
    with pytest.raises(RemainderSupportError):
        remainder(small01, tol=0.0)


def test_operator_check_small(small01):
    oc = operator_apply_check(small01, POINTS)
    assert oc.ok and oc.worst < 1e-6
    assert len(oc.mismatches) == len(POINTS)


def test_operator_check_detects_wrong_table(small01):
    bad = copy.copy(small01)
    bad.table = operator_table(dataclasses.replace(small01.params, r=Fraction(-5, 2)))
    bad._weights = {}
    oc = operator_apply_check(bad, POINTS[:3])
    assert not oc.ok
    assert oc.worst > 1e-2


def test_kernel_is_even_in_x(small01):
    a = kernel_eval(small01, 0.4, 0.3)
    b = kernel_eval(small01, -0.4, 0.3)
    assert abs(a - b) <= 1e-13 * abs(a)


def test_grid_derivative_of_polynomial():
    grid = make_grid(1.0, 5.0, 0.5, q=16)
    x = grid.nodes
    d = grid_derivative(grid, x**5 - 3 * x**2)
    assert np.allclose(d, 5 * x**4 - 6 * x, rtol=1e-10, atol=0)


def test_oscillatory_budget():
    with pytest.raises(QuadratureBudgetError) as info:
        oscillatory_nodes(0.0, 100.0, 1e6, 2.0, budget=1000)
    assert info.value.nodes_needed > 1000


def test_trace_outside_window(small01):
    lo, hi = trace_window(small01)
    with pytest.raises(ValueError):
        fourier_trace(small01, eta=np.array([lo, 10 * hi]))


def test_trace_leading_offset_bounded(sol01):
    tr = fourier_trace(sol01, points=60)
    off = tr.leading_offset()
    assert np.all(np.isfinite(off))
    assert np.ptp(off) < 10.0
    C, B = tr.envelope(1.0)
    assert math.isfinite(C) and B > 0


@settings(max_examples=25, deadline=None)
@given(st.floats(1.15, 2.6), st.floats(0.4, 3.0), st.floats(-3.0, 3.0))
def test_fit_recovers_synthetic(s, c, a):
    eta = np.geomspace(10.0, 1e4, 150)
    fit = gevrey_fit(eta, a - c * eta ** (1 / s))
    assert abs(fit.s_hat - s) <= 0.01 * s
    assert abs(fit.c_hat - c) <= 0.01 * c


def test_fit_with_power_prefactor():
    eta = np.geomspace(10.0, 1e4, 150)
    fit = gevrey_fit(eta, 0.7 - 0.75 * np.log(eta) - 1.3 * eta ** (1 / 1.8))
    assert fit.s_hat == pytest.approx(1.8, rel=1e-4)
    assert fit.mu == pytest.approx(-0.75, rel=1e-3)
    assert len(fit.split) == 3


def test_fit_rejects_short_span():
    eta = np.geomspace(10.0, 100.0, 50)
    with pytest.raises(FitError):
        gevrey_fit(eta, -eta ** 0.5)


def test_fit_rejects_flat_landscape():
    eta = np.geomspace(10.0, 1e4, 50)
    with pytest.raises(FitError):
        gevrey_fit(eta, np.zeros_like(eta))


def test_refinement_and_truncation(small01):
    assert refinement_check(small01)["pass"]
    tc = truncation_consistency(small01, 4.0)
    assert tc["pass"]
    assert [r["L"] for r in tc["rows"]] == [1, 2, 3]


def test_decay_in_y(small01):
    out = decay_in_y(small01, ys=np.array([1.0, 4.0, 16.0]))
    assert out["finite"]


def test_regularity_probe_orders(small01):
    out = regularity_probe(small01)
    assert math.isfinite(out["s_x"]) and math.isfinite(out["s_y"])
    assert out["x_below_y"]
