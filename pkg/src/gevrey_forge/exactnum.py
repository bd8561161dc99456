"""Exact rationals, high-precision complex values, and the problem parameters.

Every exact coefficient in the package is a :class:`fractions.Fraction`.
Irrational quantities (roots of eigenvalues, trigonometric values) are held
as :mod:`mpmath` numbers at a recorded working precision.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Union

import mpmath

DEFAULT_PREC = 128
DEFAULT_ABS_TOL = 1e-10
DEFAULT_REL_TOL = 1e-8

Number = Union[int, Fraction, mpmath.mpf, mpmath.mpc]


def as_fraction(x) -> Fraction:
    """Parse ints, Fractions and ``"p/q"`` strings into a Fraction."""
    if isinstance(x, Fraction):
        return x
    if isinstance(x, int):
        return Fraction(x)
    if isinstance(x, str):
        return Fraction(x.strip())
    raise TypeError(f"not an exact rational: {x!r}")


def pochhammer(lam, beta: int):
    """Falling factorial ``lam (lam - 1) ... (lam - beta + 1)``.

    Exact for int/Fraction input, otherwise evaluated in the type of ``lam``.
    ``pochhammer(x, 0) == 1`` for every ``x``.
    """
    if beta < 0:
        raise ValueError("beta must be nonnegative")
    if isinstance(lam, int):
        lam = Fraction(lam)
    out = lam * 0 + 1
    for k in range(beta):
        out = out * (lam - k)
    return out


def close(a, b, abs_tol: float = DEFAULT_ABS_TOL, rel_tol: float = DEFAULT_REL_TOL) -> bool:
    """Approximate comparison with an explicit absolute and relative tolerance."""
    d = abs(a - b)
    return bool(d <= abs_tol or d <= rel_tol * max(abs(a), abs(b)))


def operator_row1(n: int, m: int, r: Fraction) -> tuple[Fraction, Fraction]:
    """First-order row ``(p10, p11)`` of the reduced operator.

    ``p10 = 2m((2m+1)/2 - theta(m-1) + r)`` and ``p11 = 2m gamma``; these come
    from combining the ``y^{2m} D_y^2`` and ``(m/i) y^{2m-1} D_y`` parts of
    ``(x^n y^m D_y)^2``.
    """
    theta = Fraction(2 * m, 2 * m - 1)
    gamma = Fraction(m, (n + 1) * (2 * m - 1))
    p10 = 2 * m * (Fraction(2 * m + 1, 2) - theta * (m - 1) + r)
    p11 = 2 * m * gamma
    return p10, p11


def delta001(n: int) -> Fraction:
    """Coefficient of ``v_0`` in ``t v_0'``: ``-(2n+1)/2``."""
    return Fraction(-(2 * n + 1), 2)


def solve_r(n: int, m: int) -> Fraction:
    """The exponent ``r`` making the ``v_0`` coefficient of the first-order
    operator vanish on ``v_0``: ``p10(r) + p11 * delta_0^{0,1} = 0``."""
    _check_nm(n, m)
    p10_at_zero, p11 = operator_row1(n, m, Fraction(0))
    # p10 is 2m r + p10(0): a linear solve with slope 2m
    return -(p10_at_zero + p11 * delta001(n)) / (2 * m)


def _check_nm(n: int, m: int) -> None:
    if not isinstance(n, int) or n < 0:
        raise ValueError(f"n must be a nonnegative integer, got {n!r}")
    if not isinstance(m, int) or m < 1:
        raise ValueError(f"m must be a positive integer, got {m!r}")


@dataclass(frozen=True)
class Params:
    n: int
    m: int
    theta: Fraction
    gamma: Fraction
    alpha: Fraction
    s0: Fraction
    r: Fraction
    c1: mpmath.mpc
    c0: mpmath.mpf
    prec: int = DEFAULT_PREC

    @property
    def r_kernel_shift(self) -> Fraction:
        """Extra power of rho produced by the reduction: ``2 gamma``."""
        return 2 * self.gamma

    def E(self, k: int) -> int:
        """Even eigenvalue ``4k(n+1) + 2n + 1``."""
        return 4 * k * (self.n + 1) + 2 * self.n + 1

    def E_odd(self, k: int) -> int:
        return 4 * k * (self.n + 1) + 2 * self.n + 3

    def theta_const(self, E) -> mpmath.mpc:
        """Constant term ``(2mi/(2m-1))^{2m} E`` of the rho-operator."""
        with mpmath.workprec(self.prec):
            m = self.m
            return (mpmath.mpc(0, 2 * m) / (2 * m - 1)) ** (2 * m) * E

    def as_dict(self) -> dict:
        return {
            "n": self.n,
            "m": self.m,
            "theta": str(self.theta),
            "gamma": str(self.gamma),
            "alpha": str(self.alpha),
            "s0": str(self.s0),
            "r": str(self.r),
            "r_prime": str(self.r + self.r_kernel_shift),
            "c1": [mpmath.nstr(self.c1.real, 20), mpmath.nstr(self.c1.imag, 20)],
            "c0": mpmath.nstr(self.c0, 20),
            "prec": self.prec,
        }


def derive_params(n: int, m: int, prec: int = DEFAULT_PREC) -> Params:
    _check_nm(n, m)
    theta = Fraction(2 * m, 2 * m - 1)
    gamma = Fraction(m, (n + 1) * (2 * m - 1))
    alpha = Fraction(-1, 2 * n + 2)
    with mpmath.workprec(prec):
        a = mpmath.pi / (2 * m)
        mod = mpmath.mpf(2 * m) / (2 * m - 1) * mpmath.root(2 * n + 1, 2 * m)
        c1 = mod * mpmath.mpc(mpmath.sin(a), -mpmath.cos(a))
        # cos(pi/2) is not exactly zero in binary; snap the m = 1 case
        if m == 1:
            c1 = mpmath.mpc(c1.real, 0)
        c0 = c1.real
    return Params(n, m, theta, gamma, alpha, theta, solve_r(n, m), c1, c0, prec)
