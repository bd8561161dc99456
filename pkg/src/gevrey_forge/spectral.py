"""Exact eigenfunctions of ``-u'' + t^{2(2n+1)} u = E t^{2n} u``.

Eigenfunctions live in the ring of functions ``P(t) exp(-t^{2n+2}/(2n+2))``
with rational polynomial ``P``.  That ring is closed under ``d/dt`` and under
multiplication by polynomials, so residuals and derivatives are computed
exactly.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Mapping, Sequence

import mpmath
import numpy as np

from .exactnum import as_fraction

EVEN = "even"
ODD = "odd"


def _clean(d: Mapping[int, Fraction]) -> tuple[tuple[int, Fraction], ...]:
    return tuple(sorted((k, Fraction(v)) for k, v in d.items() if v != 0))


@dataclass(frozen=True)
class ExpPoly:
    """``P(t) * exp(-t^{2n+2}/(2n+2))`` with ``P`` stored sparsely."""

    n: int
    poly: tuple[tuple[int, Fraction], ...] = ()

    @classmethod
    def from_dict(cls, n: int, d: Mapping[int, Fraction]) -> "ExpPoly":
        return cls(n, _clean(d))

    def as_dict(self) -> dict[int, Fraction]:
        return dict(self.poly)

    def is_zero(self) -> bool:
        return not self.poly

    @property
    def degree(self) -> int:
        return self.poly[-1][0] if self.poly else -1

    def __add__(self, other: "ExpPoly") -> "ExpPoly":
        self._same_ring(other)
        d = self.as_dict()
        for k, v in other.poly:
            d[k] = d.get(k, 0) + v
        return ExpPoly.from_dict(self.n, d)

    def __neg__(self) -> "ExpPoly":
        return ExpPoly(self.n, tuple((k, -v) for k, v in self.poly))

    def __sub__(self, other: "ExpPoly") -> "ExpPoly":
        return self + (-other)

    def scale(self, c) -> "ExpPoly":
        c = Fraction(c)
        return ExpPoly.from_dict(self.n, {k: c * v for k, v in self.poly})

    def mul_poly(self, q: Mapping[int, Fraction]) -> "ExpPoly":
        """Multiply by the rational polynomial ``sum q[k] t^k``."""
        d: dict[int, Fraction] = {}
        for a, u in self.poly:
            for b, w in q.items():
                d[a + b] = d.get(a + b, 0) + u * Fraction(w)
        return ExpPoly.from_dict(self.n, d)

    def mul_t(self, power: int = 1) -> "ExpPoly":
        return ExpPoly(self.n, tuple((k + power, v) for k, v in self.poly))

    def deriv(self, order: int = 1) -> "ExpPoly":
        """``d/dt`` maps ``P`` to ``P' - t^{2n+1} P``."""
        f = self
        w = 2 * self.n + 1
        for _ in range(order):
            d: dict[int, Fraction] = {}
            for k, v in f.poly:
                if k:
                    d[k - 1] = d.get(k - 1, 0) + k * v
                d[k + w] = d.get(k + w, 0) - v
            f = ExpPoly.from_dict(self.n, d)
        return f

    def t_dt(self, order: int = 1) -> "ExpPoly":
        """Apply the Euler operator ``t d/dt`` ``order`` times."""
        f = self
        for _ in range(order):
            f = f.deriv().mul_t()
        return f

    def weight(self, t):
        t = np.asarray(t, dtype=float)
        return np.exp(-t ** (2 * self.n + 2) / (2 * self.n + 2))

    def poly_eval(self, t):
        t = np.asarray(t, dtype=float)
        out = np.zeros_like(t)
        if not self.poly:
            return out
        # Horner over the dense coefficient list
        coeffs = [0.0] * (self.degree + 1)
        for k, v in self.poly:
            coeffs[k] = float(v)
        for c in reversed(coeffs):
            out = out * t + c
        return out

    def __call__(self, t):
        return self.poly_eval(t) * self.weight(t)

    def eval_exact(self, t, dps: int = 40):
        """Evaluate at a single point with mpmath at ``dps`` digits."""
        with mpmath.workdps(dps):
            t = mpmath.mpf(t)
            s = mpmath.fsum(mpmath.mpf(v.numerator) / v.denominator * t**k for k, v in self.poly)
            return s * mpmath.exp(-t ** (2 * self.n + 2) / (2 * self.n + 2))

    def _same_ring(self, other: "ExpPoly") -> None:
        if other.n != self.n:
            raise ValueError("ExpPoly values with different weights cannot be combined")


# ---------------------------------------------------------------- Laguerre


def laguerre_recurrence(k: int, alpha, alpha_sign: int = 1) -> list[Fraction]:
    """Coefficients (ascending in ``s``) of ``L_k^{(alpha)}`` from the
    three-term recurrence ``(j+1) L_{j+1} = (2j+1 + sign*alpha - s) L_j - (j+alpha) L_{j-1}``.

    ``alpha_sign=-1`` gives the variant with the opposite sign on ``alpha`` in
    the middle coefficient; it exists only so the two readings can be compared.
    """
    alpha = as_fraction(alpha)
    prev: list[Fraction] = [Fraction(1)]
    if k == 0:
        return prev
    cur = [1 + alpha, Fraction(-1)]
    for j in range(1, k):
        nxt = [Fraction(0)] * (len(cur) + 1)
        for i, c in enumerate(cur):
            nxt[i] += (2 * j + 1 + alpha_sign * alpha) * c
            nxt[i + 1] -= c
        for i, c in enumerate(prev):
            nxt[i] -= (j + alpha) * c
        prev, cur = cur, [c / (j + 1) for c in nxt]
    return cur


def laguerre_binomial(k: int, alpha) -> list[Fraction]:
    """Explicit sum ``sum_i (-1)^i binom(k+alpha, k-i) s^i / i!``."""
    alpha = as_fraction(alpha)
    out = []
    for i in range(k + 1):
        b = Fraction(1)
        for j in range(1, k - i + 1):
            b *= (alpha + i + j) / j
        out.append((-1) ** i * b / math.factorial(i))
    return out


def laguerre(k: int, alpha) -> list[Fraction]:
    """Generalized Laguerre polynomial ``L_k^{(alpha)}(s)`` as exact coefficients."""
    alpha = as_fraction(alpha)
    if alpha <= -1:
        raise ValueError("alpha must exceed -1")
    if k < 0:
        raise ValueError("k must be nonnegative")
    return laguerre_recurrence(k, alpha)


# ------------------------------------------------------------ eigenfunctions


@dataclass(frozen=True)
class GammaMultiple:
    """Exact value ``coeff * (n+1)^a * Gamma(1+a)`` with ``a`` the Laguerre
    parameter; the transcendental factor is kept symbolic."""

    coeff: Fraction
    n: int
    a: Fraction

    def value(self, dps: int = 30):
        with mpmath.workdps(dps):
            a = mpmath.mpf(self.a.numerator) / self.a.denominator
            return (mpmath.mpf(self.coeff.numerator) / self.coeff.denominator
                    * mpmath.power(self.n + 1, a) * mpmath.gamma(1 + a))

    def __float__(self) -> float:
        return float(self.value())


def laguerre_param(parity: str, n: int) -> Fraction:
    return Fraction(-1 if parity == EVEN else 1, 2 * n + 2)


@dataclass(frozen=True)
class EigenFn:
    parity: str
    k: int
    n: int
    E: Fraction
    rep: ExpPoly
    norm2: GammaMultiple = field(compare=False)

    def __call__(self, t, normalized: bool = False):
        v = self.rep(t)
        if normalized:
            v = v / math.sqrt(float(self.norm2))
        return v


def _compose_s(lag: Sequence[Fraction], n: int) -> dict[int, Fraction]:
    """Substitute ``s = t^{2n+2}/(n+1)`` into a polynomial in ``s``."""
    return {(2 * n + 2) * i: c / Fraction(n + 1) ** i for i, c in enumerate(lag)}


def eigenvalue(parity: str, k: int, n: int) -> Fraction:
    return Fraction(4 * k * (n + 1) + 2 * n + (1 if parity == EVEN else 3))


def eigenfunction(parity: str, k: int, n: int) -> EigenFn:
    """Even ``v_k`` or odd ``w_k`` with ``v_k(0) = 1`` (resp. ``w_k'(0) = 1``
    scaled by ``L_k(0)``); the squared norm is carried separately."""
    if parity not in (EVEN, ODD):
        raise ValueError(f"parity must be 'even' or 'odd', got {parity!r}")
    if k < 0 or n < 0:
        raise ValueError("k and n must be nonnegative")
    a = laguerre_param(parity, n)
    d = _compose_s(laguerre(k, a), n)
    rep = ExpPoly.from_dict(n, d)
    if parity == ODD:
        rep = rep.mul_t()
    # norm^2 = 1/2 (n+1)^a Gamma(k+1+a)/k!
    coeff = Fraction(1, 2)
    for j in range(1, k + 1):
        coeff *= (a + j) / j
    return EigenFn(parity, k, n, eigenvalue(parity, k, n), rep, GammaMultiple(coeff, n, a))


def eigen_residual(f: EigenFn) -> ExpPoly:
    """``(-d^2/dt^2 + t^{2(2n+1)}) f - E t^{2n} f`` computed exactly."""
    n = f.n
    u = f.rep
    return -u.deriv(2) + u.mul_t(4 * n + 2) - u.mul_t(2 * n).scale(f.E)


def monomial_moment(j: int, n: int, a: Fraction) -> Fraction:
    """``int_0^inf t^j exp(-t^{2n+2}/(n+1)) dt`` as a multiple of
    ``(n+1)^a Gamma(1+a)``; requires ``(j+1)/(2n+2) - (1+a)`` to be an integer."""
    i = Fraction(j + 1, 2 * n + 2) - 1 - a
    if i.denominator != 1 or i < 0:
        raise ValueError(f"t^{j} does not reduce to Gamma(1+{a}) for n={n}")
    i = int(i)
    c = Fraction(1, 2) * Fraction(n + 1) ** i
    for q in range(i):
        c *= 1 + a + q
    return c


def inner_product(f: EigenFn, g: EigenFn, normalized: bool = False):
    """``(1/2) int_R t^{2n} f g dt``.

    For equal parity this is the half-line integral, reduced through
    ``s = t^{2n+2}/(n+1)`` to Gamma values, each a rational multiple of
    ``Gamma(1+a)``.  Opposite parities give exact zero.  With
    ``normalized=True`` the value is divided by the product of norms.
    """
    if f.n != g.n:
        raise ValueError("eigenfunctions belong to different n")
    n = f.n
    a = laguerre_param(f.parity, n)
    if f.parity != g.parity:
        return Fraction(0) if normalized else GammaMultiple(Fraction(0), n, a)
    prod = f.rep.mul_poly(g.rep.as_dict()).mul_t(2 * n)
    coeff = sum((v * monomial_moment(k, n, a) for k, v in prod.poly), Fraction(0))
    if not normalized:
        return GammaMultiple(coeff, n, a)
    ratio2 = coeff * coeff / (f.norm2.coeff * g.norm2.coeff)
    if coeff == 0:
        return Fraction(0)
    num, den = ratio2.numerator, ratio2.denominator
    rn, rd = math.isqrt(num), math.isqrt(den)
    if rn * rn == num and rd * rd == den:
        return Fraction(rn, rd) * (1 if coeff > 0 else -1)
    return math.copysign(math.sqrt(float(ratio2)), coeff)


# -------------------------------------------------------------- bound suite


@dataclass
class BoundReport:
    n: int
    k_max: int
    rows: list[dict]
    sup_ratio_max: float
    deriv_ratio_max: float
    decay_B: float
    gs_exponents: tuple[float, float]
    gs_target: tuple[float, float]
    tail_ok: bool

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=["k", "quantity", "bound", "ratio"])
            w.writeheader()
            for row in self.rows:
                w.writerow(row)


def _tgrid(n: int, k: int, tol: float) -> tuple[np.ndarray, bool]:
    """Uniform grid refined geometrically around the turning point, extended
    until ``t^{deg} * weight`` is below ``tol``."""
    E = 4 * k * (n + 1) + 2 * n + 1
    T = E ** (1.0 / (2 * n + 2))
    tmax = T + 1.0
    deg = (2 * n + 2) * k + 8 * (2 * n + 1) + 8
    while math.exp(-tmax ** (2 * n + 2) / (2 * n + 2) + deg * math.log(tmax)) > tol:
        tmax *= 1.2
        if tmax > 1e3:
            return np.linspace(0, tmax, 10), False
    base = np.linspace(0.0, tmax, 3000)
    near = T + np.concatenate([-np.geomspace(1e-3, 1, 200), np.geomspace(1e-3, 1, 200)]) * T * 0.25
    return np.unique(np.concatenate([base, near[(near > 0) & (near < tmax)]])), True


def bound_suite(k_max: int, n: int, tol: float = 1e-14, gs_max: int = 8) -> BoundReport:
    """Empirical check of sup-norm, derivative, decay and Gel'fand-Shilov bounds
    for the even eigenfunctions ``v_k``, ``k <= k_max``."""
    if k_max < 2:
        raise ValueError("k_max must be at least 2")
    rows: list[dict] = []
    sup_r, der_r, Bs = [], [], []
    tail_ok = True
    gs_rows = []
    for k in range(k_max + 1):
        f = eigenfunction(EVEN, k, n)
        E = float(f.E)
        t, ok = _tgrid(n, k, tol)
        tail_ok &= ok
        v = np.abs(f.rep(t))
        dv = np.abs(f.rep.deriv()(t))
        e1 = 1.5 + 1.0 / (4 * n + 4)
        e2 = 3.5 - 1.0 / (4 * n + 4)
        sup_r.append(v.max() / E ** e1)
        der_r.append(dv.max() / E ** e2)
        rows.append({"k": k, "quantity": "sup|v_k|", "bound": E ** e1, "ratio": sup_r[-1]})
        rows.append({"k": k, "quantity": "sup|v_k'|", "bound": E ** e2, "ratio": der_r[-1]})
        # decay: largest B with log|v| + B t^{2n+2} bounded on the outer region
        T = E ** (1.0 / (2 * n + 2))
        mask = (t > 2 * T) & (v > 1e-290)
        if mask.sum() > 10:
            tt, lv = t[mask], np.log(v[mask])
            X = np.vstack([np.ones_like(tt), tt ** (2 * n + 2), np.log(tt)]).T
            coef = np.linalg.lstsq(X, lv, rcond=None)[0]
            Bs.append(-coef[1])
            rows.append({"k": k, "quantity": "decay_B", "bound": 1.0 / (2 * n + 2), "ratio": -coef[1]})
        if k <= gs_max:
            gs_rows.append((k, f, t))
    gs = _gelfand_shilov_fit(n, gs_rows)
    return BoundReport(
        n, k_max, rows, float(max(sup_r)), float(max(der_r)),
        float(min(Bs)) if Bs else float("nan"), gs,
        (1.0 / (2 * n + 2), (2 * n + 1) / (2 * n + 2)), tail_ok,
    )


def _fit_xlogx(x: np.ndarray, y: np.ndarray) -> float:
    """Coefficient of ``x log x`` in a least-squares fit by
    ``c0 + c1 x + c2 x log x + c3 log x``."""
    X = np.vstack([np.ones_like(x), x, x * np.log(x), np.log(x)]).T
    return float(np.linalg.lstsq(X, y, rcond=None)[0][2])


def log_sup_moments(f: EigenFn, orders: Sequence[int], npts: int = 40000) -> np.ndarray:
    """``log sup_t |t^a f(t)|`` for each ``a``, evaluated in log space."""
    n = f.n
    p = 2 * n + 2
    amax = max(orders)
    t = np.linspace(1e-9, (amax + p * f.k + 10) ** (1.0 / p) * 1.6, npts)
    lv = np.log(np.abs(f.rep.poly_eval(t)) + 1e-300) - t**p / p
    lt = np.log(t)
    return np.array([np.max(a * lt + lv) for a in orders])


def taylor_log_derivs(f: EigenFn, t0: float, bmax: int) -> np.ndarray:
    """``log|f^{(b)}(t0)|`` for ``b = 0..bmax``.

    Taylor coefficients at ``t0`` follow from ``f'' = (t^{4n+2} - E t^{2n}) f``.
    The recursion also feeds the growing companion solution, so it runs in
    multiprecision with enough digits to absorb ``exp(2 t0^{2n+2}/(2n+2))``.
    """
    n = f.n
    p = 2 * n + 2
    P = 4 * n + 2
    E = f.E
    dps = 40 + int(2 * t0**p / p / math.log(10))
    out = np.full(bmax + 1, -np.inf)
    with mpmath.workdps(dps):
        t = mpmath.mpf(t0)
        c = [f.rep.eval_exact(t, dps), f.rep.deriv().eval_exact(t, dps)]
        q = []
        for i in range(P + 1):
            qi = math.comb(P, i) * t ** (P - i)
            if i <= 2 * n:
                qi -= mpmath.mpf(E.numerator) / E.denominator * math.comb(2 * n, i) * t ** (2 * n - i)
            q.append(qi)
        for j in range(bmax - 1):
            s = mpmath.fsum(q[i] * c[j - i] for i in range(min(j, P) + 1))
            c.append(s / ((j + 2) * (j + 1)))
        for b in range(bmax + 1):
            if c[b] != 0:
                out[b] = float(mpmath.log(abs(c[b]))) + math.lgamma(b + 1)
    return out


def log_sup_derivs(f: EigenFn, bmax: int, npts: int = 240) -> np.ndarray:
    """``log sup_t |f^{(b)}(t)|`` for ``b = 0..bmax`` over a grid past the peak region."""
    p = 2 * f.n + 2
    ts = np.linspace(0.0, 1.5 * (bmax + float(f.E)) ** (1.0 / p), npts)
    return np.max(np.array([taylor_log_derivs(f, t, bmax) for t in ts]), axis=0)


def gelfand_shilov_exponents(f: EigenFn, amin: int = 40, amax: int = 400,
                             bmin: int = 36, bmax: int = 126) -> tuple[float, float]:
    """Fitted exponents ``(A, B)`` of ``sup|t^a f| ~ a^{A a}`` and ``sup|f^{(b)}| ~ b^{B b}``.

    Derivative orders are fitted separately in each residue class mod
    ``2n+2`` (the weight makes the sequence periodic in that modulus) and
    the median is reported.
    """
    a_orders = np.arange(amin, amax + 1, 4)
    la = log_sup_moments(f, list(a_orders))
    A = _fit_xlogx(a_orders.astype(float), la)
    lb = log_sup_derivs(f, bmax)
    p = 2 * f.n + 2
    Bs = []
    for r0 in range(p):
        b = np.arange(bmin + r0, bmax + 1, p)
        Bs.append(_fit_xlogx(b.astype(float), lb[b]))
    return A, float(np.median(Bs))


def _gelfand_shilov_fit(n: int, items) -> tuple[float, float]:
    """Worst-case (farthest from target) exponents over the probed ``k``."""
    ta, tb = 1.0 / (2 * n + 2), (2 * n + 1) / (2 * n + 2)
    A, B = [], []
    for _, f, _ in items:
        a, b = gelfand_shilov_exponents(f)
        A.append(a)
        B.append(b)
    return max(A, key=lambda x: abs(x - ta)), max(B, key=lambda x: abs(x - tb))
