"""Exact coefficient tables and the action of the reduced operators.

* ``delta``: expansion of ``(t d/dt)^i v_k`` in the eigenfunctions ``v_{k+j}``.
* ``b``/``d``: expansions of ``[rho^{-theta}(1-theta+rho d)]^p`` and
  ``(rho d)^nu``.
* ``p``: coefficients of ``[rho^{-theta}(1-theta+rho d)]^p rho^q t^f`` written
  as ``rho^{q+p(1-theta)} t^f sum_i rho^{-i} sum_j p_ij (t d_t)^j d_rho^{p-i}``.

Each table has a brute-force oracle computed along an independent route.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from typing import Callable, Iterable, Mapping

from .exactnum import Params, as_fraction, pochhammer
from .spectral import EVEN, eigenfunction


def _fstr(x: Fraction) -> str:
    return str(x)


# ------------------------------------------------------------------ delta


@dataclass(frozen=True)
class DeltaTable:
    """``entries[(k, i)][j]`` is the coefficient of ``v_{k+j}`` in ``(t d_t)^i v_k``."""

    n: int
    k_max: int
    i_max: int
    entries: Mapping[tuple[int, int], Mapping[int, Fraction]] = field(repr=False)

    def get(self, j: int, k: int, i: int) -> Fraction:
        if k + j < 0 or abs(j) > i:
            return Fraction(0)
        return self.entries[(k, i)].get(j, Fraction(0))

    def row(self, k: int, i: int) -> dict[int, Fraction]:
        return dict(self.entries[(k, i)])

    def growth_constant(self) -> float:
        """Least ``C`` with ``max_j |delta_j^{k,i}| k!/(k+i)! <= C^i`` over the table."""
        best = 0.0
        for (k, i), row in self.entries.items():
            if i == 0:
                continue
            mx = max(abs(v) for v in row.values()) * Fraction(math.factorial(k), math.factorial(k + i))
            best = max(best, float(mx) ** (1.0 / i))
        return best

    def to_json(self) -> str:
        data = {f"{k},{i}": {str(j): _fstr(v) for j, v in sorted(row.items())}
                for (k, i), row in sorted(self.entries.items())}
        return json.dumps({"n": self.n, "k_max": self.k_max, "i_max": self.i_max, "delta": data},
                          sort_keys=True, indent=1)


@lru_cache(maxsize=None)
def delta_table(n: int, k_max: int, i_max: int) -> DeltaTable:
    """Build ``delta_j^{k,i}`` from the recursion on ``dt = delta/(n+1)^i``:

    ``dt_j^{k,i} = (k+j) dt_{j-1}^{k,i-1} - (1+alpha) dt_j^{k,i-1} - (k+j+1+alpha) dt_{j+1}^{k,i-1}``

    with ``alpha = -1/(2n+2)`` and entries with ``k+j < 0`` identically zero.
    """
    if min(n, k_max, i_max) < 0:
        raise ValueError("bounds must be nonnegative")
    alpha = Fraction(-1, 2 * n + 2)
    entries: dict[tuple[int, int], dict[int, Fraction]] = {}
    for k in range(k_max + 1):
        prev = {0: Fraction(1)}
        entries[(k, 0)] = prev
        scale = Fraction(1)
        for i in range(1, i_max + 1):
            cur: dict[int, Fraction] = {}
            for j in range(max(-i, -k), i + 1):
                v = (k + j) * prev.get(j - 1, 0) - (1 + alpha) * prev.get(j, 0) \
                    - (k + j + 1 + alpha) * prev.get(j + 1, 0)
                if v:
                    cur[j] = Fraction(v)
            scale *= n + 1
            entries[(k, i)] = {j: v * scale for j, v in cur.items()}
            prev = cur
    return DeltaTable(n, k_max, i_max, entries)


def delta_oracle(n: int, k: int, i: int) -> dict[int, Fraction]:
    """Expand ``(t d_t)^i v_k`` in ``{v_q}`` by exact ring arithmetic and a
    triangular solve from the top degree down."""
    f = eigenfunction(EVEN, k, n).rep.t_dt(i)
    residual = f.as_dict()
    out: dict[int, Fraction] = {}
    step = 2 * n + 2
    top = f.degree // step if f.poly else -1
    if f.poly and f.degree % step:
        raise ArithmeticError("t d_t image has a degree outside the even basis")
    for q in range(top, -1, -1):
        vq = eigenfunction(EVEN, q, n).rep
        lead = vq.as_dict()[step * q]
        c = residual.get(step * q, Fraction(0)) / lead
        if c:
            out[q - k] = c
            for deg, v in vq.poly:
                residual[deg] = residual.get(deg, 0) - c * v
    if any(v != 0 for v in residual.values()):
        raise ArithmeticError(f"basis expansion failed for n={n}, k={k}, i={i}")
    return out


# ------------------------------------------------------------------- b, d


@dataclass(frozen=True)
class BDTables:
    p_max: int
    nu_max: int
    b: Mapping[tuple[int, int], int] = field(repr=False)
    d: Mapping[tuple[int, int], int] = field(repr=False)

    def B(self, p: int, l: int) -> int:
        return self.b.get((p, l), 0)

    def D(self, nu: int, i: int) -> int:
        return self.d.get((nu, i), 0)

    def to_json(self) -> str:
        return json.dumps({"b": {f"{p},{l}": v for (p, l), v in sorted(self.b.items())},
                           "d": {f"{nu},{i}": v for (nu, i), v in sorted(self.d.items())}},
                          sort_keys=True, indent=1)


@lru_cache(maxsize=None)
def bd_tables(p_max: int, nu_max: int) -> BDTables:
    """``b_{p,l} = b_{p-1,l} + (p-1) b_{p-1,l-1}`` and
    ``d_{nu,i} = d_{nu-1,i} + (nu+1-i) d_{nu-1,i-1}``, with ``d_{0,1} = 1``."""
    if p_max < 1 or nu_max < 0:
        raise ValueError("p_max must be >= 1 and nu_max >= 0")
    b: dict[tuple[int, int], int] = {(1, 1): 1}
    for p in range(2, p_max + 1):
        for l in range(1, p + 1):
            b[(p, l)] = b.get((p - 1, l), 0) + (p - 1) * b.get((p - 1, l - 1), 0)
    d: dict[tuple[int, int], int] = {(0, 1): 1}
    for nu in range(1, nu_max + 1):
        for i in range(1, nu + 1):
            d[(nu, i)] = d.get((nu - 1, i), 0) + (nu + 1 - i) * d.get((nu - 1, i - 1), 0)
    return BDTables(p_max, nu_max, b, d)


# ---------------------------------------------------------------------- p


@dataclass(frozen=True)
class PTable:
    """``rows[i][j] = p_{i,j}`` for ``0 <= j <= i <= p``."""

    p: int
    theta: Fraction
    gamma: Fraction
    q: Fraction
    f: Fraction
    rows: tuple[tuple[Fraction, ...], ...]

    def __getitem__(self, ij: tuple[int, int]) -> Fraction:
        i, j = ij
        if i < 0 or i > self.p or j < 0 or j > i:
            return Fraction(0)
        return self.rows[i][j]

    def to_json(self) -> str:
        return json.dumps({"p": self.p, "theta": str(self.theta), "gamma": str(self.gamma),
                           "q": str(self.q), "f": str(self.f),
                           "rows": [[str(x) for x in row] for row in self.rows]},
                          sort_keys=True, indent=1)


def p_coeffs(p: int, theta, gamma, q, f) -> PTable:
    """Closed-form coefficients: explicit rows 0 and 1, the double sum for
    ``2 <= i <= p-1`` and, for ``i = p``, the expansion of
    ``prod_k (X + gamma a - k theta)`` in powers of ``a``:
    ``gamma^j sum_nu C(nu, j) (-theta)^{p-nu} X^{nu-j} b_{p,p-nu+1}``."""
    theta, gamma, q, f = (as_fraction(x) for x in (theta, gamma, q, f))
    if p < 1:
        raise ValueError("p must be >= 1")
    bd = bd_tables(p, p)
    X = 1 - theta + q + gamma * f
    rows: list[tuple[Fraction, ...]] = [(Fraction(1),)]
    rows.append((p * (Fraction(p + 1, 2) * (1 - theta) + q + gamma * f), p * gamma))
    for i in range(2, p):
        row = []
        for j in range(i + 1):
            s = Fraction(0)
            for nu in range(j, i + 1):
                for mu in range(nu, i + 1):
                    s += (Fraction(math.factorial(p + nu - mu),
                                   math.factorial(j) * math.factorial(nu - j) * math.factorial(p - mu))
                          * (-theta) ** (mu - nu) * X ** (nu - j)
                          * bd.B(p, mu - nu + 1) * bd.D(p - mu, i - mu + 1))
            row.append(gamma**j * s)
        rows.append(tuple(row))
    if p >= 2:
        row = []
        for j in range(p + 1):
            s = Fraction(0)
            for nu in range(j, p + 1):
                s += math.comb(nu, j) * (-theta) ** (p - nu) * X ** (nu - j) * bd.B(p, p - nu + 1)
            row.append(gamma**j * s)
        rows.append(tuple(row))
    return PTable(p, theta, gamma, q, f, tuple(rows))


def p_monomial_lhs(p: int, theta, gamma, q, f, a, b) -> Fraction:
    """Scalar produced by ``[rho^{-theta}(1-theta+rho d)]^p`` on ``rho^q t^f * t^a rho^b``."""
    out = Fraction(1)
    for k in range(p):
        out *= 1 - theta + q + gamma * (f + a) + b - k * theta
    return out


def p_monomial_rhs(table: PTable, a, b) -> Fraction:
    """Scalar produced by the tabulated expansion on ``t^a rho^b``."""
    return sum((table[i, j] * Fraction(a) ** j * pochhammer(Fraction(b), table.p - i)
                for i in range(table.p + 1) for j in range(i + 1)), Fraction(0))


@dataclass
class OracleReport:
    ok: bool
    residuals: list[tuple[tuple, Fraction]]
    mismatched: list[tuple[int, int]]


def p_table_by_interpolation(p: int, theta, gamma, q, f) -> PTable:
    """Recover every ``p_{i,j}`` from the monomial identity alone.

    The left side is a polynomial in ``(a, b)``; writing it in the basis
    ``a^j (b)_{p-i}`` is a triangular change of basis in ``b`` followed by
    reading off powers of ``a``.
    """
    theta, gamma, q, f = (as_fraction(x) for x in (theta, gamma, q, f))
    # product of p linear forms (c0 + gamma a + b - k theta); track poly in (a, b)
    poly: dict[tuple[int, int], Fraction] = {(0, 0): Fraction(1)}
    base = 1 - theta + q + gamma * f
    for k in range(p):
        nxt: dict[tuple[int, int], Fraction] = {}
        c0 = base - k * theta
        for (ea, eb), v in poly.items():
            for (da, db), w in (((0, 0), c0), ((1, 0), gamma), ((0, 1), Fraction(1))):
                key = (ea + da, eb + db)
                nxt[key] = nxt.get(key, 0) + v * w
        poly = nxt
    # for each power of a, convert the b-polynomial to falling factorials
    rows = [[Fraction(0)] * (i + 1) for i in range(p + 1)]
    for j in range(p + 1):
        bpoly = {eb: v for (ea, eb), v in poly.items() if ea == j}
        for deg in range(p - j, -1, -1):
            c = bpoly.get(deg, Fraction(0))
            if not c:
                continue
            i = p - deg
            if j > i:
                raise ArithmeticError("monomial expansion leaves the admissible band")
            rows[i][j] += c
            # subtract c * (b)_deg expanded in powers of b
            fall = _falling_coeffs(deg)
            for e, w in enumerate(fall):
                bpoly[e] = bpoly.get(e, 0) - c * w
    return PTable(p, theta, gamma, q, f, tuple(tuple(r) for r in rows))


@lru_cache(maxsize=None)
def _falling_coeffs(k: int) -> tuple[int, ...]:
    """Power-basis coefficients of ``b(b-1)...(b-k+1)``."""
    c = [1]
    for s in range(k):
        nxt = [0] * (len(c) + 1)
        for e, w in enumerate(c):
            nxt[e + 1] += w
            nxt[e] -= s * w
        c = nxt
    return tuple(c)


def p_oracle(p: int, theta, gamma, q, f, monomials: Iterable[tuple]) -> OracleReport:
    """Compare both sides of the expansion exactly on monomials ``t^a rho^b``
    and cell-by-cell against the interpolated table."""
    table = p_coeffs(p, theta, gamma, q, f)
    res = []
    ok = True
    for a, b in monomials:
        a, b = as_fraction(a), as_fraction(b)
        r = p_monomial_lhs(p, table.theta, table.gamma, table.q, table.f, a, b) - p_monomial_rhs(table, a, b)
        res.append(((a, b), r))
        ok &= r == 0
    ref = p_table_by_interpolation(p, theta, gamma, q, f)
    bad = [(i, j) for i in range(p + 1) for j in range(i + 1) if table[i, j] != ref[i, j]]
    return OracleReport(ok and not bad, res, bad)


# ------------------------------------------------------- reduced operators


@dataclass(frozen=True)
class OperatorTable:
    """Coefficients of the reduced operators, ``P_i = K(t) sum_j p_ij (t d_t)^j d_rho^{2m-i}``
    with the common factor ``K(t) = t^{2n} ((2m-1)/(2im))^{2m}``."""

    params: Params
    rows: tuple[tuple[Fraction, ...], ...]
    primary: PTable
    secondary: PTable

    def __getitem__(self, ij: tuple[int, int]) -> Fraction:
        i, j = ij
        if i < 0 or i >= len(self.rows) or j < 0 or j > i:
            return Fraction(0)
        return self.rows[i][j]

    def to_json(self) -> str:
        return json.dumps({"params": self.params.as_dict(),
                           "rows": [[str(x) for x in row] for row in self.rows]},
                          sort_keys=True, indent=1)


def operator_table(params: Params) -> OperatorTable:
    """``p_ij = p1_ij - m theta p2_{i-1,j}``.

    ``p1`` comes from ``y^{2m} D_y^2`` (p = 2m, q = r + 2 theta - 2n gamma)
    and ``p2`` from ``(m/i) y^{2m-1} D_y`` (p = 2m-1, q = r + theta - 2n gamma),
    both with ``f = 2n``; the second family sits one power of rho lower.
    """
    n, m = params.n, params.m
    th, ga, r = params.theta, params.gamma, params.r
    P1 = p_coeffs(2 * m, th, ga, r + 2 * th - 2 * n * ga, 2 * n)
    if 2 * m - 1 >= 1:
        P2 = p_coeffs(2 * m - 1, th, ga, r + th - 2 * n * ga, 2 * n)
    rows = []
    for i in range(2 * m + 1):
        rows.append(tuple(P1[i, j] - m * th * P2[i - 1, j] for j in range(i + 1)))
    return OperatorTable(params, tuple(rows), P1, P2)


def transfer_weight(table: OperatorTable, delta: DeltaTable, i: int, src: int, dst: int) -> Fraction:
    """Weight of ``g_src^{(2m-i)}`` in the ``v_dst`` coefficient of ``P_i (g v_src)``:
    ``sum_{j=|dst-src|}^{i} p_ij delta_{dst-src}^{src,j}``."""
    jump = dst - src
    return sum((table[i, j] * delta.get(jump, src, j) for j in range(abs(jump), i + 1)), Fraction(0))


def pi_weights(i: int, sources: Iterable[int], table: OperatorTable, delta: DeltaTable
               ) -> dict[int, list[tuple[Fraction, int]]]:
    """Symbolic image of ``P_i`` on ``sum_src g_src v_src`` (common factor dropped):
    ``{dst: [(weight, src), ...]}``; every term carries ``d_rho^{2m-i}``."""
    out: dict[int, list[tuple[Fraction, int]]] = {}
    for src in sorted(sources):
        for dst in range(max(src - i, 0), src + i + 1):
            w = transfer_weight(table, delta, i, src, dst)
            if w:
                out.setdefault(dst, []).append((w, src))
    return out


def apply_Pi(i: int, expansion: Mapping[int, Callable[[int], object]], params: Params,
             table: OperatorTable | None = None, delta: DeltaTable | None = None) -> dict[int, object]:
    """Coefficients of ``v_p`` in ``P_i u / K(t)`` for ``u = sum_p g_p v_p``.

    ``expansion[p]`` is a handle returning ``g_p^{(k)}`` when called with ``k``.
    For ``i = 0`` the result is ``Theta_p g_p = g_p^{(2m)} + (2mi/(2m-1))^{2m} E_p g_p``.
    """
    m = params.m
    if i < 0 or i > 2 * m:
        raise ValueError("operator index out of range")
    if i == 0:
        return {p: h(2 * m) + complex(params.theta_const(params.E(p))) * h(0) for p, h in expansion.items()}
    table = table or operator_table(params)
    kmax = max(expansion) + i + 1
    delta = delta or delta_table(params.n, kmax, 2 * m)
    out: dict[int, object] = {}
    for dst, terms in pi_weights(i, expansion.keys(), table, delta).items():
        acc = 0
        for w, src in terms:
            acc = acc + float(w) * expansion[src](2 * m - i)
        out[dst] = acc
    return out


@lru_cache(maxsize=None)
def delta_table_from_oracle(n: int, k_max: int, i_max: int) -> DeltaTable:
    """Same table as :func:`delta_table`, filled cell by cell from :func:`delta_oracle`."""
    entries = {(k, i): delta_oracle(n, k, i) for k in range(k_max + 1) for i in range(i_max + 1)}
    return DeltaTable(n, k_max, i_max, entries)


def b_identity_residual(p: int, a, theta, bd: BDTables | None = None) -> Fraction:
    """``prod_{q=1}^p (1 + a - q theta) - sum_l (-theta)^{l-1} b_{p,l} (1 - theta + a)^{p+1-l}``."""
    a, theta = Fraction(a), Fraction(theta)
    bd = bd or bd_tables(max(p, 1), 1)
    lhs = Fraction(1)
    for q in range(1, p + 1):
        lhs *= 1 + a - q * theta
    rhs = sum(((-theta) ** (l - 1) * bd.B(p, l) * (1 - theta + a) ** (p + 1 - l)
               for l in range(1, p + 1)), Fraction(0))
    return lhs - rhs


def d_identity_residual(nu: int, a, bd: BDTables | None = None) -> Fraction:
    """``a^nu - sum_i d_{nu,i} (a)_{nu+1-i}`` with the falling factorial ``(a)_k``."""
    a = Fraction(a)
    bd = bd or bd_tables(1, nu)
    rhs = Fraction(0)
    for i in range(1, nu + 1):
        k = nu + 1 - i
        fall = Fraction(1)
        for j in range(k):
            fall *= a - j
        rhs += bd.D(nu, i) * fall
    return a**nu - rhs
