"""Fundamental solutions of ``Theta = d^{2m} + (2mi/(2m-1))^{2m} E`` and convolution.

``G(rho) = sum_{j<m} a_j exp(mu_j |rho|)`` with ``mu_j = i c lambda_j``,
``lambda_j = exp(i pi (1+2j)/(2m))``; the amplitudes come from the residues of
``(-1)^m / (sigma^{2m} + c^{2m})`` in the upper half plane.

Convolutions are carried out on a composite Gauss-Legendre grid in shifted
("hat") variables ``h(rho) = exp(s rho) g(rho)``, which removes the common
exponential factor of the data.  Each exponential mode is integrated exactly
against the panel interpolant of the data, so the cost is linear in the grid
size and independent of how stiff the mode is.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import mpmath
import numpy as np
from scipy.signal import lfilter

from . import jets
from .exactnum import DEFAULT_PREC


@dataclass(frozen=True)
class OdeOperator:
    m: int
    E: int
    prec: int = DEFAULT_PREC

    @property
    def c(self) -> mpmath.mpf:
        with mpmath.workprec(self.prec):
            return mpmath.mpf(2 * self.m) / (2 * self.m - 1) * mpmath.root(self.E, 2 * self.m)

    @property
    def const(self) -> mpmath.mpc:
        with mpmath.workprec(self.prec):
            return (mpmath.mpc(0, 2 * self.m) / (2 * self.m - 1)) ** (2 * self.m) * self.E

    def lam(self, j: int) -> mpmath.mpc:
        with mpmath.workprec(self.prec):
            return mpmath.expjpi(mpmath.mpf(1 + 2 * j) / (2 * self.m))

    def roots(self) -> list[mpmath.mpc]:
        """All characteristic roots ``i c lambda_j``, ``j = 0..2m-1``."""
        with mpmath.workprec(self.prec):
            return [mpmath.mpc(0, 1) * self.c * self.lam(j) for j in range(2 * self.m)]

    def symbol(self, mu) -> mpmath.mpc:
        with mpmath.workprec(self.prec):
            return mu ** (2 * self.m) + self.const


@dataclass(frozen=True)
class GreensFn:
    op: OdeOperator
    amps: tuple
    mus: tuple
    amp_np: np.ndarray = field(repr=False, compare=False)
    mu_np: np.ndarray = field(repr=False, compare=False)

    @property
    def m(self) -> int:
        return self.op.m

    def __call__(self, rho) -> np.ndarray:
        return greens_deriv(self, 0, rho)

    def decay_rate(self) -> float:
        return float(self.op.c * mpmath.sin(mpmath.pi / (2 * self.m)))


class GreensError(RuntimeError):
    pass


def greens(op: OdeOperator, check: bool = True, tol: float = 1e-6) -> GreensFn:
    """Fundamental solution by residues; ``a_j = -i (-1)^m lambda_j / (2m c^{2m-1})``."""
    m = op.m
    with mpmath.workprec(op.prec):
        c = op.c
        amps, mus = [], []
        for j in range(m):
            sigma = c * op.lam(j)
            # (1/2pi) * 2 pi i * residue of (-1)^m/(sigma^{2m}+c^{2m}) at sigma_j
            amps.append(mpmath.mpc(0, 1) * (-1) ** m / (2 * m * sigma ** (2 * m - 1)))
            mus.append(mpmath.mpc(0, 1) * sigma)
    G = GreensFn(op, tuple(amps), tuple(mus),
                 np.array([complex(a) for a in amps]), np.array([complex(u) for u in mus]))
    if check:
        res = weak_delta_check(G)
        if res > tol:
            raise GreensError(f"weak delta residual {res:.3e} exceeds {tol:.1e}")
    return G


def greens_deriv(G: GreensFn, ell: int, rho, side: int = 1) -> np.ndarray:
    """``G^{(ell)}(rho)`` for ``ell <= 2m-1``; at ``rho = 0`` the one-sided
    limit from the ``side`` (+1 or -1) is returned."""
    if ell < 0 or ell >= 2 * G.m:
        raise ValueError("derivative order must lie in [0, 2m-1]; order 2m carries a delta")
    rho = np.asarray(rho, dtype=float)
    sgn = np.where(rho > 0, 1.0, np.where(rho < 0, -1.0, float(side)))
    a = np.abs(rho)[..., None]
    vals = (G.amp_np * G.mu_np**ell * np.exp(G.mu_np * a)).sum(axis=-1)
    return vals * sgn**ell


def jump_sum(G: GreensFn) -> complex:
    """``2 sum_j a_j mu_j^{2m-1}``: the jump of ``G^{(2m-1)}`` at 0; equals 1."""
    with mpmath.workprec(G.op.prec):
        return complex(2 * sum(a * u ** (2 * G.m - 1) for a, u in zip(G.amps, G.mus)))


def root_residuals(op: OdeOperator) -> list[float]:
    with mpmath.workprec(op.prec):
        return [float(abs(op.symbol(mu)) / abs(op.const)) for mu in op.roots()]


def decay_constant(G: GreensFn, rho: np.ndarray | None = None) -> float:
    """Least ``K`` with ``|G| <= K c^{-(2m-1)} exp(-c sin(pi/2m) |rho|)`` on the grid."""
    rate = G.decay_rate()
    if rho is None:
        rho = np.concatenate([[0.0], np.logspace(-4, math.log10(200.0 / rate), 400)])
    c = float(G.op.c)
    with np.errstate(divide="ignore"):
        logs = np.log(np.abs(G(rho))) + (2 * G.m - 1) * math.log(c) + rate * np.abs(rho)
    return float(np.exp(logs[np.isfinite(logs)].max()))


def printed_closed_form(op: OdeOperator, rho) -> np.ndarray:
    """Trigonometric closed form with prefactor ``(i c)^{-(2m-1)}/m``.

    Kept as a cross-check only; it differs from the residue solution by a
    constant unimodular factor measured by :func:`discrepancy_constant`.
    """
    m = op.m
    c = float(op.c)
    r = np.abs(np.asarray(rho, dtype=float))
    total = np.zeros_like(r, dtype=complex)
    for j in range((m - 1) // 2 + 1):
        th = math.pi * (1 + 2 * j) / (2 * m)
        weight = 0.5 if (m % 2 == 1 and j == (m - 1) // 2) else 1.0
        total += weight * np.exp(-c * math.sin(th) * r) * np.sin(c * r * math.cos(th) + th)
    return (1j * c) ** (-(2 * m - 1)) / m * total


def discrepancy_constant(G: GreensFn) -> complex:
    """Ratio of the printed closed form to the residue solution (constant in rho)."""
    rho = np.linspace(0.05, 3.0, 40)
    ratio = printed_closed_form(G.op, rho) / G(rho)
    return complex(np.median(ratio.real) + 1j * np.median(ratio.imag))


# ----------------------------------------------------------- weak delta test


def weak_delta_check(G: GreensFn, bumps=((0.0, 1.0), (0.3, 0.8), (-0.5, 1.5)),
                     panels: int = 2, max_panels: int = 256) -> float:
    """max over bumps of ``|int G Theta phi - phi(0)|`` relative to ``max|phi|``.

    ``phi`` is the standard bump centred at ``a`` with half-width ``w``; the
    quadrature splits at the kink ``rho = 0`` and doubles until it settles.
    """
    m = G.m
    const = complex(G.op.const)
    worst = 0.0
    for a, w in bumps:

        def integral(npan):
            x, wt, _ = _gauss(32)
            total, size = 0.0, 0.0
            lo, hi = a - w, a + w
            for s0, e0 in ((lo, min(hi, 0.0)), (max(lo, 0.0), hi)):
                if e0 <= s0:
                    continue
                edges = np.linspace(s0, e0, npan + 1)
                s, e = edges[:-1, None], edges[1:, None]
                rho = (0.5 * (e - s) * x + 0.5 * (e + s)).ravel()
                wt_all = (0.5 * (e - s) * wt).ravel()
                d = jets.bump((rho - a) / w, 2 * m)
                theta_phi = d[2 * m] / w ** (2 * m) + const * d[0]
                vals = G(rho) * theta_phi
                total = total + np.sum(wt_all * vals)
                size += np.sum(wt_all * np.abs(vals))
            return total, size

        phi0 = jets.bump(np.array([-a / w]), 0)[0, 0]
        npan, (prev, size) = panels, integral(panels)
        while True:
            npan *= 2
            cur, size = integral(npan)
            if abs(cur - prev) < 1e-14 * size or npan >= max_panels:
                break
            prev = cur
        if abs(cur - prev) > 1e-10 * size:
            raise GreensError("weak delta quadrature did not settle")
        worst = max(worst, abs(cur - phi0) / math.exp(-1.0))
    return worst


# --------------------------------------------------------------- the grid


@lru_cache(maxsize=None)
def _gauss(q: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    x, w = np.polynomial.legendre.leggauss(q)
    # barycentric weights for Legendre nodes
    bw = np.array([1.0 / np.prod(x[i] - np.delete(x, i)) for i in range(q)])
    bw /= np.abs(bw).max()
    return x, w, bw


def lagrange_matrix(x: np.ndarray, targets: np.ndarray, bw: np.ndarray) -> np.ndarray:
    """Matrix evaluating the interpolant through nodes ``x`` at ``targets``."""
    diff = targets[:, None] - x[None, :]
    exact = diff == 0
    diff[exact] = 1.0
    k = bw / diff
    mat = k / k.sum(axis=1, keepdims=True)
    rows = exact.any(axis=1)
    mat[rows] = exact[rows].astype(float)
    return mat


@dataclass(frozen=True)
class Grid:
    """Composite Gauss-Legendre grid with equal panels of length ``h``."""

    start: float
    h: float
    panels: int
    q: int = 16

    @property
    def stop(self) -> float:
        return self.start + self.h * self.panels

    @property
    def nodes(self) -> np.ndarray:
        x, _, _ = _gauss(self.q)
        left = self.start + self.h * np.arange(self.panels)
        return (left[:, None] + 0.5 * self.h * (x[None, :] + 1.0)).ravel()

    @property
    def weights(self) -> np.ndarray:
        _, w, _ = _gauss(self.q)
        return np.tile(0.5 * self.h * w, self.panels)

    @property
    def size(self) -> int:
        return self.panels * self.q

    def interpolate(self, values: np.ndarray, rho) -> np.ndarray:
        """Evaluate the panel interpolant of ``values`` (last axis = nodes) at ``rho``."""
        rho = np.atleast_1d(np.asarray(rho, dtype=float))
        x, _, bw = _gauss(self.q)
        k = np.clip(((rho - self.start) / self.h).astype(int), 0, self.panels - 1)
        loc = 2.0 * (rho - self.start - k * self.h) / self.h - 1.0
        vals = values.reshape(values.shape[:-1] + (self.panels, self.q))
        out = np.empty(values.shape[:-1] + rho.shape, dtype=values.dtype)
        for panel in np.unique(k):
            sel = k == panel
            mat = lagrange_matrix(x, loc[sel], bw)
            out[..., sel] = vals[..., panel, :] @ mat.T
        return out

    def contains(self, rho) -> np.ndarray:
        rho = np.asarray(rho, dtype=float)
        return (rho >= self.start) & (rho <= self.stop)


def make_grid(start: float, stop: float, h_max: float, align: float | None = None, q: int = 16) -> Grid:
    """Grid from ``start`` covering ``stop``; ``h`` divides ``align`` when given."""
    if align:
        h = align / math.ceil(align / h_max)
    else:
        h = h_max
    panels = math.ceil((stop - start) / h - 1e-12)
    return Grid(start, h, panels, q)


@lru_cache(maxsize=256)
def _exp_matrices(lam_h: complex, q: int) -> tuple[np.ndarray, np.ndarray]:
    """For one panel mapped to ``[-1, 1]`` and ``z = lam * h/2``:

    ``fwd[i, k] = (h/2) int_{-1}^{x_i} exp(z (x_i - s)) L_k(s) ds`` for targets
    ``x_0..x_{q-1}, +1`` and ``bwd[i, k] = (h/2) int_{x_i}^{1} exp(z (s - x_i)) L_k(s) ds``
    for targets ``-1, x_0..x_{q-1}``.  Returned without the ``h/2`` factor.
    """
    z = lam_h / 2.0
    x, _, bw = _gauss(q)
    sx, sw = np.polynomial.legendre.leggauss(2 * q + 8)
    fwd = np.zeros((q + 1, q), dtype=complex)
    for i, xi in enumerate(list(x) + [1.0]):
        half = 0.5 * (xi + 1.0)
        s = half * sx + (xi - half)
        L = lagrange_matrix(x, s, bw)
        fwd[i] = (half * sw * np.exp(z * (xi - s))) @ L
    bwd = np.zeros((q + 1, q), dtype=complex)
    for i, xi in enumerate([-1.0] + list(x)):
        half = 0.5 * (1.0 - xi)
        s = half * sx + (xi + half)
        L = lagrange_matrix(x, s, bw)
        bwd[i] = (half * sw * np.exp(z * (s - xi))) @ L
    return fwd, bwd


def _tail_powers(lam: complex) -> range:
    if lam.real < -1e-12:
        return range(0, 6)
    if abs(lam) > 1e-12:
        return range(1, 7)
    return range(2, 8)


def tail_integral(grid: Grid, values: np.ndarray, lam: complex, fraction: float = 0.25) -> complex:
    """``int_X^inf exp(lam (tau - X)) r(tau) dtau`` with ``X = grid.stop``.

    ``r`` is fitted on the last ``fraction`` of the grid by ``sum alpha_k tau^{-k}``
    and integrated exactly: ``X^{1-k} exp(-lam X) E_k(-lam X)``.
    """
    if lam.real > 1e-12:
        raise ValueError("growing mode has no tail integral")
    X = grid.stop
    nodes = grid.nodes
    sel = nodes >= grid.stop - fraction * (grid.stop - grid.start)
    ks = list(_tail_powers(lam))
    basis = np.stack([(X / nodes[sel]) ** k for k in ks], axis=1)
    scale = np.abs(values[sel]).max()
    if scale <= 1e-300 or scale < 1e-20 * np.abs(values).max():
        return 0j
    coef, *_ = np.linalg.lstsq(basis, values[sel] / scale, rcond=None)
    total = mpmath.mpc(0)
    zX = -lam * X
    for k, a in zip(ks, coef):
        a = complex(a) * scale  # coefficient of (X/tau)^k
        if k == 0:
            total += a * (-1.0 / lam)
        elif abs(zX) < 1e-14:
            total += a * X / (k - 1)
        else:
            total += a * X * mpmath.exp(zX) * mpmath.expint(k, zX)
    return complex(total)


def mode_integrals(grid: Grid, values: np.ndarray, lam: complex, direction: str,
                   tail: bool = True) -> np.ndarray:
    """Exponential-kernel integrals of tabulated data at the grid nodes.

    ``direction='forward'``: ``F(rho) = int_{start}^{rho} exp(lam (rho - tau)) r(tau) dtau``.
    ``direction='backward'``: ``B(rho) = int_{rho}^{inf} exp(lam (tau - rho)) r(tau) dtau``,
    with the part beyond the grid closed analytically.
    """
    if lam.real > 1e-9:
        raise ValueError("mode must not grow in the integration direction")
    q, P, h = grid.q, grid.panels, grid.h
    fwd, bwd = _exp_matrices(complex(lam * h), q)
    r = values.reshape(P, q)
    decay = np.exp(lam * h)
    x, _, _ = _gauss(q)
    if direction == "forward":
        local = (0.5 * h) * (r @ fwd.T)  # (P, q+1)
        # S_k = value at the left boundary of panel k
        incr = local[:, q]
        S = lfilter([1.0], [1.0, -decay], np.concatenate([[0.0], incr]))[:-1]
        prop = np.exp(lam * 0.5 * h * (x + 1.0))
        out = S[:, None] * prop[None, :] + local[:, :q]
    elif direction == "backward":
        local = (0.5 * h) * (r @ bwd.T)  # (P, q+1): column 0 is the left endpoint
        incr = local[:, 0][::-1]
        start = tail_integral(grid, values, lam) if tail else 0j
        T = lfilter([1.0], [1.0, -decay], np.concatenate([[start], incr]))
        # T[k] = value at the right boundary of panel P-1-k+1 ... reorder to right boundaries
        right = T[:-1][::-1]
        prop = np.exp(lam * 0.5 * h * (1.0 - x))
        out = right[:, None] * prop[None, :] + local[:, 1:]
    else:
        raise ValueError(direction)
    return out.ravel()


@dataclass
class Tabulated:
    """Hat-variable table: row k holds ``exp(shift rho) g^{(k)}(rho)`` at the grid nodes."""

    grid: Grid
    shift: complex
    rows: np.ndarray

    def at(self, rho, orders=None) -> np.ndarray:
        rows = self.rows if orders is None else self.rows[list(orders)]
        return self.grid.interpolate(rows, rho)

    def value(self, k: int, rho) -> np.ndarray:
        """Un-shifted ``g^{(k)}(rho)``."""
        rho = np.atleast_1d(np.asarray(rho, dtype=float))
        return np.exp(-self.shift * rho) * self.grid.interpolate(self.rows[k], rho)


def convolve(G: GreensFn, rhs_hat: np.ndarray, grid: Grid, shift: complex = 0.0,
             orders=None, marginal=(), tail: bool = True) -> Tabulated:
    """``(G^{(k)} * rhs)`` for the requested orders, in hat variables.

    ``rhs_hat`` is ``exp(shift tau) rhs(tau)`` at the grid nodes, with ``rhs``
    vanishing below ``grid.start``.  Modes listed in ``marginal`` have their
    homogeneous part ``a_j exp(mu_j rho) int exp(-mu_j tau) rhs`` removed, which
    turns their forward integral into ``-int_rho^inf``.  Order ``2m`` is
    returned as ``rhs - const * g``.
    """
    m = G.m
    if orders is None:
        orders = range(2 * m + 1)
    orders = list(orders)
    rows = np.zeros((len(orders), grid.size), dtype=complex)
    if not np.any(rhs_hat):
        return Tabulated(grid, shift, rows)
    A, B = [], []
    for j in range(m):
        mu = complex(G.mu_np[j])
        lam_f = mu + shift
        if j in marginal:
            A.append(-mode_integrals(grid, rhs_hat, -lam_f, "backward", tail))
        else:
            A.append(mode_integrals(grid, rhs_hat, lam_f, "forward"))
        B.append(mode_integrals(grid, rhs_hat, mu - shift, "backward", tail))
    g0 = None
    for idx, k in enumerate(orders):
        if k < 2 * m:
            acc = np.zeros(grid.size, dtype=complex)
            for j in range(m):
                acc += G.amp_np[j] * G.mu_np[j] ** k * (A[j] + (-1) ** k * B[j])
            rows[idx] = acc
        elif k == 2 * m:
            if g0 is None:
                g0 = sum(G.amp_np[j] * (A[j] + B[j]) for j in range(m))
            rows[idx] = rhs_hat - complex(G.op.const) * g0
        else:
            raise ValueError("orders above 2m are not available from the modes")
    return Tabulated(grid, shift, rows)


def marginal_indices(G: GreensFn, shift: complex, tol: float = 1e-9) -> tuple[int, ...]:
    """Modes whose shifted exponent ``mu_j + shift`` has zero real part."""
    return tuple(j for j in range(G.m) if abs((G.mu_np[j] + shift).real) < tol)


def marginal_corrections(G0: GreensFn, rhs_hat: np.ndarray, grid: Grid, shift: complex
                         ) -> tuple[Tabulated, Tabulated]:
    """Homogeneous solutions ``h_j = a_j exp(mu_j rho) int exp(-mu_j tau) rhs`` for the
    two marginal modes ``j = 0`` and ``j = m-1`` (the same mode when ``m = 1``).

    Returned in hat variables with rows ``k = 0..2m``.
    """
    m = G0.m
    rho = grid.nodes
    out = []
    for j in (0, m - 1):
        if j == m - 1 and m == 1 and out:
            out.append(Tabulated(grid, shift, np.zeros_like(out[0].rows)))
            continue
        lam = complex(G0.mu_np[j]) + shift
        weights = grid.weights * np.exp(-lam * rho)
        total = np.sum(weights * rhs_hat) + np.exp(-lam * grid.stop) * tail_integral(grid, rhs_hat, -lam)
        base = G0.amp_np[j] * np.exp(lam * rho) * total
        rows = np.array([G0.mu_np[j] ** k * base for k in range(2 * m + 1)])
        out.append(Tabulated(grid, shift, rows))
    return out[0], out[1]
