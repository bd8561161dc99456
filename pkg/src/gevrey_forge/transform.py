"""The oscillatory kernel, the remainder of the truncated solution, and the
Fourier trace used to read off the Gevrey index.

The kernel with exponent ``e`` is

    K_e[u](x, y) = int_0^inf exp(i y rho^theta) rho^e u(rho^gamma x, rho) drho,

and ``M K_r[u] = K_{r + 2 gamma}[sum_i rho^{-i} P_i u]``.  Coefficients of the
truncated solution are always handled in hat form ``exp(c1 rho) g(rho)``;
the exponential is reattached only at the very end (often as a logarithm).
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.optimize import minimize_scalar

from .greens import _gauss
from .solver import FormalSolution
from .spectral import EVEN, ExpPoly, eigenfunction


class QuadratureBudgetError(RuntimeError):
    """Raised when a node set would exceed the budget; carries the estimate."""

    def __init__(self, message: str, nodes_needed: int):
        super().__init__(message)
        self.nodes_needed = nodes_needed


class RemainderSupportError(RuntimeError):
    pass


# ---------------------------------------------------------------- helpers


@lru_cache(maxsize=None)
def _diff_matrix(q: int) -> np.ndarray:
    """Differentiation matrix on the Legendre nodes of ``[-1, 1]``."""
    x, _, bw = _gauss(q)
    D = (bw[None, :] / bw[:, None]) / (x[:, None] - x[None, :] + np.eye(q))
    np.fill_diagonal(D, 0.0)
    np.fill_diagonal(D, -D.sum(axis=1))
    return D


def grid_derivative(grid, values: np.ndarray) -> np.ndarray:
    """Panelwise spectral derivative of values sampled at ``grid.nodes``."""
    vals = values.reshape(values.shape[:-1] + (grid.panels, grid.q))
    out = vals @ _diff_matrix(grid.q).T * (2.0 / grid.h)
    return out.reshape(values.shape)


def _kfactor(params) -> complex:
    m = params.m
    return ((2 * m - 1) / (2j * m)) ** (2 * m)


def _eig(p: int, n: int) -> ExpPoly:
    return eigenfunction(EVEN, p, n).rep


# -------------------------------------------------------------- remainder


@dataclass
class RemainderLevel:
    """Hat coefficients of ``w_ell / K(t)`` on the grid: row p multiplies ``v_p``."""

    ell: int
    values: np.ndarray
    scale: np.ndarray
    complete: bool

    def ratio(self) -> np.ndarray:
        num = np.abs(self.values).max(axis=0)
        den = self.scale.max(axis=0)
        out = np.zeros_like(num)
        nz = den > 0
        out[nz] = num[nz] / den[nz]
        return out


class Remainder:
    """Split of ``M K[u~]`` into level pieces ``w_ell``.

    ``w_ell`` gathers the bracketed first-kind terms (cutoffs frozen, the level
    system cancelling them away from the ramps) and the terms in which a
    derivative falls on ``omega_ell``.  Levels past ``lmax`` only contain the
    leftovers of the truncation.  The second derivative of the top row is taken
    spectrally from the stored ``2m-1`` row, so ``Theta_p g`` is recomputed
    rather than read back from the solver.
    """

    def __init__(self, sol: FormalSolution):
        self.sol = sol
        self.params = sol.params
        self.m = sol.m
        self.grid = sol.grid
        self.rho = sol.grid.nodes
        self.lmax = sol.solved_lmax
        self._omega: dict[int, np.ndarray] = {}
        self._theta_g: dict[tuple[int, int], np.ndarray] = {}
        # derivatives on omega_ell push components up to index ell + 2m
        self.width = self.lmax + 2 * self.m + 1

    def omega(self, ell: int) -> np.ndarray:
        if ell not in self._omega:
            if ell < 0:
                self._omega[ell] = np.zeros((2 * self.m + 1, self.rho.size))
            else:
                self._omega[ell] = self.sol.omega_derivs(ell, self.rho, 2 * self.m)
        return self._omega[ell]

    def row(self, ell: int, p: int, k: int) -> np.ndarray:
        if ell < 0 or (ell, p) not in self.sol.levels:
            return np.zeros(self.rho.size, dtype=complex)
        return self.sol.rows(ell, p)[k]

    def theta_g(self, ell: int, p: int) -> np.ndarray:
        """``Theta_p g_{ell,p}`` in hat form, top derivative taken spectrally."""
        key = (ell, p)
        if key not in self._theta_g:
            top = self.row(ell, p, 2 * self.m - 1)
            g2m = grid_derivative(self.grid, top) - self.sol.c1 * top
            self._theta_g[key] = g2m + self.sol.theta_const(p) * self.row(ell, p, 0)
        return self._theta_g[key]

    def _theta_size(self, ell: int, p: int) -> np.ndarray:
        top = self.row(ell, p, 2 * self.m - 1)
        return np.abs(grid_derivative(self.grid, top) - self.sol.c1 * top) \
            + abs(self.sol.theta_const(p)) * np.abs(self.row(ell, p, 0))

    def _transfer(self, i: int, lev: int, dst: int, skip_zero: bool = False):
        """Terms ``W_i(nu -> dst) g_{lev,nu}^{(2m-i)}`` (one array per source)."""
        out = []
        if lev < 0:
            return out
        for nu in range(max(dst - i, 0), min(dst + i, lev) + 1):
            if skip_zero and nu == 0:
                continue
            w = self.sol.weight(i, nu, dst)
            if w:
                out.append(float(w) * self.row(lev, nu, 2 * self.m - i))
        return out

    def level(self, ell: int) -> RemainderLevel:
        m, rho = self.m, self.rho
        P = self.width
        vals = np.zeros((P, rho.size), dtype=complex)
        scale = np.zeros((P, rho.size))
        own = ell <= self.lmax

        def add(p, arr):
            vals[p] += arr
            scale[p] += np.abs(arr)

        for p in range(P):
            if own and p <= ell:
                om0 = self.omega(ell)[0]
                vals[p] += om0 * self.theta_g(ell, p)
                scale[p] += np.abs(om0) * self._theta_size(ell, p)
            if p >= 1:
                for i in range(1, 2 * m + 1):
                    lev = ell - i
                    if lev < 0 or lev > self.lmax:
                        continue
                    om = self.omega(lev)[0]
                    for t in self._transfer(i, lev, p):
                        add(p, rho ** (-i) * om * t)
            else:
                if own:
                    for t in self._transfer(1, ell, 0, skip_zero=True):
                        add(0, rho ** (-1) * self.omega(ell)[0] * t)
                for i in range(2, 2 * m + 1):
                    lev = ell + 1 - i
                    if lev < 0 or lev > self.lmax:
                        continue
                    om = self.omega(lev)[0]
                    for t in self._transfer(i, lev, 0):
                        add(0, rho ** (-i) * om * t)
            if own:
                # derivatives landing on omega_ell
                om = self.omega(ell)
                for i in range(0, 2 * m + 1):
                    order = 2 * m - i
                    if i == 0:
                        srcs = [p] if p <= ell else []
                    else:
                        srcs = range(max(p - i, 0), min(p + i, ell) + 1)
                    for nu in srcs:
                        w = 1.0 if i == 0 else float(self.sol.weight(i, nu, p))
                        if w == 0:
                            continue
                        for gam in range(1, order + 1):
                            term = (w * math.comb(order, gam) * rho ** (-i) * om[gam]
                                    * self.row(ell, nu, order - gam))
                            add(p, term)
        return RemainderLevel(ell, vals, scale, own)

    def levels(self) -> list[RemainderLevel]:
        return [self.level(ell) for ell in range(self.lmax + 2 * self.m + 1)]

    def direct(self) -> np.ndarray:
        """``M K[u~]`` coefficients computed in one piece from the assembled ``G_p``."""
        m, rho, sol = self.m, self.rho, self.sol
        P = self.width
        Gk = np.zeros((P, 2 * m + 1, rho.size), dtype=complex)
        for p in range(P):
            for ell in range(p, self.lmax + 1):
                om = self.omega(ell)
                top = self.row(ell, p, 2 * m - 1)
                rows = [self.row(ell, p, k) for k in range(2 * m)]
                rows.append(grid_derivative(self.grid, top) - sol.c1 * top)
                # omega is differentiated exactly: its ramp start is not polynomial-resolved
                for k in range(2 * m + 1):
                    for gam in range(k + 1):
                        Gk[p, k] += math.comb(k, gam) * om[gam] * rows[k - gam]
        out = np.zeros((P, rho.size), dtype=complex)
        for p in range(P):
            out[p] = Gk[p, 2 * m] + sol.theta_const(p) * Gk[p, 0]
            for i in range(1, 2 * m + 1):
                for nu in range(max(p - i, 0), min(p + i, self.lmax) + 1):
                    w = sol.weight(i, nu, p)
                    if w:
                        out[p] += rho ** (-i) * float(w) * Gk[nu, 2 * m - i]
        return out


@dataclass
class SupportReport:
    ok: bool
    R: float
    per_level: list = field(default_factory=list)
    regroup_error: float = 0.0
    midzone_w1: float = 0.0

    def as_dict(self) -> dict:
        return {"ok": self.ok, "R": self.R, "per_level": self.per_level,
                "regroup_error": self.regroup_error, "midzone_w1": self.midzone_w1}


def remainder(sol: FormalSolution, tol: float = 1e-6, strict: bool = True) -> tuple[Remainder, SupportReport]:
    """Build every ``w_ell`` and check its support.

    For ``ell <= lmax``: relative size at most ``tol`` above ``4R(ell+1)``
    and exactly zero below ``2R(ell+1-2m)``.  Also checks that the level
    pieces add up to the directly assembled operator.
    """
    rem = Remainder(sol)
    R = sol.config.R
    m = sol.m
    rho = rem.rho
    levels = rem.levels()
    per = []
    ok = True
    for lev in levels:
        if not lev.complete:
            continue
        hi = rho > 4 * R * (lev.ell + 1)
        lo = rho < 2 * R * (lev.ell + 1 - 2 * m)
        ratio = lev.ratio()
        worst_hi = float(ratio[hi].max()) if hi.any() else 0.0
        zero_lo = bool(np.all(lev.values[:, lo] == 0)) if lo.any() else True
        passed = worst_hi <= tol and zero_lo
        ok &= passed
        per.append({"ell": lev.ell, "outer_ratio": worst_hi, "inner_exact_zero": zero_lo,
                    "max_abs": float(np.abs(lev.values).max()), "pass": passed})
    total = sum(l.values for l in levels)
    direct = rem.direct()
    scale = np.abs(direct).max() + sum(float(l.scale.max()) for l in levels)
    regroup = float(np.abs(total - direct).max() / scale)
    w1 = levels[1].values if len(levels) > 1 else np.zeros((1, rho.size))
    mid = (rho >= 4 * R) & (rho <= 8 * R)
    report = SupportReport(ok and regroup < tol, R, per, regroup,
                           float(np.abs(w1[:, mid]).max()) if mid.any() else 0.0)
    if strict and not report.ok:
        bad = [d for d in per if not d["pass"]]
        raise RemainderSupportError(f"remainder support violated: {bad or ('regroup', regroup)}")
    return rem, report


# ----------------------------------------------------------------- kernel


def oscillatory_nodes(lo: float, hi: float, y: float, theta: float, q: int = 16,
                      max_len: float = 0.5, frac: float = 0.5, budget: int = 2_000_000):
    """Composite Gauss nodes on ``[lo, hi]`` whose panels cover at most ``frac``
    of the local period ``2 pi / (theta |y| rho^{theta-1})``."""
    x, w, _ = _gauss(q)
    edges = [lo]
    a = lo
    ay = abs(y)
    while a < hi:
        L = max_len
        if ay > 0:
            L = min(L, frac * 2 * math.pi / (theta * ay * (a + L) ** (theta - 1)))
        a = min(a + L, hi)
        edges.append(a)
        if len(edges) * q > budget:
            est = int(q * ay * theta * hi**theta / (2 * math.pi * frac)) + q
            raise QuadratureBudgetError(f"oscillatory quadrature needs about {est} nodes", est)
    e = np.array(edges)
    half = 0.5 * np.diff(e)
    mid = 0.5 * (e[1:] + e[:-1])
    nodes = (mid[:, None] + half[:, None] * x[None, :]).ravel()
    weights = (half[:, None] * w[None, :]).ravel()
    return nodes, weights


class KernelIntegral:
    """Quadrature of ``K_e[u~]`` for a solved :class:`FormalSolution`.

    ``exponent`` defaults to ``r``; the reduced operator lives on
    ``r' = r + 2 gamma``.  Above ``rho_cut`` the integrand is below
    ``exp(-tail_digits)`` of its peak and is closed by the exponential bound
    ``|f(rho_cut)| / c0``, reported as the tail error.
    """

    def __init__(self, sol: FormalSolution, mode: str = "tilde", lmax: int | None = None,
                 tail_digits: float = 42.0, q: int = 16, budget: int = 2_000_000):
        self.sol = sol
        self.params = sol.params
        self.mode = mode
        self.lmax = sol.solved_lmax if lmax is None else lmax
        self.theta = float(self.params.theta)
        self.gamma = float(self.params.gamma)
        self.r = float(self.params.r)
        self.c1 = sol.c1
        self.c0 = sol.c0
        self.q = q
        self.budget = budget
        self.lo = sol.grid.start
        self.rho_cut = min(sol.grid.stop, self.lo + tail_digits / self.c0 + 10.0)
        self.n = self.params.n
        self.reps = [_eig(p, self.n) for p in range(self.lmax + 1)]
        self._cache: dict = {}

    def nodes(self, y_max: float):
        key = round(abs(y_max), 12)
        if key not in self._cache:
            rho, w = oscillatory_nodes(self.lo, self.rho_cut, y_max, self.theta, self.q,
                                       budget=self.budget)
            G = np.array([self.sol.G_hat(p, rho, 2 * self.sol.m, self.lmax, self.mode)
                          for p in range(self.lmax + 1)])
            self._cache = {key: (rho, w, G)}
        return self._cache[key]

    def _integrand(self, x: float, y: float, rho, G, exponent: float, order: int = 0):
        t = rho**self.gamma * x
        u = np.zeros(rho.size, dtype=complex)
        for p, rep in enumerate(self.reps):
            u += G[p, order] * rep(t)
        return np.exp(1j * y * rho**self.theta - self.c1 * rho) * rho**exponent * u

    def __call__(self, x: float, y: float, exponent: float | None = None, y_max: float | None = None) -> complex:
        rho, w, G = self.nodes(abs(y) if y_max is None else y_max)
        e = self.r if exponent is None else exponent
        return complex(np.sum(w * self._integrand(x, y, rho, G, e)))

    def estimate(self, x: float, y: float) -> tuple[complex, float]:
        """Value and error estimate (halved panels plus tail closure)."""
        v1 = self(x, y)
        rho, w = oscillatory_nodes(self.lo, self.rho_cut, y, self.theta, self.q, frac=0.25,
                                   budget=self.budget)
        G = np.array([self.sol.G_hat(p, rho, 0, self.lmax, self.mode) for p in range(self.lmax + 1)])
        v2 = complex(np.sum(w * self._integrand(x, y, rho, G, self.r)))
        end = np.array([self.rho_cut])
        Ge = np.array([self.sol.G_hat(p, end, 0, self.lmax, self.mode) for p in range(self.lmax + 1)])
        tail = abs(self._integrand(x, y, end, Ge, self.r)[0]) / self.c0
        return v2, abs(v2 - v1) + tail

    def reduced(self, x: float, y: float, y_max: float | None = None) -> complex:
        """``K_{r'}[sum_i rho^{-i} P_i u~](x, y)`` with every piece built in ``t``-space."""
        sol, params = self.sol, self.params
        m, n = sol.m, self.n
        rho, w, G = self.nodes(abs(y) if y_max is None else y_max)
        t = rho**self.gamma * x
        K = _kfactor(params) * t ** (2 * n)
        table = sol.table
        acc = np.zeros(rho.size, dtype=complex)
        for p, rep in enumerate(self.reps):
            vp = rep(t)
            ham = (-rep.deriv(2) + rep.mul_t(4 * n + 2))(t)
            acc += G[p, 0] * ham + K * vp * G[p, 2 * m]
            for i in range(1, 2 * m + 1):
                s = np.zeros(rho.size)
                for j in range(i + 1):
                    c = float(table[i, j])
                    if c:
                        s = s + c * rep.t_dt(j)(t)
                acc += rho ** (-i) * K * s * G[p, 2 * m - i]
        e = self.r + 2 * self.gamma
        integrand = np.exp(1j * y * rho**self.theta - self.c1 * rho) * rho**e * acc
        return complex(np.sum(w * integrand))


def kernel_eval(sol: FormalSolution, x: float, y: float, mode: str = "tilde") -> complex:
    return KernelIntegral(sol, mode)(x, y)


# ------------------------------------------------------- operator check

_D2 = np.array([1 / 90, -3 / 20, 3 / 2, -49 / 18, 3 / 2, -3 / 20, 1 / 90])
_D1 = np.array([-1 / 60, 3 / 20, -3 / 4, 0.0, 3 / 4, -3 / 20, 1 / 60])
_OFF = np.arange(-3, 4)


@dataclass
class OperatorCheck:
    points: list
    mismatches: list
    steps: list
    worst: float
    tol: float

    @property
    def ok(self) -> bool:
        return self.worst <= self.tol

    def as_dict(self) -> dict:
        return {"points": self.points, "mismatch": self.mismatches, "steps": self.steps,
                "worst": self.worst, "tol": self.tol, "pass": self.ok}


def _fd(f, center: float, steps, stencil) -> tuple[complex, float, float]:
    """Sixth-order difference with the step chosen where successive halvings agree best."""
    vals = {}
    for h in steps:
        vals[h] = sum(c * f(center + k * h) for c, k in zip(stencil, _OFF) if c)
    order = 2 if stencil is _D2 else 1
    best, best_h, best_gap = None, None, math.inf
    for h in steps:
        h2 = h / 2
        if h2 not in vals:
            vals[h2] = sum(c * f(center + k * h2) for c, k in zip(stencil, _OFF) if c)
        d1, d2 = vals[h] / h**order, vals[h2] / h2**order
        gap = abs(d1 - d2)
        if gap < best_gap:
            best, best_h, best_gap = d2, h2, gap
    return best, best_h, best_gap


def operator_apply_check(sol: FormalSolution, points, tol: float = 1e-4,
                         steps=(0.02, 0.01, 0.005, 0.0025)) -> OperatorCheck:
    """Compare finite differences of ``K_r[u~]`` against the reduced operator.

    Left side: ``-d_x^2 - x^{4n+2} d_y^2 - x^{2n}(y^{2m} d_y^2 + m y^{2m-1} d_y)``
    applied to the kernel.  Right side: the kernel of ``sum_i rho^{-i} P_i u~``
    with exponent ``r + 2 gamma``.  Both sides share one node set per point.
    """
    kern = KernelIntegral(sol)
    n, m = sol.params.n, sol.m
    pts, mism, used = [], [], []
    for x, y in points:
        ymax = abs(y) + 4 * max(steps)
        kx = lambda s: kern(s, y, y_max=ymax)
        ky = lambda s: kern(x, s, y_max=ymax)
        dxx, hx, _ = _fd(kx, x, steps, _D2)
        dyy, hyy, _ = _fd(ky, y, steps, _D2)
        dy, hy, _ = _fd(ky, y, steps, _D1)
        lhs = -dxx - x ** (4 * n + 2) * dyy - x ** (2 * n) * (y ** (2 * m) * dyy + m * y ** (2 * m - 1) * dy)
        rhs = kern.reduced(x, y, y_max=ymax)
        rel = abs(lhs - rhs) / max(abs(lhs), abs(rhs), 1e-300)
        pts.append([x, y])
        mism.append(rel)
        used.append({"dxx": hx, "dyy": hyy, "dy": hy, "lhs": [lhs.real, lhs.imag],
                     "rhs": [rhs.real, rhs.imag]})
    return OperatorCheck(pts, mism, used, max(mism), tol)


# ---------------------------------------------------------- Fourier trace


@dataclass
class FourierTrace:
    """``F(eta) = (2 pi / s0) eta^{(r+1)/s0 - 1} u~(0, eta^{1/s0})`` stored as
    ``log|F|`` and ``arg F`` so that very small values survive."""

    eta: np.ndarray
    log_abs: np.ndarray
    phase: np.ndarray
    s0: float
    c0: float
    r: float
    R: float

    @property
    def values(self) -> np.ndarray:
        return np.exp(self.log_abs + 1j * self.phase)

    @property
    def decades(self) -> float:
        return float(math.log10(self.eta[-1] / self.eta[0]))

    def leading_offset(self) -> np.ndarray:
        """``log|F| + c0 eta^{1/s0} - ((r+1)/s0 - 1) log eta``; bounded along the grid."""
        return self.log_abs + self.c0 * self.eta ** (1 / self.s0) \
            - ((self.r + 1) / self.s0 - 1) * np.log(self.eta)

    def envelope(self, eps: float) -> tuple[float, float]:
        """Fit ``|F| <= C exp(-B (eta/eps)^{1/s0})``: ``B`` from the slope, ``C`` the least constant."""
        z = (self.eta / eps) ** (1 / self.s0)
        A = np.c_[np.ones_like(z), -z]
        (a, B), *_ = np.linalg.lstsq(A, self.log_abs, rcond=None)
        logC = float(np.max(self.log_abs + B * z))
        return float(np.exp(logC)), float(B)

    def write_csv(self, path, fit: "GevreyFit | None" = None) -> None:
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(["eta", "log_abs_F", "fit_residual"])
            res = fit.residual_at(self) if fit else np.full(self.eta.size, np.nan)
            for e, l, rr in zip(self.eta, self.log_abs, res):
                wr.writerow([repr(float(e)), repr(float(l)), repr(float(rr))])


def trace_window(sol: FormalSolution) -> tuple[float, float]:
    """``eta`` range with ``eta^{1/s0}`` in ``[4R, 0.8 rho_max]``."""
    s0 = float(sol.params.s0)
    return (4 * sol.config.R) ** s0, (0.8 * sol.grid.stop) ** s0


def fourier_trace(sol: FormalSolution, eta=None, points: int = 200, mode: str = "tilde") -> FourierTrace:
    s0 = float(sol.params.s0)
    r = float(sol.params.r)
    lo, hi = trace_window(sol)
    if eta is None:
        eta = np.geomspace(lo, hi, points)
    eta = np.asarray(eta, dtype=float)
    rho = eta ** (1 / s0)
    if np.any(rho < sol.grid.start) or np.any(rho > sol.grid.stop):
        raise ValueError("trace grid reaches outside the solved range")
    n = sol.params.n
    uhat = np.zeros(rho.size, dtype=complex)
    for p in range(sol.solved_lmax + 1):
        v0 = float(_eig(p, n)(0.0))
        uhat += sol.G_hat(p, rho, 0, mode=mode)[0] * v0
    c1 = sol.c1
    log_abs = (math.log(2 * math.pi / s0) + ((r + 1) / s0 - 1) * np.log(eta)
               + np.log(np.abs(uhat)) - c1.real * rho)
    phase = np.angle(uhat) - c1.imag * rho
    if not np.all(np.isfinite(log_abs)):
        raise ValueError("trace vanishes on the grid")
    return FourierTrace(eta, log_abs, phase, s0, sol.c0, r, sol.config.R)


# -------------------------------------------------------------- the fit


class FitError(RuntimeError):
    pass


@dataclass
class GevreyFit:
    s_hat: float
    c_hat: float
    a: float
    mu: float
    rms: float
    two_param: dict
    split: list
    curvature: float
    s_range: tuple

    def model(self, eta) -> np.ndarray:
        eta = np.asarray(eta, dtype=float)
        return self.a + self.mu * np.log(eta) - self.c_hat * eta ** (1 / self.s_hat)

    def residual_at(self, trace: FourierTrace) -> np.ndarray:
        return trace.log_abs - self.model(trace.eta)

    def as_dict(self) -> dict:
        return {"s_hat": self.s_hat, "c_hat": self.c_hat, "a": self.a, "mu": self.mu,
                "rms": self.rms, "two_param": self.two_param, "split": self.split,
                "curvature": self.curvature}


def _linear_fit(eta, y, s, with_log: bool):
    cols = [np.ones_like(eta), -eta ** (1 / s)]
    if with_log:
        cols.append(np.log(eta))
    A = np.column_stack(cols)
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    res = y - A @ coef
    return coef, float(np.sqrt(np.mean(res**2)))


def _profile_fit(eta, y, with_log: bool, s_range):
    grid = np.linspace(s_range[0], s_range[1], 121)
    errs = [_linear_fit(eta, y, s, with_log)[1] for s in grid]
    k = int(np.argmin(errs))
    lo, hi = grid[max(k - 1, 0)], grid[min(k + 1, grid.size - 1)]
    opt = minimize_scalar(lambda s: _linear_fit(eta, y, s, with_log)[1], bounds=(lo, hi),
                          method="bounded", options={"xatol": 1e-10})
    s = float(opt.x)
    coef, rms = _linear_fit(eta, y, s, with_log)
    return s, coef, rms, np.array(errs)


def gevrey_fit(trace, log_abs=None, s_range=(1.02, 4.0), min_decades: float = 1.5) -> GevreyFit:
    """Fit ``log|F| ~ a + mu log(eta) - c eta^{1/s}``.

    For each trial ``s`` the coefficients ``(a, c, mu)`` are linear least
    squares; ``s`` is found on a grid and polished by a bounded 1-D search.
    The pure ``a - c eta^{1/s}`` model is fitted as well and returned under
    ``two_param``.  Half-window refits give the split-sample spread.

    ``trace`` may be a :class:`FourierTrace` or an array of ``eta`` values
    together with ``log_abs``.
    """
    if isinstance(trace, FourierTrace):
        eta, y = trace.eta, trace.log_abs
    else:
        eta, y = np.asarray(trace, dtype=float), np.asarray(log_abs, dtype=float)
    if math.log10(eta.max() / eta.min()) < min_decades:
        raise FitError(f"trace spans fewer than {min_decades} decades")
    s, coef, rms, errs = _profile_fit(eta, y, True, s_range)
    a, c, mu = (float(v) for v in coef)
    s2, coef2, rms2, _ = _profile_fit(eta, y, False, s_range)
    # flatness of the profile: relative rise of the rms away from the optimum
    base = max(rms, 1e-300)
    curv = float((np.median(errs) - rms) / base)
    if not np.isfinite(curv) or np.ptp(errs) <= 1e-12 * max(np.abs(y).max(), 1.0):
        raise FitError("fit is not identifiable: residual landscape is flat in s")
    split = []
    mid = np.sqrt(eta.min() * eta.max())
    for sel in (eta <= mid, eta >= mid, slice(None, None, 2)):
        e, v = eta[sel], y[sel]
        if e.size >= 8:
            ss, cc, _, _ = _profile_fit(e, v, True, s_range)
            split.append({"s_hat": ss, "c_hat": float(cc[1])})
    return GevreyFit(s, c, a, mu, rms, {"s_hat": s2, "c_hat": float(coef2[1]), "a": float(coef2[0]),
                                         "rms": rms2}, split, curv, tuple(s_range))


# ----------------------------------------------------- cross-checks


@dataclass
class DirectCheck:
    eta: list
    direct: list
    trace: list
    rel: list
    eps: float
    Y: float

    @property
    def worst(self) -> float:
        return max(self.rel)

    def as_dict(self) -> dict:
        return {"eta": self.eta, "rel": self.rel, "eps": self.eps, "Y": self.Y,
                "direct": [[z.real, z.imag] for z in self.direct],
                "trace": [[z.real, z.imag] for z in self.trace]}


def direct_fourier_check(sol: FormalSolution, rho_points=(8.5, 10.0, 12.0), eps: float = 0.5,
                         y_tail: float = 36.0) -> DirectCheck:
    """Windowed Fourier transform of ``y -> K[u~](0, y)`` by brute-force quadrature.

    ``int exp(-i y eta - eps y^2) K(0, y) dy`` is computed with the trapezoid
    rule in ``y`` and Gauss panels in ``rho``.  The trace predicts the same
    number as ``F`` smoothed by the heat kernel ``(4 pi eps)^{-1/2}
    exp(-(s - eta)^2 / (4 eps))``; the window keeps the ``y`` range finite.
    """
    s0 = float(sol.params.s0)
    kern = KernelIntegral(sol)
    eta_pts = np.asarray(rho_points, dtype=float) ** s0
    Y = math.sqrt(y_tail / eps)
    # the y-step must separate eta from its aliases by more than the trace's reach
    reach = kern.rho_cut**s0
    dy = 2 * math.pi / (reach + eta_pts.max() + 40.0)
    ny = int(math.ceil(Y / dy))
    ys = dy * np.arange(-ny, ny + 1)
    rho, w, G = kern.nodes(Y)
    base = w * np.exp(-sol.c1 * rho) * rho**kern.r
    v0 = np.array([float(rep(0.0)) for rep in kern.reps])
    u0 = (G[:, 0, :] * v0[:, None]).sum(axis=0)
    base = base * u0
    K0 = np.empty(ys.size, dtype=complex)
    phase = rho**s0
    for k in range(0, ys.size, 64):
        yy = ys[k:k + 64]
        K0[k:k + 64] = np.exp(1j * yy[:, None] * phase[None, :]) @ base
    window = np.exp(-eps * ys**2)
    direct = [complex(dy * np.sum(np.exp(-1j * ys * e) * window * K0)) for e in eta_pts]
    # smoothed trace
    half = math.sqrt(4 * eps * 40.0)
    pred = []
    xg, wg, _ = _gauss(32)
    for e in eta_pts:
        lo = max(e - half, sol.grid.start**s0)
        hi = e + half
        edges = np.linspace(lo, hi, 33)
        s = ((edges[1:, None] + edges[:-1, None]) / 2 + (edges[1:, None] - edges[:-1, None]) / 2 * xg).ravel()
        ws = np.tile((edges[1] - edges[0]) / 2 * wg, 32)
        tr = fourier_trace(sol, eta=s)
        kern_s = np.exp(-(s - e) ** 2 / (4 * eps)) / math.sqrt(4 * math.pi * eps)
        pred.append(complex(np.sum(ws * kern_s * tr.values)))
    rel = [abs(d - p) / abs(p) for d, p in zip(direct, pred)]
    return DirectCheck([float(e) for e in eta_pts], direct, pred, rel, eps, Y)


def decay_in_y(sol: FormalSolution, ys=None) -> dict:
    """``|K[u~](0, y)| <y>^2`` on a log grid of ``y``; finite sup is the check."""
    if ys is None:
        ys = np.geomspace(1.0, 16.0, 9)
    kern = KernelIntegral(sol)
    vals = [abs(kern(0.0, float(y))) * (1 + y * y) for y in ys]
    return {"y": [float(y) for y in ys], "weighted": vals, "sup": float(max(vals)),
            "finite": bool(np.all(np.isfinite(vals)))}


def truncation_consistency(sol: FormalSolution, growth_C: float, x: float = 0.0, y: float = 0.0) -> dict:
    """``|K_L - K_{L-1}|`` against ``(C/2R)^{L (2m-1)/2m} |K_L|`` for every ``L <= lmax``."""
    m = sol.m
    vals = [KernelIntegral(sol, lmax=L)(x, y) for L in range(sol.solved_lmax + 1)]
    rows = []
    for L in range(1, len(vals)):
        cert = (growth_C / (2 * sol.config.R)) ** (L * (2 * m - 1) / (2 * m)) * abs(vals[L])
        rows.append({"L": L, "diff": abs(vals[L] - vals[L - 1]), "certificate": cert})
    return {"rows": rows, "pass": all(r["diff"] <= r["certificate"] for r in rows)}


def refinement_check(sol: FormalSolution) -> dict:
    """``K[u~](0, 0)`` with halved panels agrees with the default node set."""
    kern = KernelIntegral(sol)
    v, err = kern.estimate(0.0, 0.0)
    return {"value": [v.real, v.imag], "rel_change": err / abs(v), "pass": bool(err / abs(v) <= 1e-8)}


def regularity_probe(sol: FormalSolution, orders=range(2, 25, 2)) -> dict:
    """Gevrey orders of ``x`` and ``y`` derivatives of ``K[u~]`` at the origin.

    ``d_x^k K(0,0) = int rho^{r + k gamma} sum_p G_p v_p^{(k)}(0) e^{-c1 rho}``
    and ``d_y^k K(0,0) = i^k int rho^{r + k theta} u~(0, rho)``; fitting
    ``log|D_k| ~ s log k! + b k + a`` gives the two orders.  Soft diagnostic.
    """
    params = sol.params
    n = params.n
    rho, w = sol.grid.nodes, sol.grid.weights
    r, g, th = float(params.r), float(params.gamma), float(params.theta)
    G = np.array([sol.G_hat(p, rho, 0)[0] for p in range(sol.solved_lmax + 1)])
    logw = np.log(w) - sol.c1.real * rho
    osc = np.exp(-1j * sol.c1.imag * rho)
    reps = [_eig(p, n) for p in range(sol.solved_lmax + 1)]
    u0 = sum(G[p] * float(reps[p](0.0)) for p in range(len(reps)))

    def logsum(e, vals):
        lg = logw + e * np.log(rho)
        top = lg.max()
        return top + math.log(abs(np.sum(np.exp(lg - top) * vals * osc)))

    ks = list(orders)
    dx, dy = [], []
    for k in ks:
        vk = sum(G[p] * float(reps[p].deriv(k)(0.0)) for p in range(len(reps)))
        dx.append(logsum(r + k * g, vk))
        dy.append(logsum(r + k * th, u0))

    def order(logs):
        A = np.c_[[math.lgamma(k + 1) for k in ks], ks, np.ones(len(ks))]
        coef, *_ = np.linalg.lstsq(A, np.array(logs), rcond=None)
        return float(coef[0])

    sx, sy = order(dx), order(dy)
    target_x = 1 + 1 / ((2 * params.m - 1) * (2 * n + 2))
    return {"s_x": sx, "s_y": sy, "s_x_expected": target_x, "s_y_expected": float(params.s0),
            "x_below_y": bool(sx < sy)}


def write_growth_csv(path, report) -> None:
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["ell", "envelope"])
        for ell, v in report.per_level:
            wr.writerow([ell, repr(v)])


__all__ = [
    "DirectCheck", "FitError", "FourierTrace", "GevreyFit", "KernelIntegral", "OperatorCheck",
    "QuadratureBudgetError", "Remainder", "RemainderLevel", "RemainderSupportError", "SupportReport",
    "decay_in_y", "direct_fourier_check", "fourier_trace", "gevrey_fit", "grid_derivative",
    "kernel_eval", "operator_apply_check", "oscillatory_nodes", "refinement_check", "regularity_probe",
    "remainder", "trace_window", "truncation_consistency", "write_growth_csv",
]
