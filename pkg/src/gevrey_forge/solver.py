"""Level-by-level construction of the approximate solution.

Level ``ell`` is ``u_ell = sum_{p<=ell} g_{ell,p}(rho) v_p(t)``.  Every
``g_{ell,p}`` is stored in hat variables ``exp(c1 rho) g^{(k)}`` for
``k = 0..2m`` on a common composite Gauss-Legendre grid.

For ``p >= 1``: ``Theta_p g_{ell,p} = chi_ell f_{ell,p}`` with
``f_{ell,p} = -sum_{i>=1} rho^{-i} [P_i u_{ell-i}]_p``.

For ``p = 0``: ``f_{ell,0} = -rho^{-1}[P_1 (1-Pi_0) u_ell]_0 - sum_{i>=2} rho^{-i}[P_i u_{ell+1-i}]_0``,
which needs ``g_{ell,1}`` first; the two marginal homogeneous modes of
``Theta_0`` are removed from the solution.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import jets
from .coeffs import DeltaTable, OperatorTable, delta_table, operator_table, transfer_weight
from .exactnum import Params
from .greens import (GreensFn, Grid, OdeOperator, Tabulated, convolve, greens, make_grid,
                     marginal_indices)
from .spectral import EVEN, eigenfunction


@dataclass(frozen=True)
class BuildConfig:
    lmax: int = 6
    R: float = 2.0
    R1: float = 2.0
    rho_max: float = 150.0
    h_max: float = 0.5
    q: int = 16

    def validate(self) -> None:
        if self.lmax < 0:
            raise ValueError("lmax must be nonnegative")
        if self.R1 <= 0 or self.R <= 0:
            raise ValueError("R and R1 must be positive")
        if self.R < self.R1:
            raise ValueError("R must be at least R1 so that chi_ell = 1 wherever omega_ell = 1")
        if self.rho_max < 4 * max(self.R, self.R1) * (self.lmax + 1) + 10:
            raise ValueError("rho_max must exceed the last cutoff ramp by a margin")
        if self.h_max <= 0 or self.q < 4:
            raise ValueError("bad grid parameters")


class SmoothCutoff:
    """``psi((rho - a)/(b - a))`` for a smooth step ``psi`` of the given sharpness."""

    kappa: float = 1.0

    def __init__(self, ell: int, scale: float):
        self.ell = ell
        self.scale = scale
        self.a = 2 * scale * (ell + 1)
        self.b = 4 * scale * (ell + 1)

    def derivs(self, rho, order: int) -> np.ndarray:
        rho = np.atleast_1d(np.asarray(rho, dtype=float))
        w = self.b - self.a
        d = jets.smoothstep((rho - self.a) / w, self.kappa, order)
        return d / (w ** np.arange(order + 1))[:, None]

    def __call__(self, rho) -> np.ndarray:
        return self.derivs(rho, 0)[0]


class ChiCutoff(SmoothCutoff):
    """``exp(-1/x)`` step on ``[2 R1 (ell+1), 4 R1 (ell+1)]``."""

    kappa = 1.0

    def __init__(self, ell: int, R1: float):
        super().__init__(ell, R1)

    def derivative_bound(self, order: int, samples: int = 4001) -> float:
        rho = np.linspace(self.a, self.b, samples)
        return float(np.abs(self.derivs(rho, order)).max())


class OmegaCutoff(SmoothCutoff):
    """Gevrey step of order ``sigma = 1 + 1/(2m)`` on ``[2R(ell+1), 4R(ell+1)]``."""

    def __init__(self, ell: int, R: float, m: int):
        super().__init__(ell, R)
        self.m = m
        self.kappa = float(2 * m)

    @property
    def sigma(self) -> float:
        return 1.0 + 1.0 / (2 * self.m)

    def derivative_profile(self, order: int, samples: int = 4001) -> np.ndarray:
        """``max_rho |omega^{(a)}|`` for ``a = 0..order``."""
        rho = np.linspace(self.a, self.b, samples)
        return np.abs(self.derivs(rho, order)).max(axis=1)


def cutoff_constants(omega: OmegaCutoff, order: int) -> dict:
    """Smallest constants in the two derivative regimes of ``omega``.

    ``|omega^{(a)}| <= C^{a+1} R^{-a}`` for ``a <= 3 ell`` and
    ``|omega^{(a)}| <= (R C)^{a+1} a!^sigma / rho^a`` for all ``a`` tested.
    """
    rho = np.linspace(omega.a, omega.b, 4001)
    d = np.abs(omega.derivs(rho, order))
    R = omega.scale
    low = 0.0
    for a in range(0, min(order, 3 * omega.ell) + 1):
        val = d[a].max() * R**a
        if val > 0:
            low = max(low, val ** (1.0 / (a + 1)))
    gev = 0.0
    for a in range(order + 1):
        val = (d[a] * rho**a).max() / math.factorial(a) ** omega.sigma
        if val > 0:
            gev = max(gev, val ** (1.0 / (a + 1)) / R)
    return {"ell": omega.ell, "C_low": low, "C_gevrey": gev, "orders": order}


@dataclass
class LevelFn:
    ell: int
    p: int
    tab: Tabulated
    rhs_hat: np.ndarray = field(repr=False)

    def hat(self, k: int, rho) -> np.ndarray:
        return self.tab.grid.interpolate(self.tab.rows[k], rho)

    def value(self, k: int, rho) -> np.ndarray:
        return self.tab.value(k, rho)


class SolverError(RuntimeError):
    pass


class FormalSolution:
    """All solved levels together with the cutoff families and coefficient tables."""

    def __init__(self, params: Params, config: BuildConfig | None = None):
        config = config or BuildConfig()
        config.validate()
        self.params = params
        self.config = config
        n, m = params.n, params.m
        self.m = m
        self.c1 = complex(params.c1)
        self.c0 = float(params.c0)
        align = 2 * min(config.R, config.R1)
        start = align
        self.grid: Grid = make_grid(start, config.rho_max, config.h_max, align=align, q=config.q)
        self.table: OperatorTable = operator_table(params)
        kmax = config.lmax + 2 * m + 2
        self.delta: DeltaTable = delta_table(n, kmax, 2 * m)
        self.chi = [ChiCutoff(l, config.R1) for l in range(config.lmax + 1)]
        self.omega = [OmegaCutoff(l, config.R, m) for l in range(config.lmax + 1)]
        self._greens: dict[int, GreensFn] = {}
        self.levels: dict[tuple[int, int], LevelFn] = {}
        self.solved_lmax = -1
        self._weights: dict[tuple[int, int, int], Fraction] = {}
        if transfer_weight(self.table, self.delta, 1, 0, 0) != 0:
            raise SolverError("first-order operator does not annihilate v_0 at the chosen r")

    # -- building blocks -------------------------------------------------

    def greens_for(self, p: int) -> GreensFn:
        if p not in self._greens:
            self._greens[p] = greens(OdeOperator(self.m, self.params.E(p), self.params.prec))
        return self._greens[p]

    def weight(self, i: int, src: int, dst: int) -> Fraction:
        key = (i, src, dst)
        if key not in self._weights:
            self._weights[key] = transfer_weight(self.table, self.delta, i, src, dst)
        return self._weights[key]

    def theta_const(self, p: int) -> complex:
        return complex(self.params.theta_const(self.params.E(p)))

    def rows(self, ell: int, p: int) -> np.ndarray:
        return self.levels[(ell, p)].tab.rows

    def pi_component(self, i: int, level: int, dst: int, exclude_v0: bool = False) -> np.ndarray:
        """``[P_i u_level]_dst / K(t)`` at the grid nodes, in hat variables."""
        m = self.m
        acc = np.zeros(self.grid.size, dtype=complex)
        for src in range(max(dst - i, 0), min(dst + i, level) + 1):
            if exclude_v0 and src == 0:
                continue
            w = self.weight(i, src, dst)
            if w:
                acc += float(w) * self.rows(level, src)[2 * m - i]
        return acc

    # -- the recursion ---------------------------------------------------

    def level0(self) -> LevelFn:
        m = self.m
        rows = np.array([(-self.c1) ** k * np.ones(self.grid.size) for k in range(2 * m + 1)],
                        dtype=complex)
        lf = LevelFn(0, 0, Tabulated(self.grid, self.c1, rows), np.zeros(self.grid.size, dtype=complex))
        self.levels[(0, 0)] = lf
        self.solved_lmax = max(self.solved_lmax, 0)
        return lf

    def level0_residual(self) -> float:
        """``|c1^{2m} + const_0| / |const_0|``: ``Theta_0 exp(-c1 rho) = 0`` up to rounding."""
        c = self.theta_const(0)
        return abs(self.c1 ** (2 * self.m) + c) / abs(c)

    def rhs(self, ell: int, p: int) -> np.ndarray:
        """``f_{ell,p}`` (without the cutoff ``chi_ell``) at the grid nodes, hat variables."""
        m = self.m
        rho = self.grid.nodes
        acc = np.zeros(self.grid.size, dtype=complex)
        if p >= 1:
            for i in range(1, 2 * m + 1):
                lev = ell - i
                if lev < 0:
                    break
                if p > lev + i:
                    continue
                self._require(lev)
                acc -= rho ** (-i) * self.pi_component(i, lev, p)
        else:
            if ell >= 1:
                if (ell, 1) not in self.levels:
                    raise SolverError(f"g_{{{ell},1}} must be solved before g_{{{ell},0}}")
                acc -= rho ** (-1) * self.pi_component(1, ell, 0, exclude_v0=True)
            for i in range(2, 2 * m + 1):
                lev = ell + 1 - i
                if lev < 0:
                    break
                self._require(lev)
                acc -= rho ** (-i) * self.pi_component(i, lev, 0)
        return acc

    def _require(self, lev: int) -> None:
        if lev > self.solved_lmax:
            raise SolverError(f"level {lev} is not solved")

    def solve_level(self, ell: int) -> dict[int, LevelFn]:
        if ell == 0:
            return {0: self.level0()}
        if self.solved_lmax < ell - 1:
            raise SolverError(f"level {ell - 1} must be solved first")
        chi = self.chi[ell](self.grid.nodes)
        out = {}
        for p in list(range(1, ell + 1)) + [0]:
            f = chi * self.rhs(ell, p)
            G = self.greens_for(p)
            marg = marginal_indices(G, self.c1)
            if p == 0 and set(marg) != {0, self.m - 1}:
                raise SolverError(f"unexpected marginal modes {marg}")
            if p >= 1 and marg:
                raise SolverError("a non-zero level has a marginal mode")
            tab = convolve(G, f, self.grid, shift=self.c1, marginal=marg)
            lf = LevelFn(ell, p, tab, f)
            self.levels[(ell, p)] = lf
            out[p] = lf
        self.solved_lmax = ell
        return out

    def build(self, lmax: int | None = None) -> "FormalSolution":
        lmax = self.config.lmax if lmax is None else lmax
        if lmax > self.config.lmax:
            raise SolverError("lmax beyond the configured cutoff families")
        for ell in range(self.solved_lmax + 1, lmax + 1):
            self.solve_level(ell)
        return self

    # -- evaluation ------------------------------------------------------

    def omega_derivs(self, ell: int, rho, order: int) -> np.ndarray:
        return self.omega[ell].derivs(rho, order)

    def G_hat(self, p: int, rho, order: int, lmax: int | None = None, mode: str = "tilde") -> np.ndarray:
        """Rows ``k = 0..order`` of ``exp(c1 rho) d^k/drho^k sum_ell [omega_ell] g_{ell,p}``."""
        rho = np.atleast_1d(np.asarray(rho, dtype=float))
        lmax = self.solved_lmax if lmax is None else lmax
        out = np.zeros((order + 1, rho.size), dtype=complex)
        inside = self.grid.contains(rho)
        for ell in range(p, lmax + 1):
            if (ell, p) not in self.levels:
                continue
            lf = self.levels[(ell, p)]
            g = np.zeros((order + 1, rho.size), dtype=complex)
            g[:, inside] = lf.tab.at(rho[inside], range(order + 1))
            if mode == "raw":
                out += g
                continue
            w = self.omega_derivs(ell, rho, order)
            for k in range(order + 1):
                for gam in range(k + 1):
                    out[k] += math.comb(k, gam) * w[gam] * g[k - gam]
        return out

    def assemble(self, t, rho, mode: str = "tilde", hat: bool = False, lmax: int | None = None) -> np.ndarray:
        """``u~(t, rho) = sum_ell omega_ell u_ell`` (``mode='tilde'``) or ``sum_ell u_ell``."""
        t = np.atleast_1d(np.asarray(t, dtype=float))
        rho = np.atleast_1d(np.asarray(rho, dtype=float))
        t, rho = np.broadcast_arrays(t, rho)
        lmax = self.solved_lmax if lmax is None else lmax
        out = np.zeros(rho.shape, dtype=complex)
        for p in range(lmax + 1):
            G = self.G_hat(p, rho.ravel(), 0, lmax, mode)[0].reshape(rho.shape)
            out += G * eigenfunction(EVEN, p, self.params.n).rep(t)
        if not hat:
            out = out * np.exp(-self.c1 * rho)
        return out

    # -- checks ----------------------------------------------------------

    def weak_residual(self, ell: int, p: int, centers=None, width: float = 1.5) -> float:
        """Worst relative weak residual ``<Theta_p g - chi f, phi>`` over bumps ``phi``."""
        m = self.m
        lf = self.levels[(ell, p)]
        if centers is None:
            a, b = self.chi[ell].a, self.chi[ell].b
            centers = [a + 0.5, 0.5 * (a + b), b + 1.0, b + 10.0, 0.5 * (b + self.grid.stop)]
        xg, wg, _ = _gauss_nodes(32)
        edges = np.linspace(-1.0, 1.0, 17)
        x = (0.5 * (edges[1:, None] - edges[:-1, None]) * xg + 0.5 * (edges[1:, None] + edges[:-1, None])).ravel()
        wq = np.tile(0.5 * (edges[1] - edges[0]) * wg, 16)
        const = self.theta_const(p)
        worst = 0.0
        for c in centers:
            lo, hi = max(c - width, self.grid.start), min(c + width, self.grid.stop)
            if hi - lo < 0.5:
                continue
            mid, half = 0.5 * (lo + hi), 0.5 * (hi - lo)
            rho = mid + half * x
            d = jets.bump(x, 2 * m)
            theta_phi = d[2 * m] / half ** (2 * m) + const * d[0]
            phase = np.exp(-self.c1 * (rho - mid))
            g0 = lf.hat(0, rho) * phase
            f = self.grid.interpolate(lf.rhs_hat, rho) * phase
            lhs = np.sum(wq * g0 * theta_phi)
            rhs = np.sum(wq * f * d[0])
            size = np.sum(wq * np.abs(g0 * theta_phi)) + np.sum(wq * np.abs(f * d[0]))
            if size > 0:
                worst = max(worst, abs(lhs - rhs) / size)
        return worst

    def pi0_weight(self) -> Fraction:
        """Weight of ``g_{ell,0}^{(2m-1)}`` in ``f_{ell,0}``; exactly zero."""
        return self.weight(1, 0, 0)

    def level1_constant(self) -> float:
        """Least ``C`` with ``|g_{1,p}| <= C^2 rho^{-1} exp(-c0 rho)`` for ``rho >= R1``."""
        rho = self.grid.nodes
        sel = rho >= self.config.R1
        best = 0.0
        for p in (0, 1):
            if (1, p) in self.levels:
                best = max(best, float((np.abs(self.rows(1, p)[0][sel]) * rho[sel]).max()))
        return math.sqrt(best)

    # -- persistence -----------------------------------------------------

    def checkpoint(self, path) -> None:
        path = Path(path)
        arrays = {}
        for (ell, p), lf in self.levels.items():
            arrays[f"g_{ell}_{p}"] = lf.tab.rows
            arrays[f"f_{ell}_{p}"] = lf.rhs_hat
        np.savez_compressed(path.with_suffix(".npz"), **arrays)
        meta = {"params": self.params.as_dict(), "config": asdict(self.config),
                "grid": {"start": self.grid.start, "h": self.grid.h, "panels": self.grid.panels,
                         "q": self.grid.q},
                "solved_lmax": self.solved_lmax}
        path.with_suffix(".json").write_text(json.dumps(meta, sort_keys=True, indent=1))

    @classmethod
    def load(cls, params: Params, path, config: BuildConfig | None = None) -> "FormalSolution":
        path = Path(path)
        meta = json.loads(path.with_suffix(".json").read_text())
        base = BuildConfig(**meta["config"])
        if config is not None:
            if {k: v for k, v in asdict(config).items() if k != "lmax"} != \
                    {k: v for k, v in asdict(base).items() if k != "lmax"}:
                raise SolverError("checkpoint was built with a different grid or cutoff layout")
            base = config
        sol = cls(params, base)
        data = np.load(path.with_suffix(".npz"))
        for ell in range(meta["solved_lmax"] + 1):
            for p in range(ell + 1):
                tab = Tabulated(sol.grid, sol.c1, data[f"g_{ell}_{p}"])
                sol.levels[(ell, p)] = LevelFn(ell, p, tab, data[f"f_{ell}_{p}"])
        sol.solved_lmax = meta["solved_lmax"]
        return sol


def _gauss_nodes(q: int):
    from .greens import _gauss
    return _gauss(q)


def level0(params: Params, config: BuildConfig | None = None) -> LevelFn:
    return FormalSolution(params, config).level0()


def build(params: Params, config: BuildConfig | None = None) -> FormalSolution:
    sol = FormalSolution(params, config)
    sol.level0()
    return sol.build()


# ------------------------------------------------------------- certificates


@dataclass
class GrowthReport:
    S: dict
    C_single: float
    slope: float
    intercept: float
    r2: float
    per_level: list
    k_ratio: list
    C_u: float

    def to_rows(self) -> list[tuple]:
        return [(ell, p, k, s) for (ell, p, k), s in sorted(self.S.items())]


def growth_certificate(sol: FormalSolution, k_max: int | None = None) -> GrowthReport:
    """Scaled sups ``S(ell,p,k) = sup |g^{(k)}| rho^ell exp(c0 rho) / (ell+1)^{ell(1-1/2m)+k/2m}``.

    ``exp(c0 rho) |g^{(k)}|`` is the modulus of the hat row, so no underflow occurs.
    """
    m = sol.m
    k_max = 2 * m if k_max is None else k_max
    if sol.solved_lmax < 3:
        raise SolverError("growth certificate needs at least four levels")
    rho = sol.grid.nodes
    S = {}
    for (ell, p), lf in sol.levels.items():
        for k in range(k_max + 1):
            val = float((np.abs(lf.tab.rows[k]) * rho**ell).max())
            S[(ell, p, k)] = val / (ell + 1) ** (ell * (1 - 1 / (2 * m)) + k / (2 * m))
    C = 0.0
    for (ell, p, k), s in S.items():
        e = ell + 1 + max(k / (2 * m) - 1, 0.0)
        C = max(C, s ** (1.0 / e))
    levels = sorted({ell for ell, _, _ in S})
    env = np.array([math.log(max(s for (l, _, _), s in S.items() if l == ell)) for ell in levels])
    A = np.c_[np.ones(len(levels)), levels]
    coef, *_ = np.linalg.lstsq(A, env, rcond=None)
    fit = A @ coef
    ss_res = float(np.sum((env - fit) ** 2))
    ss_tot = float(np.sum((env - env.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    ratios = []
    for (ell, p, k), s in S.items():
        if (ell, p, k + 2 * m) in S and s > 0:
            ratios.append((ell, p, k, S[(ell, p, k + 2 * m)] / s / (ell + 1)))
    # separated sup bound for u_ell at (alpha, beta, gamma) = (0, 0, 0)
    n = sol.params.n
    tgrid = np.linspace(0, 8, 801)
    Cu = 0.0
    for ell in levels:
        tot = 0.0
        for p in range(ell + 1):
            vmax = float(np.abs(eigenfunction(EVEN, p, n).rep(tgrid)).max())
            tot += vmax * float((np.abs(sol.rows(ell, p)[0]) * rho**ell).max())
        scaled = tot / (ell + 1) ** (ell * (2 * m - 1) / (2 * m))
        Cu = max(Cu, scaled ** (1.0 / (ell + 1)))
    per_level = [(ell, float(math.exp(v))) for ell, v in zip(levels, env)]
    if not math.isfinite(C):
        warnings.warn("growth constant is not finite")
    return GrowthReport(S, C, float(coef[1]), float(coef[0]), r2, per_level, ratios, Cu)
