"""Command line entry point: ``gevrey-forge <command> [flags]``.

Settings come from, in increasing priority: built-in defaults, a config file
(``--config`` or ``$GEVREY_FORGE_CONFIG``) of ``key = value`` lines, and
command line flags.  Every command writes ``<out>/<command>.json`` and a text
summary; the exit status is 0 exactly when every hard gate passed.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import os
import random
import sys
import time
from dataclasses import asdict, dataclass, fields
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import __version__
from .coeffs import (b_identity_residual, bd_tables, d_identity_residual, delta_oracle, delta_table,
                     operator_table, p_oracle, transfer_weight)
from .exactnum import delta001, derive_params, operator_row1
from .greens import OdeOperator, decay_constant, greens, greens_deriv, jump_sum, weak_delta_check
from .solver import BuildConfig, FormalSolution, build, growth_certificate
from .spectral import EVEN, ODD, bound_suite, eigen_residual, eigenfunction, inner_product
from .transform import (direct_fourier_check, fourier_trace, gevrey_fit, operator_apply_check, remainder,
                        write_growth_csv)

ENV_VAR = "GEVREY_FORGE_CONFIG"

OPERATOR_POINTS = ((0.3, 0.5), (-0.7, 0.2), (0.5, -0.9), (1.0, 1.0), (-0.15, -0.35))


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    n: int = 0
    m: int = 1
    lmax: int = 6
    prec: int = 128
    R: Fraction = Fraction(2)
    R1: Fraction = Fraction(2)
    rho_max: Fraction = Fraction(150)
    h_max: Fraction = Fraction(1, 2)
    q: int = 16
    kmax: int = 8
    imax: int = 6
    weak_tol: Fraction = Fraction(1, 10**6)
    remainder_tol: Fraction = Fraction(1, 10**6)
    operator_tol: Fraction = Fraction(1, 10**4)
    direct_tol: Fraction = Fraction(1, 10**3)
    fit_s_tol: Fraction = Fraction(5, 100)
    fit_c_tol: Fraction = Fraction(10, 100)
    trace_points: int = 200
    probes: int = 50
    seed: int = 20240601
    direct: bool = True
    out: str = "gevrey-forge-out"

    def validate(self) -> None:
        errs = []
        if self.n < 0:
            errs.append("n: must be >= 0")
        if self.m < 1:
            errs.append("m: must be >= 1")
        if self.lmax < 0:
            errs.append("lmax: must be >= 0")
        if self.prec < 53:
            errs.append("prec: must be at least 53 bits")
        for name in ("R", "R1", "rho_max", "h_max", "weak_tol", "remainder_tol", "operator_tol",
                     "direct_tol", "fit_s_tol", "fit_c_tol"):
            if getattr(self, name) <= 0:
                errs.append(f"{name}: must be positive")
        if self.kmax < 2:
            errs.append("kmax: must be >= 2")
        if self.imax < 0:
            errs.append("imax: must be >= 0")
        if self.trace_points < 16:
            errs.append("trace_points: must be >= 16")
        if not errs:
            try:
                self.build_config().validate()
            except ValueError as exc:
                errs.append(f"build: {exc}")
        if errs:
            raise ConfigError("; ".join(errs))

    def build_config(self) -> BuildConfig:
        return BuildConfig(self.lmax, float(self.R), float(self.R1), float(self.rho_max),
                           float(self.h_max), self.q)

    def as_json(self) -> dict:
        d = asdict(self)
        return {k: (str(v) if isinstance(v, Fraction) else v) for k, v in d.items()}


_TYPES = {f.name: f.type for f in fields(RunConfig)}


def _coerce(key: str, raw: str):
    kind = _TYPES.get(key)
    if kind is None:
        raise ConfigError(f"{key}: unknown setting")
    raw = raw.strip()
    if kind == "str":
        return raw
    if kind == "bool":
        low = raw.lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"{key}: expected a boolean, got {raw!r}")
    try:
        val = Fraction(raw)
    except (ValueError, ZeroDivisionError):
        try:
            val = Fraction(float(raw))
        except ValueError:
            raise ConfigError(f"{key}: expected a number, got {raw!r}") from None
    if kind == "int":
        if val.denominator != 1:
            raise ConfigError(f"{key}: expected an integer, got {raw!r}")
        return int(val)
    return val


def read_config_file(path) -> dict:
    out = {}
    text = Path(path).read_text(encoding="utf-8")
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        out[key] = _coerce(key, value)
    return out


def resolve_config(args: argparse.Namespace) -> RunConfig:
    values = {}
    path = args.config or os.environ.get(ENV_VAR)
    if path:
        if not Path(path).is_file():
            raise ConfigError(f"config: file {path!r} not found")
        values.update(read_config_file(path))
    for name in _TYPES:
        raw = getattr(args, name, None)
        if raw is not None:
            values[name] = _coerce(name, str(raw))
    cfg = RunConfig(**values)
    cfg.validate()
    return cfg


# ------------------------------------------------------------------ output


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, Fraction):
        return str(obj)
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else str(v)
    if isinstance(obj, (complex, np.complexfloating)):
        return [_plain(obj.real), _plain(obj.imag)]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    return obj


def config_hash(cfg: RunConfig) -> str:
    return hashlib.sha256(json.dumps(cfg.as_json(), sort_keys=True).encode()).hexdigest()


def content_version(payload: dict) -> str:
    """Git blob hash of the canonical JSON body."""
    body = json.dumps(payload, sort_keys=True).encode()
    return hashlib.sha1(b"blob %d\0" % len(body) + body).hexdigest()


def write_report(cfg: RunConfig, command: str, results: dict, gates: dict, summary: list[str],
                 started: float) -> int:
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    ok = all(gates.values())
    stable = _plain({"command": command, "version": __version__, "config": cfg.as_json(),
                     "config_hash": config_hash(cfg), "results": results, "gates": gates, "pass": ok})
    doc = dict(stable)
    doc["content_version"] = content_version(stable)
    doc["volatile"] = {"timestamp": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
                       "elapsed_s": round(time.perf_counter() - started, 3)}
    (out / f"{command}.json").write_text(json.dumps(doc, sort_keys=True, indent=1) + "\n")
    lines = list(summary)
    for name, val in gates.items():
        lines.append(f"{'PASS' if val else 'FAIL'}  {name}")
    lines.append(f"overall: {'PASS' if ok else 'FAIL'}")
    text = "\n".join(lines) + "\n"
    (out / f"{command}.txt").write_text(text)
    sys.stdout.write(text)
    return 0 if ok else 1


# ------------------------------------------------------------------ suites


def params_suite(cfg: RunConfig):
    P = derive_params(cfg.n, cfg.m, cfg.prec)
    p10, p11 = operator_row1(cfg.n, cfg.m, P.r)
    cancel = p10 + p11 * delta001(cfg.n)
    res = {"params": P.as_dict(), "row1": [p10, p11], "cancellation": cancel}
    summary = [f"n = {P.n}, m = {P.m}", f"theta = {P.theta}", f"gamma = {P.gamma}", f"alpha = {P.alpha}",
               f"r = {P.r}", f"r' = {P.r + P.r_kernel_shift}", f"c1 = {complex(P.c1):.15g}",
               f"c0 = {float(P.c0):.15g}"]
    return res, {"solve_r cancellation exact": cancel == 0}, summary


def eigen_suite(cfg: RunConfig, kmax: int | None = None):
    n = cfg.n
    kmax = cfg.kmax if kmax is None else kmax
    nonzero = [(par, k) for par in (EVEN, ODD) for k in range(kmax + 1)
               if not eigen_residual(eigenfunction(par, k, n)).is_zero()]
    ortho_bad = []
    for par in (EVEN, ODD):
        fs = [eigenfunction(par, k, n) for k in range(kmax + 1)]
        for i in range(len(fs)):
            for j in range(i + 1, len(fs)):
                if inner_product(fs[i], fs[j]).coeff != 0:
                    ortho_bad.append((par, i, j))
    rep = bound_suite(kmax, n)
    gs, target = rep.gs_exponents, rep.gs_target
    dev = max(abs(a - b) for a, b in zip(gs, target))
    Path(cfg.out).mkdir(parents=True, exist_ok=True)
    rep.to_csv(Path(cfg.out) / f"bounds_n{n}.csv")
    res = {"residual_nonzero": nonzero, "orthogonality_failures": ortho_bad, "gs_exponents": gs,
           "gs_target": target, "gs_deviation": dev, "sup_ratio_max": rep.sup_ratio_max,
           "deriv_ratio_max": rep.deriv_ratio_max, "decay_B": rep.decay_B}
    gates = {"eigen residuals exactly zero": not nonzero, "orthogonality exact": not ortho_bad,
             "Gelfand-Shilov exponents within 0.1": dev <= 0.1,
             "bound tables finite": all(map(math.isfinite, (rep.sup_ratio_max, rep.deriv_ratio_max)))}
    summary = [f"eigen residuals: {len(nonzero)} nonzero (k <= {kmax})",
               f"orthogonality: {len(ortho_bad)} failures",
               f"GS exponents {gs[0]:.4f}, {gs[1]:.4f} vs {target[0]:.4f}, {target[1]:.4f}"]
    return res, gates, summary


def coeffs_suite(cfg: RunConfig):
    n, m = cfg.n, cfg.m
    table = delta_table(n, cfg.kmax, cfg.imax)
    bad = [(k, i) for k in range(cfg.kmax + 1) for i in range(cfg.imax + 1)
           if {j: v for j, v in table.row(k, i).items() if v} != {j: v for j, v in delta_oracle(n, k, i).items() if v}]
    rng = random.Random(cfg.seed)
    bd = bd_tables(8, 8)
    bd_bad = 0
    for _ in range(cfg.probes):
        a = Fraction(rng.randint(-60, 60), rng.randint(1, 24))
        th = Fraction(rng.randint(-60, 60), rng.randint(1, 24))
        bd_bad += sum(b_identity_residual(p, a, th, bd) != 0 for p in range(1, 9))
        bd_bad += sum(d_identity_residual(nu, a, bd) != 0 for nu in range(1, 9))
    P = derive_params(n, m, cfg.prec)
    ok_p = p_oracle_for(P)
    cancel = transfer_weight(operator_table(P), delta_table(n, 2, 2 * m), 1, 0, 0)
    res = {"delta_mismatches": bad, "bd_failures": bd_bad, "p_oracle": ok_p, "cancellation": cancel}
    gates = {"delta oracle": not bad, "b/d identities": bd_bad == 0, "p oracle": all(ok_p.values()),
             "pi0 cancellation": cancel == 0}
    summary = [f"delta oracle: {len(bad)} mismatches", f"b/d identities: {bd_bad} failures",
               f"p oracle: {sum(not v for v in ok_p.values())} failures"]
    return res, gates, summary


def p_oracle_for(P) -> dict:
    """Both coefficient families of the reduced operator, checked on a monomial lattice."""
    n, m = P.n, P.m
    th, ga, r = P.theta, P.gamma, P.r
    mons = [(a, b) for a in range(0, 5) for b in (Fraction(-3, 2), 0, 1, Fraction(7, 3), 5)]
    out = {"p1": p_oracle(2 * m, th, ga, r + 2 * th - 2 * n * ga, 2 * n, mons).ok}
    out["p2"] = p_oracle(2 * m - 1, th, ga, r + th - 2 * n * ga, 2 * n, mons).ok
    return out


def greens_suite(cfg: RunConfig, ms=None, ks=(0, 1, 2)):
    ms = (cfg.m,) if ms is None else ms
    rows, ok_weak, ok_fd, ok_decay = [], True, True, True
    closed = None
    for m in ms:
        for k in ks:
            E = 4 * k * (cfg.n + 1) + 2 * cfg.n + 1
            G = greens(OdeOperator(m, E, cfg.prec), check=False)
            weak = weak_delta_check(G)
            fd = greens_fd_error(G)
            K = decay_constant(G)
            rows.append({"m": m, "k": k, "E": E, "weak": weak, "fd_rel": fd, "K": K,
                         "jump": jump_sum(G)})
            ok_weak &= weak <= float(cfg.weak_tol)
            ok_fd &= fd <= 1e-6
            ok_decay &= math.isfinite(K)
    gates = {"weak delta residuals": ok_weak, "derivatives vs differences": ok_fd,
             "decay constant finite": ok_decay}
    if 1 in ms:
        G = greens(OdeOperator(1, 1, cfg.prec), check=False)
        rho = np.linspace(-6, 6, 241)
        closed = float(np.abs(G(rho) - (-0.25 * np.exp(-2 * np.abs(rho)))).max())
        gates["m=1 closed form"] = closed <= 1e-10
    summary = [f"m={r['m']} k={r['k']}: weak {r['weak']:.2e}, fd {r['fd_rel']:.2e}, K {r['K']:.3f}" for r in rows]
    return {"rows": rows, "closed_form_m1": closed}, gates, summary


def greens_fd_error(G, rho=(0.3, 0.7, 1.3, 2.1, -0.4, -1.7), h: float = 1e-3) -> float:
    """Worst relative gap between ``G^{(l)}`` and a 4th-order difference of ``G^{(l-1)}``."""
    rho = np.asarray(rho)
    worst = 0.0
    for ell in range(1, 2 * G.m):
        lower = lambda x: greens_deriv(G, ell - 1, x)
        fd = (-lower(rho + 2 * h) + 8 * lower(rho + h) - 8 * lower(rho - h) + lower(rho - 2 * h)) / (12 * h)
        exact = greens_deriv(G, ell, rho)
        worst = max(worst, float((np.abs(fd - exact) / np.abs(exact)).max()))
    return worst


def build_suite(cfg: RunConfig, sol: FormalSolution | None = None, checkpoint: bool = True):
    P = derive_params(cfg.n, cfg.m, cfg.prec)
    sol = sol or build(P, cfg.build_config())
    weak = {f"{l},{p}": sol.weak_residual(l, p) for (l, p) in sorted(sol.levels) if l >= 1}
    worst = max(weak.values()) if weak else 0.0
    C1 = sol.level1_constant()
    gc = growth_certificate(sol)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    if checkpoint:
        sol.checkpoint(out / f"solution_n{cfg.n}_m{cfg.m}")
    write_growth_csv(out / f"growth_n{cfg.n}_m{cfg.m}.csv", gc)
    res = {"weak_residuals": weak, "weak_worst": worst, "level1_C": C1, "growth_C": gc.C_single,
           "growth_r2": gc.r2, "growth_slope": gc.slope, "C_u": gc.C_u, "per_level": gc.per_level,
           "level0_residual": sol.level0_residual()}
    gates = {"weak residuals": worst <= float(cfg.weak_tol), "level-1 bound finite": math.isfinite(C1),
             "growth certificate": math.isfinite(gc.C_single) and gc.r2 >= 0.9}
    summary = [f"levels solved: 0..{sol.solved_lmax}", f"worst weak residual {worst:.2e}",
               f"level-1 constant C = {C1:.4f}", f"growth C = {gc.C_single:.4f} (R^2 = {gc.r2:.4f})"]
    return sol, res, gates, summary


def fourier_suite(cfg: RunConfig, sol: FormalSolution, direct: bool | None = None):
    P = sol.params
    trace = fourier_trace(sol, points=cfg.trace_points)
    fit = gevrey_fit(trace)
    s0, c0 = float(P.s0), float(P.c0)
    s_ok = abs(fit.s_hat - s0) <= float(cfg.fit_s_tol) * s0
    c_ok = abs(fit.c_hat - c0) <= float(cfg.fit_c_tol) * c0
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    trace.write_csv(out / f"trace_n{cfg.n}_m{cfg.m}.csv", fit)
    eta = np.geomspace(10.0, 1e4, 120)
    synth = gevrey_fit(eta, -1.7 * eta ** (1 / 1.6))
    synth_ok = abs(synth.s_hat - 1.6) <= 0.016 and abs(synth.c_hat - 1.7) <= 0.017
    res = {"s_hat": fit.s_hat, "s_target": s0, "c_hat": fit.c_hat, "c0": c0, "pass": s_ok and c_ok,
           "fit": fit.as_dict(), "decades": trace.decades, "synthetic": [synth.s_hat, synth.c_hat],
           "offset_range": [float(trace.leading_offset().min()), float(trace.leading_offset().max())]}
    gates = {"s_hat within tolerance": s_ok, "c_hat within tolerance": c_ok, "synthetic self-test": synth_ok}
    summary = [f"s_hat = {fit.s_hat:.5f} (target {s0:.5f})", f"c_hat = {fit.c_hat:.5f} (c0 = {c0:.5f})"]
    if cfg.direct if direct is None else direct:
        dc = direct_fourier_check(sol)
        res["direct"] = dc.as_dict()
        gates["direct windowed transform"] = dc.worst <= float(cfg.direct_tol)
        summary.append(f"direct transform worst rel {dc.worst:.2e}")
    return res, gates, summary


# ---------------------------------------------------------------- commands


def cmd_params(cfg):
    return params_suite(cfg)


def cmd_eigen(cfg):
    return eigen_suite(cfg)


def cmd_coeffs(cfg):
    return coeffs_suite(cfg)


def cmd_greens(cfg):
    return greens_suite(cfg)


def cmd_build(cfg):
    _, res, gates, summary = build_suite(cfg)
    return res, gates, summary


def cmd_fourier(cfg):
    sol = build(derive_params(cfg.n, cfg.m, cfg.prec), cfg.build_config())
    return fourier_suite(cfg, sol)


def cmd_verify(cfg):
    results, gates, summary = {}, {}, []

    def merge(name, triple):
        res, g, s = triple
        results[name] = res
        gates.update({f"{name}: {k}": v for k, v in g.items()})
        summary.extend(f"[{name}] {line}" for line in s)

    merge("params", params_suite(cfg))
    merge("coeffs", coeffs_suite(cfg))
    merge("eigen", eigen_suite(cfg))
    merge("greens", greens_suite(cfg))
    sol, res, g, s = build_suite(cfg)
    merge("build", (res, g, s))
    _, rep = remainder(sol, float(cfg.remainder_tol), strict=False)
    merge("remainder", (rep.as_dict(), {"support": rep.ok},
                        [f"worst outer ratio {max(d['outer_ratio'] for d in rep.per_level):.2e}"]))
    oc = operator_apply_check(sol, OPERATOR_POINTS, float(cfg.operator_tol))
    merge("operator", (oc.as_dict(), {"mismatch": oc.ok}, [f"worst mismatch {oc.worst:.2e}"]))
    fres, fg, fs = fourier_suite(cfg, sol)
    merge("fourier", (fres, fg, fs))
    results["s_hat"] = fres["s_hat"]
    results["c_hat"] = fres["c_hat"]
    return results, gates, summary


COMMANDS = {"params": cmd_params, "eigen": cmd_eigen, "coeffs": cmd_coeffs, "greens": cmd_greens,
            "build": cmd_build, "fourier": cmd_fourier, "verify": cmd_verify}


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gevrey-forge", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help=f"config file (default ${ENV_VAR})")
        for f in fields(RunConfig):
            flag = "--" + f.name.replace("_", "-")
            p.add_argument(flag, dest=f.name, default=None, metavar=f.name.upper())
    return parser


def main(argv=None) -> int:
    parser = make_parser()
    args = parser.parse_args(argv)
    started = time.perf_counter()
    try:
        cfg = resolve_config(args)
    except ConfigError as exc:
        sys.stderr.write(f"config error: {exc}\n")
        return 2
    try:
        res, gates, summary = COMMANDS[args.command](cfg)
    except Exception as exc:  # report the failing module instead of a traceback
        sys.stderr.write(f"{args.command} failed in {type(exc).__module__}: {type(exc).__name__}: {exc}\n")
        return 3
    return write_report(cfg, args.command, res, gates, summary, started)


if __name__ == "__main__":
    sys.exit(main())
