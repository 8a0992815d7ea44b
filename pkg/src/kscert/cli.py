"""Command-line front end.

    kscert <subcommand> CONFIG.toml [--out FILE] [--summary FILE]

Subcommands: tabulate, certify, invert, hardrod, hclimit, bounds.  The
primary artifact (CSV, or JSON for certify) goes to stdout or ``--out``;
hclimit and tabulate can also write a JSON summary.

Exit codes: 0 all pass, 1 certification failure, 2 usage/config error,
3 completed with flagged rows.  ``KSCERT_THREADS`` sets the worker count.
"""

from __future__ import annotations

import argparse
import io
import json
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import __version__
from .config import SUITES, ConfigError, RunConfig, load_config
from .hardrod import (TonksParams, density_from_activity, extracted_constant_residual,
                      hardrod_hierarchy_residual, hc_ks_residual, tonks_R, tonks_rho2,
                      tonks_rho2_prime)
from .hclimit import (DEFAULT_EPSILONS, SweepPlan, empirical_rate, groeneveld_check, limit_sweep,
                      sweep_summary)
from .integrate import derive_rng
from .mayer import MayerEvaluator, _expansion, bound_from_I, invert_activity
from .residuals import (ResidualReport, _constants, bbgky_residual, bogolyubov_residual,
                        cluster_gap, cluster_gap_budget, hierarchy_parts, ks_residual,
                        ks_symmetric_residual)

__all__ = ["main", "cmd_tabulate", "cmd_certify", "cmd_invert", "cmd_hardrod", "cmd_hclimit",
           "cmd_bounds", "EXIT_OK", "EXIT_FAIL", "EXIT_CONFIG", "EXIT_FLAGGED", "thread_count"]

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_FLAGGED = 0, 1, 2, 3
THREADS_ENV = "KSCERT_THREADS"
UNITS = "# units: reduced; lengths in d (rod or core diameter), energies in 1/beta, densities in 1/d^nu"


def thread_count() -> int:
    raw = os.environ.get(THREADS_ENV, "1")
    try:
        n = int(raw)
    except ValueError:
        raise ConfigError(f"{THREADS_ENV} must be an integer, got {raw!r}")
    if n < 1:
        raise ConfigError(f"{THREADS_ENV} must be >= 1")
    return n


def _pmap(fn, items):
    items = list(items)
    workers = min(thread_count(), max(len(items), 1))
    if workers == 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(workers) as pool:
        return list(pool.map(fn, items))


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return format(float(v), ".17g")


def write_csv(stream, comments, columns, rows):
    for c in comments:
        stream.write(c if c.startswith("#") else "# " + c)
        stream.write("\n")
    stream.write(",".join(columns) + "\n")
    for r in rows:
        stream.write(",".join(_fmt(v) for v in r) + "\n")


def _dump_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=2) + "\n"


def _grid(block, x_min, x_max, points):
    lo = float(block.get("x_min", x_min))
    hi = float(block.get("x_max", x_max))
    k = int(block.get("points", points))
    if hi < lo:
        raise ConfigError("x_max must be >= x_min")
    return np.linspace(lo, hi, k)


def _activity(cfg: RunConfig, exp, P):
    if cfg.z is not None:
        return float(cfg.z), 0.0
    if cfg.rho is not None:
        return invert_activity(cfg.rho, cfg.beta, exp.pot, P, cfg.quad, expansion=exp)
    raise ConfigError("[thermo] needs z or rho")


def _header(cmd, cfg: RunConfig):
    pot = cfg.potential.describe() if cfg.potential is not None else None
    return [f"# kscert {__version__} {cmd}", UNITS,
            f"# potential: {json.dumps(pot, sort_keys=True)}",
            f"# beta={_fmt(cfg.beta)} nu={cfg.nu} seed={cfg.seed}"]


# -- subcommands ------------------------------------------------------------


def cmd_tabulate(cfg: RunConfig, out, summary=None) -> int:
    """Truncated series rho_n(0, x) on a grid with its error budget."""
    pot = cfg.need_potential()
    if cfg.nu != 1:
        raise ConfigError("tabulate works on the line (nu = 1)")
    block = cfg.block("mayer")
    n = int(block.get("n", 2))
    if n not in (1, 2):
        raise ConfigError("mayer.n must be 1 or 2")
    P = int(block.get("P", 4))
    exp = _expansion(pot, cfg.beta, 1, cfg.quad, max(P, 4))
    z, z_unc = _activity(cfg, exp, P)
    x = _grid(block, 1.5 * (pot.diameter or pot.width or 1.0), 3.0, 5)
    ev = MayerEvaluator(exp, z, P)
    X = np.stack([np.zeros_like(x), x], axis=1) if n == 2 else x[:, None]
    fine = ev.rho_n(X, ev.levels[0])
    coarse = fine if pot.is_singular else ev.rho_n(X, ev.levels[1])
    quad = np.abs(fine - coarse)
    tail = ev.tail(n)
    flagged = bool(ev.flagged)
    budget = np.full(len(x), math.inf) if flagged else tail + quad
    columns = ["x", "rho_n", "tail", "quad", "budget", "flagged"]
    exact = None
    if pot.is_singular and n == 2:
        params = TonksParams(density_from_activity(z, pot.diameter), pot.diameter)
        ok = x >= pot.diameter
        exact = np.zeros(len(x))
        if ok.any():
            exact[ok] = tonks_rho2(x[ok], params)
        columns.insert(2, "rho_exact")
    rows = []
    for i in range(len(x)):
        r = [x[i], fine[i], tail, quad[i], budget[i], flagged]
        if exact is not None:
            r.insert(2, exact[i])
        rows.append(r)
    comments = _header("tabulate", cfg) + [
        f"# n={n} P={P} z={_fmt(z)} z_uncertainty={_fmt(z_unc)} z_radius={_fmt(exp.z_radius)}",
        "# rho_n is rho_1 at q=x for n=1 and rho_2(0, x) for n=2",
    ]
    write_csv(out, comments, columns, rows)
    if summary is not None:
        summary.write(_dump_json({"command": "tabulate", "n": n, "P": P, "z": z, "z_uncertainty": z_unc,
                                  "z_radius": exp.z_radius, "rows": len(rows), "flagged": flagged}))
    return EXIT_FLAGGED if flagged else EXIT_OK


_TONKS_HIER = [(0.0, 1.5), (0.0, -1.4), (0.0, 2.6), (0.0, 3.3), (0.0, -2.45),
               (0.0, 1.5, 3.2), (0.0, -1.3, 1.6), (0.0, 1.2, 2.5), (0.0, -1.7, -3.1), (0.0, 4.5, 1.1)]
_TONKS_EXTRACT = [(0.0,), (0.0, 1.5), (0.0, 1.4, 2.9)]
_TONKS_KS = [(0.0,), (0.0, 1.5), (0.0, 1.5, 3.0)]


def _tonks_suite(cfg: RunConfig, res_block):
    hb = cfg.block("hardrod")
    params = TonksParams(float(hb.get("rho", 0.2)), float(hb.get("d", 1.0)))
    d = params.d
    scale = float(res_block.get("z_scale", 1.0))
    z = tonks_R(params).z * scale
    reps = []
    for c in _TONKS_HIER:
        reps.append(hardrod_hierarchy_residual(np.asarray(c) * d, params))
    for c in _TONKS_EXTRACT:
        reps.append(extracted_constant_residual(len(c), np.asarray(c) * d, params))
    for c in _TONKS_KS:
        reps.append(hc_ks_residual(len(c), np.asarray(c) * d, params, z=z))
    return reps


def _series_setup(cfg: RunConfig, res_block):
    pot = cfg.need_potential()
    if cfg.nu != 1:
        raise ConfigError("certify runs series checks on the line (nu = 1)")
    P = int(res_block.get("P", 4))
    exp = _expansion(pot, cfg.beta, 1, cfg.quad, max(P, 4))
    z, _ = _activity(cfg, exp, P)
    ev = MayerEvaluator(exp, z, P)
    if ev.flagged:
        raise ConfigError(f"z={z} outside the certified radius {exp.z_radius}")
    return pot, ev, z * float(res_block.get("z_scale", 1.0))


def _configs(res_block, default):
    cs = res_block.get("configs", default)
    return [np.asarray(c, dtype=float) for c in cs]


def _suite(name, cfg: RunConfig, res_block):
    if name == "tonks":
        return _tonks_suite(cfg, res_block)
    rng = derive_rng(cfg.seed, "certify/" + name)
    samples = int(res_block.get("samples", 5))
    fd = float(res_block.get("fd_step", 1e-4))
    if name == "groeneveld":
        pot = cfg.need_potential()
        if pot.kind != "soft_core":
            raise ConfigError("the groeneveld suite needs a soft_core potential")
        if cfg.z is None:
            raise ConfigError("the groeneveld suite needs thermo.z")
        P = int(res_block.get("P", 4))
        return [groeneveld_check(len(c), c, pot.sharpness, cfg.z, P, cfg.quad, pot.diameter, cfg.beta)
                for c in _configs(res_block, [[0.0], [0.0, 1.5], [0.0, 0.5]])]
    pot, ev, z = _series_setup(cfg, res_block)
    if name == "ks":
        m = int(res_block.get("m_max", 3))
        return [ks_residual(len(c), c, z, ev, m_max=m) for c in _configs(res_block, [[0.0, 1.5]])]
    if name == "ks_symmetric":
        k = int(res_block.get("k_max", 3))
        reps = []
        for c in _configs(res_block, [[0.0, 1.5]]):
            for q0 in rng.uniform(-3.0, 3.0, samples):
                reps.append(ks_symmetric_residual(len(c), c, float(q0), ev, k_max=k))
        return reps
    if name == "bbgky":
        return [bbgky_residual(len(c), c, ev, fd_step=fd) for c in _configs(res_block, [[0.0, 1.5], [0.0, 0.8]])]
    if name == "bogolyubov":
        reps = []
        for c in _configs(res_block, [[0.0, 1.5]]):
            parts = [hierarchy_parts(len(c), c, ev, fd_step=fd, particle=i) for i in range(len(c))]
            for _ in range(samples):
                p = rng.normal(0.0, 1.0 / math.sqrt(cfg.beta), len(c))
                reps.append(bogolyubov_residual(len(c), (c, p), ev, fd_step=fd, parts=parts))
        return reps
    if name == "cluster":
        reps = []
        for s in (6.0, 10.0):
            gap = cluster_gap(1, 1, s, ev)
            reps.append(ResidualReport("cluster_gap", 2, {"nA": 1, "nB": 1, "s": s}, gap,
                                       cluster_gap_budget(1, 1, ev), {"tail": cluster_gap_budget(1, 1, ev)}))
        return reps
    raise ConfigError(f"unknown suite {name!r}")


def cmd_certify(cfg: RunConfig, out, summary=None) -> int:
    """Run the selected residual suites; exit 0 iff every report passes."""
    block = cfg.block("residuals")
    suite = block.get("suite", ["tonks"])
    if isinstance(suite, str):
        suite = [suite]
    if not suite:
        raise ConfigError("empty suite selection")
    for s in suite:
        if s not in SUITES:
            raise ConfigError(f"unknown suite {s!r}; choose from {list(SUITES)}")
    groups = _pmap(lambda s: _suite(s, cfg, block), suite)
    reports = [r.to_dict() for g in groups for r in g]
    failed = sum(not r["pass"] for r in reports)
    doc = {"command": "certify", "suite": list(suite), "seed": cfg.seed, "reports": reports,
           "passed": len(reports) - failed, "failed": failed, "all_pass": failed == 0}
    out.write(_dump_json(doc))
    return EXIT_OK if failed == 0 else EXIT_FAIL


def cmd_invert(cfg: RunConfig, out, summary=None) -> int:
    """Activity for each requested density from the truncated rho_1 series."""
    pot = cfg.need_potential()
    block = cfg.block("invert")
    rhos = block.get("rho", [cfg.rho] if cfg.rho is not None else None)
    if rhos is None:
        raise ConfigError("[invert] needs rho (number or list)")
    if not isinstance(rhos, list):
        rhos = [rhos]
    P = int(block.get("P", 4))
    exp = _expansion(pot, cfg.beta, cfg.nu, cfg.quad, max(P, 4))
    rows = []
    flagged_any = False
    for rho in rhos:
        z, unc = invert_activity(rho, cfg.beta, pot, P, cfg.quad, cfg.nu, expansion=exp)
        flagged = not abs(z) < exp.z_radius
        flagged_any |= flagged
        rows.append([rho, z, unc, flagged])
    comments = _header("invert", cfg) + [f"# P={P} z_radius={_fmt(exp.z_radius)}"]
    write_csv(out, comments, ["rho", "z", "z_uncertainty", "flagged"], rows)
    return EXIT_FLAGGED if flagged_any else EXIT_OK


def cmd_hardrod(cfg: RunConfig, out, summary=None) -> int:
    """Closed-form Tonks pair correlation and its derivative on a grid."""
    hb = cfg.block("hardrod")
    params = TonksParams(float(hb.get("rho", 0.2)), float(hb.get("d", 1.0)))
    x = _grid(hb, params.d, 4.0 * params.d, 13)
    c = tonks_R(params)
    rows = [[xi, r2, dr2] for xi, r2, dr2 in zip(x, tonks_rho2(x, params), tonks_rho2_prime(x, params))]
    comments = [f"# kscert {__version__} hardrod", UNITS,
                f"# rho={_fmt(params.rho)} d={_fmt(params.d)} R={_fmt(c.R)} z={_fmt(c.z)} "
                f"rho2_contact={_fmt(c.rho2_contact)}",
                "# rho2_prime is one-sided (right) at x = k d"]
    write_csv(out, comments, ["x", "rho2", "rho2_prime"], rows)
    return EXIT_OK


def _plan(cfg: RunConfig) -> SweepPlan:
    hb = cfg.block("hclimit")
    drive = hb.get("drive", "z")
    z = hb.get("z", cfg.z if cfg.z is not None else 0.05)
    rho = hb.get("rho", cfg.rho)
    try:
        return SweepPlan(
            epsilons=tuple(float(e) for e in hb.get("epsilons", DEFAULT_EPSILONS)),
            x_min=float(hb.get("x_min", 1.05)), x_max=float(hb.get("x_max", 3.0)),
            points=int(hb.get("points", 12)), drive=drive, z=float(z),
            rho=None if rho is None else float(rho), P=int(hb.get("P", 4)),
            d=float(hb.get("d", 1.0)), beta=float(hb.get("beta", cfg.beta)),
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def cmd_hclimit(cfg: RunConfig, out, summary=None) -> int:
    """Soft-core rho_2 against the hard-rod rho_2 along an eps sequence."""
    plan = _plan(cfg)

    def one(eps):
        sub = SweepPlan(**{**plan.__dict__, "epsilons": (eps,)})
        return limit_sweep(sub, cfg.quad)

    rows = [r for part in _pmap(one, plan.epsilons) for r in part]
    fixed_rho = plan.drive == "rho"
    columns = ["epsilon", "x"] + (["z"] if fixed_rho else []) + [
        "rho2_eps", "rho2_hard", "abs_error", "budget", "flagged"]
    table = []
    for r in rows:
        table.append([r.epsilon, r.x] + ([r.z] if fixed_rho else []) + [
            r.rho2_eps, r.rho2_hard, r.abs_error, r.budget, r.flagged])
    comments = _header("hclimit", cfg) + [
        f"# drive={plan.drive} z={_fmt(plan.z)} rho={plan.rho} P={plan.P} d={_fmt(plan.d)} "
        f"grid=[{_fmt(plan.x_min)},{_fmt(plan.x_max)}]x{plan.points}"]
    write_csv(out, comments, columns, table)
    summ = sweep_summary(rows)
    rate = empirical_rate(summ) if len(summ) >= 2 else None
    flagged = any(s["flagged"] for s in summ)
    if summary is not None:
        summary.write(_dump_json({
            "command": "hclimit", "drive": plan.drive, "per_epsilon": summ,
            "empirical_rate": None if rate is None or not math.isfinite(rate) else rate,
            "flagged": flagged,
        }))
    return EXIT_FLAGGED if flagged else EXIT_OK


def cmd_bounds(cfg: RunConfig, out, summary=None) -> int:
    """Constants I, J, G, the activity radius and |c_{n,p}| bounds."""
    pot = cfg.need_potential()
    if cfg.nu != 1:
        from .potential import i_beta
        ib = i_beta(pot, cfg.beta, cfg.nu, cfg.quad)
        I, J, G = ib.value + ib.error_estimate, math.nan, math.nan
    else:
        I, J, G = _constants(pot, cfg.beta)
    block = cfg.block("bounds")
    n_max = int(block.get("n_max", 3))
    p_max = int(block.get("p_max", 4))
    radius = math.inf if I == 0 else 1.0 / (I * math.e)
    xi = math.inf if I == 0 else 1.0 / (2.0 * I * math.e)
    rows = [[n, p, bound_from_I(n, p, I)] for n in range(1, n_max + 1) for p in range(0, p_max + 1)]
    comments = _header("bounds", cfg) + [
        f"# I_beta={_fmt(I)} J_beta={_fmt(J)} grad_f_sup={_fmt(G)} z_radius={_fmt(radius)} "
        f"xi_admissible={_fmt(xi)}"]
    write_csv(out, comments, ["n", "p", "coeff_bound"], rows)
    return EXIT_OK


COMMANDS = {
    "tabulate": cmd_tabulate,
    "certify": cmd_certify,
    "invert": cmd_invert,
    "hardrod": cmd_hardrod,
    "hclimit": cmd_hclimit,
    "bounds": cmd_bounds,
}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="kscert", description="Certified Mayer-series and hierarchy checks.")
    ap.add_argument("--version", action="version", version=f"kscert {__version__}")
    ap.add_argument("command", choices=sorted(COMMANDS))
    ap.add_argument("config", help="TOML run configuration")
    ap.add_argument("--out", help="write the primary output here instead of stdout")
    ap.add_argument("--summary", help="write a JSON summary here (tabulate, hclimit)")
    return ap


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(message)


def main(argv=None) -> int:
    ap = build_parser()
    ap.__class__ = _Parser
    try:
        args = ap.parse_args(argv)
    except _UsageError as exc:
        ap.print_usage(sys.stderr)
        print(f"kscert: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        cfg = load_config(args.config)
        buf = io.StringIO()
        summ = io.StringIO() if args.summary else None
        code = COMMANDS[args.command](cfg, buf, summ)
    except ConfigError as exc:
        print(f"kscert: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # infrastructure failure
        print(f"kscert: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if args.out:
        with open(args.out, "w", newline="") as fh:
            fh.write(buf.getvalue())
    else:
        sys.stdout.write(buf.getvalue())
    if summ is not None:
        with open(args.summary, "w", newline="") as fh:
            fh.write(summ.getvalue())
    return code


if __name__ == "__main__":
    sys.exit(main())
