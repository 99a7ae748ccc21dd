"""Command-line experiment runner.

Subcommands: validate (echo derived constants and well-posedness), merton
(closed-form benchmark table over correlations), solve (single fixed-point
solve writing the solution fields and report), sweep (correlation/intensity
grid behind the value and allocation figures), mc (Monte-Carlo validation
of a stored solution).  Exit codes: 0 success, 2 config error,
3 well-posedness error, 4 solver failure.
"""

from __future__ import annotations

import argparse
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import driver, mc
from .config import AppConfig, ConfigError, load_config
from .gop import gauss_hermite
from .lattice import interp1, save_field
from .model import (MarketParams, WellPosednessViolated, derive_constants,
                    merton_fractions, merton_value,
                    unconstrained_growth_constant)

log = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_ILL_POSED = 3
EXIT_SOLVER = 4

SWEEP_HEADER = "rho,lambda,V_at_1,alpha_frac_at_1,merton_constrained,merton_unconstrained"


def _fmt(x) -> str:
    return f"{x:.10g}"


def _write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)
    log.info("wrote %s", path)


def cmd_validate(cfg: AppConfig, out_dir: Path) -> int:
    params = cfg.market
    try:
        consts = derive_constants(params)
    except WellPosednessViolated as exc:
        print(f"well-posedness violated: beta={exc.beta} <= k_p={exc.k}")
        return EXIT_ILL_POSED
    print(f"k_tilde_p = {consts.k_tilde_p:.6f}")
    print(f"k_p       = {consts.k_p:.6f}")
    print(f"margin    = {consts.margin:.6f}")
    print(f"delta     = {consts.delta:.6f}")
    print(f"drift_j   = {consts.drift_j:.6f}  vol_j = {consts.vol_j:.6f}")
    print(f"drift_y   = {consts.drift_y:.6f}  vol_y = {consts.vol_y:.6f}")
    print("delta by intensity:")
    for lam in (1.0, 5.0, 10.0, 50.0):
        d = lam / (lam + consts.margin)
        print(f"  lambda={lam:<5g} delta={d:.6f}")
    return EXIT_OK


def cmd_merton(cfg: AppConfig, out_dir: Path, rhos) -> int:
    rows = [
        "rho,constrained,unconstrained,u_l_star,u_i_star"
    ]
    for rho in rhos:
        params = cfg.market.with_(rho=rho)
        u_l, u_i = merton_fractions(params)
        rows.append(",".join(_fmt(v) for v in (
            rho, merton_value(params, constrained=True),
            merton_value(params, constrained=False), u_l, u_i)))
    text = "\n".join(rows) + "\n"
    _write(out_dir / "merton.csv", text)
    print(text, end="")
    return EXIT_OK


def _solve_once(cfg: AppConfig, params: MarketParams):
    try:
        sol = driver.iterate(params, cfg.grid, cfg.iteration, cfg.solver)
        return sol, True
    except driver.NoConvergence as exc:
        return exc.solution, False


def cmd_solve(cfg: AppConfig, out_dir: Path) -> int:
    sol, converged = _solve_once(cfg, cfg.market)
    rep = sol.report
    out_dir.mkdir(parents=True, exist_ok=True)
    save_field(out_dir / "v_radial.field", sol.v_radial)
    save_field(out_dir / "vhat.field", sol.vhat)
    rows = ["iteration,increment,ratio,delta"]
    for it, inc, ratio, delta in rep.summary_rows():
        rows.append(f"{it},{_fmt(inc)},{_fmt(ratio)},{_fmt(delta)}")
    _write(out_dir / "report.csv", "\n".join(rows) + "\n")
    alloc_rows = ["r,a_star,a_frac"]
    for r, a in zip(sol.alloc_rs, sol.alloc_a):
        alloc_rows.append(f"{_fmt(r)},{_fmt(a)},{_fmt(a / r if r > 0 else 0.0)}")
    _write(out_dir / "alloc.csv", "\n".join(alloc_rows) + "\n")
    v1 = float(interp1(sol.v_radial, 1.0))
    print(f"V(1) = {v1:.6f}  horizon = {rep.horizon:.4f}  iterations = {rep.n_iter}"
          f"  converged = {converged}")
    return EXIT_OK if converged else EXIT_SOLVER


def _sweep_point(args):
    cfg, rho, lam = args
    params = cfg.market.with_(rho=rho, lam=lam)
    sol, converged = _solve_once(cfg, params)
    v1 = float(interp1(sol.v_radial, 1.0))
    a1 = float(np.interp(1.0, sol.alloc_rs, sol.alloc_a))
    return dict(rho=rho, lam=lam, v1=v1, a_frac=a1,
                mc_constrained=merton_value(params, constrained=True),
                mc_unconstrained=merton_value(params, constrained=False),
                converged=converged)


def run_sweep(cfg: AppConfig, rhos, lams, workers: int = 1) -> list[dict]:
    points = [(cfg, rho, lam) for rho in rhos for lam in lams]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_sweep_point, points))
    else:
        results = [_sweep_point(pt) for pt in points]
    return results


def sweep_csv(results: list[dict]) -> str:
    rows = [SWEEP_HEADER]
    for r in results:
        rows.append(",".join(_fmt(v) for v in (
            r["rho"], r["lam"], r["v1"], r["a_frac"],
            r["mc_constrained"], r["mc_unconstrained"])))
    return "\n".join(rows) + "\n"


def cmd_sweep(cfg: AppConfig, out_dir: Path, rhos, lams, workers: int) -> int:
    results = run_sweep(cfg, rhos, lams, workers)
    text = sweep_csv(results)
    _write(out_dir / "sweep.csv", text)
    print(text, end="")
    return EXIT_OK if all(r["converged"] for r in results) else EXIT_SOLVER


def cmd_mc(cfg: AppConfig, out_dir: Path) -> int:
    sol, converged = _solve_once(cfg, cfg.market)
    policy = driver.extract_policy(sol, cfg.market)
    res = mc.simulate_policy(cfg.market, policy, 1.0, cfg.mc)
    disc, disc_se = mc.dpp_check(cfg.market, sol.v_radial, policy, 1.0, cfg.mc)
    v1 = float(interp1(sol.v_radial, 1.0))
    rows = ["policy,r0,mean,stderr,n_paths,seed",
            f"extracted,1,{_fmt(res.mean)},{_fmt(res.stderr)},{res.n_paths},{res.seed}",
            f"dpp_discrepancy,1,{_fmt(disc)},{_fmt(disc_se)},{cfg.mc.n_paths},{cfg.mc.seed}"]
    _write(out_dir / "mc.csv", "\n".join(rows) + "\n")
    print(f"V(1)={v1:.6f}  mc mean={res.mean:.6f} (se {res.stderr:.2e})"
          f"  dpp discrepancy={disc:+.6f} (se {disc_se:.2e})")
    return EXIT_OK if converged else EXIT_SOLVER


def _float_list(text: str) -> list[float]:
    return [float(tok) for tok in text.split(",") if tok.strip()]


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="illiquid",
                                     description="Illiquid-asset HJB solver")
    parser.add_argument("--config", type=Path, default=None)
    parser.add_argument("--out-dir", type=Path, default=Path("out"))
    parser.add_argument("--seed", type=int, default=None)
    parser.add_argument("--tol", type=float, default=None)
    parser.add_argument("--workers", type=int, default=1)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("validate")
    p_mert = sub.add_parser("merton")
    p_mert.add_argument("--rho", type=_float_list,
                        default=[-0.8, -0.4, 0.0, 0.4, 0.8])
    sub.add_parser("solve")
    p_sweep = sub.add_parser("sweep")
    p_sweep.add_argument("--rho", type=_float_list,
                         default=[-0.8, -0.4, 0.0, 0.4, 0.8])
    p_sweep.add_argument("--lambda", dest="lams", type=_float_list,
                         default=[1.0, 5.0, 10.0, 50.0])
    sub.add_parser("mc")
    args = parser.parse_args(argv)

    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(name)s %(message)s")
    try:
        cfg = load_config(args.config)
    except (ConfigError, OSError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if args.seed is not None:
        cfg.mc = type(cfg.mc)(n_paths=cfg.mc.n_paths, horizon=cfg.mc.horizon,
                              dt=cfg.mc.dt, seed=args.seed,
                              antithetic=cfg.mc.antithetic)
    if args.tol is not None:
        from dataclasses import replace
        cfg.iteration = replace(cfg.iteration, tol_rel=args.tol)

    try:
        if args.command == "validate":
            return cmd_validate(cfg, args.out_dir)
        if args.command == "merton":
            return cmd_merton(cfg, args.out_dir, args.rho)
        if args.command == "solve":
            return cmd_solve(cfg, args.out_dir)
        if args.command == "sweep":
            return cmd_sweep(cfg, args.out_dir, args.rho, args.lams, args.workers)
        if args.command == "mc":
            return cmd_mc(cfg, args.out_dir)
    except WellPosednessViolated as exc:
        print(f"well-posedness violated: discount {exc.beta} <= growth {exc.k}",
              file=sys.stderr)
        return EXIT_ILL_POSED
    except Exception as exc:  # solver failures
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
