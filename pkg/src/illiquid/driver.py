"""Outer fixed-point loop coupling the PDE stage with the wealth-split max.

Starts from the zero iterate, alternates: tabulate the nonlocal source from
the current radial iterate, solve the finite-horizon stage, maximize over
the time-0 wealth split.  Increments contract geometrically with factor
delta = lam / (lam + beta - k_p); the loop stops when the geometric-tail
residual estimate drops below the tolerance.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field

import numpy as np

from .gop import JLaw, gauss_hermite, g_field
from .hjb import SolverConfig, solve_stage
from .hop import h_field
from .lattice import GridSpec, RadialField, ValueField, interp1
from .model import MarketParams, UtilityPower, derive_constants, merton_value

log = logging.getLogger(__name__)

MIN_LAYERS = 12
LAYER_DT_TARGET = 0.16   # layer spacing the adaptive layer count aims for


class NoConvergence(Exception):
    """Iteration cap reached with the residual estimate above tolerance."""

    def __init__(self, solution: "Solution"):
        est = solution.report.residual_estimate
        super().__init__(f"no convergence after {solution.report.n_iter} iterations "
                         f"(residual estimate {est:.3e})")
        self.solution = solution


@dataclass(frozen=True)
class IterationConfig:
    tol_rel: float = 1e-2
    n_max: int = 4000
    t_policy: str = "auto"          # "auto" | "fixed"
    t_fixed: float | None = None
    stop_rule: str = "residual"     # "residual" | "increment"
    horizon_safety: float = 10.0
    account_contraction: bool = True
    adapt_layers: bool = True

    def __post_init__(self):
        if self.tol_rel <= 0:
            raise ValueError("tol_rel must be positive")
        if self.n_max < 1:
            raise ValueError("n_max must be >= 1")
        if self.t_policy not in ("auto", "fixed"):
            raise ValueError("t_policy must be 'auto' or 'fixed'")
        if self.stop_rule not in ("residual", "increment"):
            raise ValueError("stop_rule must be 'residual' or 'increment'")


@dataclass
class SolveReport:
    delta: float
    horizon: float
    bound_exponent: float            # beta + lam - k_p
    increments: list[float] = field(default_factory=list)
    ratios: list[float] = field(default_factory=list)
    stage_seconds: list[float] = field(default_factory=list)
    residual_estimate: float = math.inf
    converged: bool = False
    n_iter: int = 0
    worst_monotonicity_defect: float = 0.0   # most negative pointwise V^{n+1}-V^n
    k_v_estimate: float = 0.0                # empirical sup V(r)/r^p
    k_v_hat_estimate: float = 0.0            # empirical sup Vhat/(e^{k~t}(x+y)^p)

    def summary_rows(self):
        rows = []
        for i, inc in enumerate(self.increments):
            ratio = self.ratios[i - 1] if i >= 1 else float("nan")
            rows.append((i + 1, inc, ratio, self.delta))
        return rows


@dataclass
class Solution:
    v_radial: RadialField
    vhat: ValueField
    alloc_rs: np.ndarray
    alloc_a: np.ndarray
    report: SolveReport
    params: MarketParams
    solver: SolverConfig


def choose_horizon(params: MarketParams, tol_rel: float, safety: float = 10.0,
                   account_contraction: bool = False,
                   t_cap: float | None = None) -> float:
    """Smallest T with exp(-(beta+lam-k_p) T) <= tol_rel / safety.

    With ``account_contraction`` the target is additionally divided by
    (1 - delta): the finite-horizon error is amplified by the geometric sum
    of the iteration, which matters once delta is close to one.
    """
    consts = derive_constants(params)
    nu = params.beta + params.lam - consts.k_p
    target = tol_rel / safety
    if account_contraction:
        target *= 1.0 - consts.delta
    t = math.log(1.0 / target) / nu
    if t_cap is not None:
        t = min(t, t_cap)
    return t


def _work_grid(grid: GridSpec, horizon: float, adapt_layers: bool) -> GridSpec:
    n_t = grid.n_t
    if adapt_layers:
        n_t = int(np.clip(math.ceil(horizon / LAYER_DT_TARGET) + 1, MIN_LAYERS, grid.n_t))
    return grid.with_(t_max=horizon, n_t=n_t)


def iterate(params: MarketParams, grid: GridSpec, it_cfg: IterationConfig | None = None,
            solver_cfg: SolverConfig | None = None) -> Solution:
    """Run the coupled fixed point to convergence; returns the Solution.

    Raises NoConvergence (carrying the partial solution) when the iteration
    cap is hit first; stage errors propagate.
    """
    it_cfg = it_cfg or IterationConfig()
    consts = derive_constants(params)
    if it_cfg.t_policy == "fixed":
        if it_cfg.t_fixed is None:
            raise ValueError("t_policy='fixed' requires t_fixed")
        horizon = it_cfg.t_fixed
    else:
        horizon = choose_horizon(params, it_cfg.tol_rel, it_cfg.horizon_safety,
                                 it_cfg.account_contraction, t_cap=grid.t_max)
    wgrid = _work_grid(grid, horizon, it_cfg.adapt_layers)
    scfg = (solver_cfg or SolverConfig(grid=wgrid)).with_(grid=wgrid)
    law = JLaw.from_constants(consts)
    rule = gauss_hermite(scfg.quad_order)

    report = SolveReport(delta=consts.delta, horizon=horizon,
                         bound_exponent=params.beta + params.lam - consts.k_p)
    rs = wgrid.rs
    v = RadialField.zeros(rs, params.p)
    vhat = None
    alloc = np.zeros_like(rs)
    converged = False
    for n in range(it_cfg.n_max):
        t0 = time.perf_counter()
        gfld = g_field(v, law, rule, wgrid)
        source = ValueField(grid=wgrid, values=params.lam * gfld.values,
                            envelope_exponent=params.p)
        vhat = solve_stage(source, v, params, scfg)
        v_next, alloc = h_field(vhat.slice0(), wgrid, rs, params.p)
        inc = float(np.max(np.abs(v_next.values - v.values)))
        defect = float(np.min(v_next.values - v.values))
        report.worst_monotonicity_defect = min(report.worst_monotonicity_defect, defect)
        report.increments.append(inc)
        if n >= 1 and report.increments[-2] > 0:
            report.ratios.append(inc / report.increments[-2])
        report.stage_seconds.append(time.perf_counter() - t0)
        v = v_next
        norm = max(float(np.max(v.values)), 1e-300)
        if it_cfg.stop_rule == "residual":
            d_hat = min(max(consts.delta, report.ratios[-1] if report.ratios else consts.delta), 0.99995)
            report.residual_estimate = inc * d_hat / (1.0 - d_hat)
        else:
            report.residual_estimate = inc
        log.info("iteration %d: increment=%.4e residual_est=%.4e (tol %.1e) wall=%.2fs",
                 n + 1, inc, report.residual_estimate, it_cfg.tol_rel * norm,
                 report.stage_seconds[-1])
        if report.residual_estimate <= it_cfg.tol_rel * norm:
            converged = True
            report.n_iter = n + 1
            break
    else:
        report.n_iter = it_cfg.n_max

    report.converged = converged
    report.k_v_estimate = float(np.max(v.values[1:] / rs[1:] ** params.p))
    env = np.exp(consts.k_tilde_p * wgrid.ts)[:, None, None] \
        * np.add.outer(wgrid.xs, wgrid.ys)[None, :, :] ** params.p
    env[:, 0, 0] = 1.0
    report.k_v_hat_estimate = float(np.max(vhat.values / env))
    sol = Solution(v_radial=v, vhat=vhat, alloc_rs=rs, alloc_a=alloc,
                   report=report, params=params, solver=scfg)
    if not converged:
        raise NoConvergence(sol)
    return sol


@dataclass
class PolicyBundle:
    """Feedback controls on the lattice plus the time-0 allocation profile."""

    grid: GridSpec
    c_star: np.ndarray      # (n_t, n_x, n_y)
    pi_star: np.ndarray
    alloc_rs: np.ndarray
    alloc_a: np.ndarray

    def _interp(self, arr, t, x, y):
        g = self.grid
        t = np.clip(np.asarray(t, dtype=float), 0.0, g.t_max)
        x = np.minimum(np.asarray(x, dtype=float), g.x_max)
        y = np.minimum(np.asarray(y, dtype=float), g.y_max)
        ft = np.minimum(t / g.dt, g.n_t - 1.0)
        k0 = np.minimum(ft.astype(int), g.n_t - 2)
        wt = ft - k0
        fi = np.minimum(x / g.dx, g.n_x - 1.0)
        i0 = np.minimum(fi.astype(int), g.n_x - 2)
        wx = fi - i0
        fj = np.minimum(y / g.dy, g.n_y - 1.0)
        j0 = np.minimum(fj.astype(int), g.n_y - 2)
        wy = fj - j0

        def bilerp(k):
            return ((1 - wx) * (1 - wy) * arr[k, i0, j0] + wx * (1 - wy) * arr[k, i0 + 1, j0]
                    + (1 - wx) * wy * arr[k, i0, j0 + 1] + wx * wy * arr[k, i0 + 1, j0 + 1])

        return (1 - wt) * bilerp(k0) + wt * bilerp(k0 + 1)

    def c(self, t, x, y):
        return self._interp(self.c_star, t, x, y)

    def pi(self, t, x, y):
        return self._interp(self.pi_star, t, x, y)

    def alloc(self, r):
        r = np.asarray(r, dtype=float)
        out = np.interp(r, self.alloc_rs, self.alloc_a)
        r_last = self.alloc_rs[-1]
        beyond = r > r_last
        if np.any(beyond) and r_last > 0:
            out = np.where(beyond, self.alloc_a[-1] / r_last * r, out)
        return np.minimum(out, r)

    def alloc_fraction(self, r: float) -> float:
        return float(self.alloc(r) / r) if r > 0 else 0.0


def extract_policy(solution: Solution, params: MarketParams) -> PolicyBundle:
    """Recover feedback controls from the final stage field.

    Discrete-control argmax everywhere, overwritten by the closed-form
    maximizers at nodes where the jet preconditions (q1 > 0, Q11 < 0) hold.
    At x = 0 the only admissible pair is (0, 0).
    """
    g = solution.solver.grid
    vals = solution.vhat.values
    c_max, _, pi_eff = solution.solver.resolved_caps(params)
    util = UtilityPower(p=params.p, u_scale=params.u_scale)
    c_vals = np.linspace(0.0, c_max, solution.solver.n_c)
    c_utils = util.u(c_vals)
    pi_vals = np.linspace(-pi_eff, pi_eff, solution.solver.n_pi)
    dx, dy = g.dx, g.dy
    ys = g.ys[None, :]

    c_star = np.zeros_like(vals)
    pi_star = np.zeros_like(vals)
    for k in range(g.n_t):
        v = vals[k]
        q1 = np.zeros_like(v)
        q1[1:, :] = (v[1:, :] - v[:-1, :]) / dx
        dxp = np.zeros_like(v)
        dxp[:-1, :] = (v[1:, :] - v[:-1, :]) / dx
        dxp[-1, :] = q1[-1, :]
        q11 = np.zeros_like(v)
        q11[1:-1, :] = (v[2:, :] - 2 * v[1:-1, :] + v[:-2, :]) / dx ** 2
        q11[0, :] = q11[1, :]
        q11[-1, :] = q11[-2, :]
        q12 = np.zeros_like(v)
        q12[1:-1, 1:-1] = (v[2:, 2:] + v[:-2, :-2] - v[2:, :-2] - v[:-2, 2:]) / (4 * dx * dy)

        # discrete argmax, consumption
        cand = c_utils[:, None, None] - c_vals[:, None, None] * q1[None, :, :]
        c_k = c_vals[np.argmax(cand, axis=0)]
        # discrete argmax, position (same upwind objective as the sweep)
        drift = pi_vals[:, None, None] * params.b_l
        dsel = np.where(drift >= 0, dxp[None, :, :], q1[None, :, :])
        mix = pi_vals[:, None, None] * (params.rho * params.sigma_i * params.sigma_l) \
            * ys[None, :, :] * q12[None, :, :]
        pval = drift * dsel + 0.5 * params.sigma_l ** 2 * pi_vals[:, None, None] ** 2 \
            * q11[None, :, :] + mix
        pi_k = pi_vals[np.argmax(pval, axis=0)]

        # closed forms where the jet is usable
        ok = (q1 > 0) & (q11 < 0)
        qsafe = np.where(ok, q1, 1.0)
        c_cf = (params.u_scale * params.p / qsafe) ** (1.0 / (1.0 - params.p))
        c_k = np.where(ok, np.clip(c_cf, 0.0, c_max), c_k)
        num = params.b_l * q1 + params.rho * params.sigma_l * params.sigma_i * ys * q12
        pi_cf = -num / (params.sigma_l ** 2 * np.where(ok, q11, -1.0))
        pi_k = np.where(ok, np.clip(pi_cf, -pi_eff, pi_eff), pi_k)

        c_star[k] = c_k
        pi_star[k] = pi_k

    c_star[:, 0, :] = 0.0
    pi_star[:, 0, :] = 0.0
    return PolicyBundle(grid=g, c_star=c_star, pi_star=pi_star,
                        alloc_rs=solution.alloc_rs, alloc_a=solution.alloc_a)


def merton_bound(params: MarketParams) -> float:
    """Constrained-Merton coefficient dominating every iterate."""
    return merton_value(params, constrained=True)


def value_at(solution: Solution, r: float) -> float:
    return float(interp1(solution.v_radial, r))
