"""One stage of the scheme: the finite-horizon parabolic HJB solve.

Given the tabulated nonlocal source lam * G[V_n] and the current radial
iterate (for the x = 0 Dirichlet boundary), solve backward from the terminal
layer with an explicit monotone sweep.  The time step obeys a CFL bound
assembled from the largest coefficients over the node/control ranges; layers
are sub-stepped as needed.

Boundary treatment:
  * x = 0: Dirichlet values from the closed lognormal reduction of the
    boundary integral (Simpson in time, Gauss-Hermite in space);
  * y = 0: the y coefficients vanish, leaving the one-dimensional equation
    on the line;
  * outer edges: ghost nodes extend the field along the power envelope, and
    updated values are clamped by the growth bound
    K_hat * exp(k_tilde * t) * (x + y)**p.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, replace

import numpy as np
from scipy.integrate import simpson

from . import _kernels
from .gop import JLaw, QuadratureRule, gauss_hermite
from .lattice import GridSpec, RadialField, ValueField, interp1
from .model import (DerivedConstants, MarketParams, UtilityPower,
                    derive_constants, merton_value)

log = logging.getLogger(__name__)


class DegenerateJet(Exception):
    """Closed-form Hamiltonian requested outside q1 > 0, Q11 < 0."""


class CflUnsatisfiable(Exception):
    """Required sub-step count exceeds the configured cap."""


class NonFiniteValue(Exception):
    """A lattice node became non-finite during the sweep."""


# position cap headroom over the largest closed-form optimum on the domain
PI_COVER_HEADROOM = 1.5


@dataclass(frozen=True)
class SolverConfig:
    grid: GridSpec
    c_max: float | None = None        # default 3 (beta + lam) x_max
    pi_max: float | None = None       # default 3 x_max
    n_c: int = 17
    n_pi: int = 17
    cfl_safety: float = 0.9
    quad_order: int = 32
    terminal: np.ndarray | None = None   # (n_x, n_y) layer; zero when None
    pi_cfl_cap: float | None = None   # stability cap on the searched positions
    max_substeps: int = 2_000_000     # per stage, across all layers

    def __post_init__(self):
        if not 0.0 < self.cfl_safety <= 1.0:
            raise ValueError("cfl_safety must lie in (0, 1]")
        if self.n_c < 2 or self.n_pi < 2:
            raise ValueError("control grids need at least 2 points")

    def with_(self, **kwargs) -> "SolverConfig":
        return replace(self, **kwargs)

    def resolved_caps(self, params: MarketParams) -> tuple[float, float, float]:
        """(c_max, pi_max, pi_effective) with defaults filled in.

        The effective position range is the smaller of pi_max and the CFL
        coverage cap; the cap defaults to a multiple of the largest
        closed-form optimal position on the domain, so tightening it does
        not bind at the optimum while it keeps the stable time step usable.
        """
        g = self.grid
        c_max = self.c_max if self.c_max is not None else 3.0 * (params.beta + params.lam) * g.x_max
        pi_max = self.pi_max if self.pi_max is not None else 3.0 * g.x_max
        if self.pi_cfl_cap is not None:
            cap = self.pi_cfl_cap
        else:
            merton_pos = params.b_l / ((1.0 - params.p) * params.sigma_l ** 2) * (g.x_max + g.y_max)
            hedge_pos = abs(params.rho) * params.sigma_i * g.y_max / params.sigma_l
            cap = PI_COVER_HEADROOM * (merton_pos + hedge_pos)
        return c_max, pi_max, min(pi_max, cap)


@dataclass(frozen=True)
class HamiltonianArgs:
    y: float
    q1: float
    q2: float
    Q11: float
    Q12: float
    Q22: float


def hamiltonian_closed(args: HamiltonianArgs, params: MarketParams,
                       utility: UtilityPower | None = None) -> tuple[float, float, float]:
    """Closed-form sup over (c, pi) of the controlled generator plus utility.

    Finite only for q1 > 0 and Q11 < 0:
        Utilde(q1) - (b_l q1 + rho sig_l sig_i y Q12)^2 / (2 sig_l^2 Q11)
        + (rho b_l sig_i / sig_l) y q2 + (rho^2 sig_i^2 / 2) y^2 Q22.
    Returns (value, c_star, pi_star).
    """
    if args.q1 <= 0.0 or args.Q11 >= 0.0:
        raise DegenerateJet(f"need q1 > 0 and Q11 < 0, got q1={args.q1}, Q11={args.Q11}")
    util = utility or UtilityPower(p=params.p, u_scale=params.u_scale)
    conj, c_star = util.conjugate(args.q1)
    num = params.b_l * args.q1 + params.rho * params.sigma_l * params.sigma_i * args.y * args.Q12
    pi_star = -num / (params.sigma_l ** 2 * args.Q11)
    value = (conj
             - num ** 2 / (2.0 * params.sigma_l ** 2 * args.Q11)
             + params.rho * params.b_l * params.sigma_i / params.sigma_l * args.y * args.q2
             + 0.5 * params.rho ** 2 * params.sigma_i ** 2 * args.y ** 2 * args.Q22)
    return value, c_star, pi_star


def boundary_x0(vn: RadialField, params: MarketParams, grid: GridSpec,
                t: float, y: float, rule: QuadratureRule | None = None,
                consts: DerivedConstants | None = None) -> float:
    """Dirichlet value at (t, 0, y) for the current iterate.

    lam * int_t^T exp(-(beta+lam)(s-t)) E[V_n(Y_s^{t,y} J'_s)] ds with the
    product of the two lognormals collapsed into one; Simpson over the layer
    times beyond t, Gauss-Hermite for the inner expectation.
    """
    consts = consts or derive_constants(params)
    rule = rule or gauss_hermite()
    profile = boundary_profile(vn, params, grid, rule, consts,
                               ts=np.array([t]), ys=np.array([y]))
    return float(profile[0, 0])


def boundary_profile(vn: RadialField, params: MarketParams, grid: GridSpec,
                     rule: QuadratureRule, consts: DerivedConstants,
                     ts: np.ndarray | None = None,
                     ys: np.ndarray | None = None,
                     terminal_x0: np.ndarray | None = None) -> np.ndarray:
    """Tabulate the x = 0 boundary integral on (ts, ys); shape (n_t, n_y).

    The s-integral for the layer at t uses the lattice times in [t, T]; the
    inner expectation is one Gauss-Hermite sum against the composite
    lognormal with log-mean (drift_y - vol_y^2/2)(s-t) + (drift_j - vol_j^2/2)s
    and log-variance vol_y^2 (s-t) + vol_j^2 s.
    """
    ts = grid.ts if ts is None else np.asarray(ts, dtype=float)
    ys = grid.ys if ys is None else np.asarray(ys, dtype=float)
    t_end = grid.t_max
    disc = params.beta + params.lam
    out = np.zeros((len(ts), len(ys)))
    mu_y = consts.drift_y - 0.5 * consts.vol_y ** 2
    mu_j = consts.drift_j - 0.5 * consts.vol_j ** 2
    for k, t in enumerate(ts):
        s_pts = np.unique(np.concatenate([[t], grid.ts[grid.ts > t], [t_end]]))
        if len(s_pts) < 2:
            s_pts = np.array([t, t_end])
        if s_pts[-1] - s_pts[0] <= 0:
            out[k] = 0.0
            continue
        mu = mu_y * (s_pts - t) + mu_j * s_pts                       # (s,)
        sig = np.sqrt(consts.vol_y ** 2 * (s_pts - t) + consts.vol_j ** 2 * s_pts)
        factors = np.exp(mu[:, None] + sig[:, None] * rule.nodes)    # (s, q)
        args = ys[None, :, None] * factors[:, None, :]               # (s, y, q)
        inner = interp1(vn, args) @ rule.weights                     # (s, y)
        integrand = params.lam * np.exp(-disc * (s_pts - t))[:, None] * inner
        out[k] = simpson(integrand, x=s_pts, axis=0)
    if terminal_x0 is not None:
        # e^{-(beta+lam)(T-t)} E[phi(0, Y_T^{t,y})]
        for k, t in enumerate(ts):
            sig = abs(consts.vol_y) * math.sqrt(max(t_end - t, 0.0))
            factors = np.exp((mu_y * (t_end - t)) + sig * rule.nodes)  # (q,)
            yv = ys[:, None] * factors[None, :]
            phi = np.interp(yv, grid.ys, terminal_x0)
            out[k] += math.exp(-disc * (t_end - t)) * (phi @ rule.weights)
    return out


def cfl_step(params: MarketParams, consts: DerivedConstants, cfg: SolverConfig) -> float:
    """Largest stable explicit step for the worst node/control combination."""
    g = cfg.grid
    c_max, _, pi_eff = cfg.resolved_caps(params)
    dx, dy = g.dx, g.dy
    denom = (params.beta + params.lam
             + c_max / dx
             + pi_eff * abs(params.b_l) / dx
             + params.sigma_l ** 2 * pi_eff ** 2 / dx ** 2
             + abs(consts.drift_y) * g.y_max / dy
             + consts.vol_y ** 2 * g.y_max ** 2 / dy ** 2
             + pi_eff * abs(params.rho) * params.sigma_i * params.sigma_l * g.y_max / (dx * dy))
    return cfg.cfl_safety / denom


def solve_stage(source: ValueField, vn: RadialField, params: MarketParams,
                cfg: SolverConfig) -> ValueField:
    """Solve one finite-horizon stage backward from t = T to t = 0.

    ``source`` must hold lam * G[V_n] on the same lattice; ``vn`` supplies
    the x = 0 Dirichlet boundary.  Returns the stage value on the lattice.
    """
    g = cfg.grid
    if source.grid != g:
        raise ValueError("source field lattice differs from solver grid")
    consts = derive_constants(params)
    c_max, _, pi_eff = cfg.resolved_caps(params)
    rule = gauss_hermite(cfg.quad_order)

    dt_stable = cfl_step(params, consts, cfg)
    n_sub = max(1, math.ceil(g.dt / dt_stable))
    total = n_sub * (g.n_t - 1)
    if total > cfg.max_substeps:
        raise CflUnsatisfiable(
            f"{total} sub-steps needed (cap {cfg.max_substeps}); "
            f"coarsen the grid or lower the position cap")

    k_hat = merton_value(params, constrained=True)
    env_base = k_hat * np.add.outer(g.xs, g.ys) ** params.p

    terminal = np.zeros((g.n_x, g.n_y)) if cfg.terminal is None else np.asarray(cfg.terminal, dtype=float)
    bnd = boundary_profile(vn, params, g, rule, consts,
                           terminal_x0=None if cfg.terminal is None else terminal[0])

    c_vals = np.linspace(0.0, c_max, cfg.n_c)
    util = UtilityPower(p=params.p, u_scale=params.u_scale)
    c_utils = util.u(c_vals)
    pi_vals = np.linspace(-pi_eff, pi_eff, cfg.n_pi)
    # admissible consumption window of the central variant per grid position:
    # |pi b_l - c| <= sig_l^2 pi^2 / dx keeps both x-neighbor weights >= 0
    budget = params.sigma_l ** 2 * pi_vals ** 2 / g.dx
    pi_clo = np.maximum(pi_vals * params.b_l - budget, 0.0)
    pi_chi = np.clip(pi_vals * params.b_l + budget, 0.0, c_max)
    pi_clo = np.minimum(pi_clo, pi_chi)
    pi_ulo = util.u(pi_clo)
    pi_uhi = util.u(pi_chi)
    # slope thresholds: the window conjugate clamps to an edge c_e once the
    # slope passes U'(c_e); U'(0) = +inf
    with np.errstate(divide="ignore"):
        pi_slo = np.where(pi_clo > 0, params.u_scale * params.p * pi_clo ** (params.p - 1.0), np.inf)
        pi_shi = np.where(pi_chi > 0, params.u_scale * params.p * pi_chi ** (params.p - 1.0), np.inf)
    # backward-slope fitting factors, exact on x**p profiles; -> 1 away from 0
    idx = np.arange(g.n_x, dtype=float)
    alpha_fit = np.ones(g.n_x)
    alpha_fit[1:] = params.p * idx[1:] ** (params.p - 1.0) \
        / (idx[1:] ** params.p - idx[:-1] ** params.p)

    # ghost multipliers: continuation along ((x + y + h)/(x + y))**p
    gx = ((g.x_max + g.dx + g.ys) / (g.x_max + g.ys)) ** params.p
    gy = ((g.xs + g.y_max + g.dy) / (g.xs + g.y_max)) ** params.p
    g_corner = ((g.x_max + g.dx + g.y_max + g.dy) / (g.x_max + g.y_max)) ** params.p

    out = np.empty((g.n_t, g.n_x, g.n_y))
    out[-1] = terminal
    out[-1, 0, :] = bnd[-1]

    ve_a = np.zeros((g.n_x + 1, g.n_y + 1))
    ve_b = np.zeros((g.n_x + 1, g.n_y + 1))
    t0 = time.perf_counter()
    for k in range(g.n_t - 2, -1, -1):
        ve_a[:g.n_x, :g.n_y] = out[k + 1]
        which = _kernels.march_layer(
            ve_a, ve_b, source.values[k], source.values[k + 1],
            bnd[k], bnd[k + 1], g.dt, n_sub, g.ys, g.dx, g.dy,
            params.beta + params.lam, params.b_l, params.sigma_l, params.rho,
            params.sigma_i, consts.drift_y, consts.vol_y, params.u_scale,
            params.p, c_vals, c_utils, pi_vals, pi_clo, pi_chi, pi_ulo,
            pi_uhi, pi_slo, pi_shi, alpha_fit, env_base, consts.k_tilde_p,
            g.ts[k], gx, gy, g_corner)
        res = ve_b if which == 1 else ve_a
        out[k] = res[:g.n_x, :g.n_y]
        if not np.all(np.isfinite(out[k])):
            raise NonFiniteValue(f"non-finite nodes in layer {k}")
    log.info("stage solve: layers=%d substeps_per_layer=%d dt=%.3e wall=%.2fs "
             "max_update=%.3e boundary_t0_max=%.4f",
             g.n_t - 1, n_sub, g.dt / n_sub, time.perf_counter() - t0,
             float(np.max(np.abs(out[0] - out[1]))), float(bnd[0].max()))
    return ValueField(grid=g, values=out, envelope_exponent=params.p)
