"""Market parameters, derived growth constants, and Merton benchmarks.

The market has a liquid risky asset (drift ``b_l``, volatility ``sigma_l``),
an illiquid risky asset (``b_i``, ``sigma_i``) observable and tradeable only
at the jumps of a Poisson clock with intensity ``lam``, correlation ``rho``
between the two driving Brownian motions, discount rate ``beta`` and power
utility U(c) = u_scale * c**p.  Everything in this module is closed form.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace


class WellPosednessViolated(Exception):
    """The discount rate does not dominate the Merton growth constant.

    When beta <= k_p the infinite-horizon value may be infinite and the
    fixed-point iteration has no contraction factor.
    """

    def __init__(self, beta: float, k: float):
        super().__init__(f"discount {beta} must exceed growth constant {k}")
        self.beta = beta
        self.k = k


class UnboundedConjugate(Exception):
    """Convex conjugate of the utility requested at a nonpositive slope."""


@dataclass(frozen=True)
class MarketParams:
    b_l: float = 0.15
    sigma_l: float = 1.0
    b_i: float = 0.2
    sigma_i: float = 1.0
    rho: float = 0.0
    lam: float = 1.0
    beta: float = 0.2
    p: float = 0.5
    u_scale: float = 1.0

    def __post_init__(self):
        if self.sigma_l <= 0 or self.sigma_i <= 0:
            raise ValueError("volatilities must be positive")
        if self.lam <= 0:
            raise ValueError("Poisson intensity lam must be positive")
        if self.beta <= 0:
            raise ValueError("discount rate beta must be positive")
        if not -1.0 < self.rho < 1.0:
            raise ValueError("correlation must lie in (-1, 1)")
        if not 0.0 < self.p < 1.0:
            raise ValueError("utility exponent p must lie in (0, 1)")
        if self.u_scale <= 0:
            raise ValueError("u_scale must be positive")

    def with_(self, **kwargs) -> "MarketParams":
        return replace(self, **kwargs)


@dataclass(frozen=True)
class UtilityPower:
    """Power utility U(c) = u_scale * c**p with closed-form conjugate."""

    p: float
    u_scale: float = 1.0

    def u(self, c):
        return self.u_scale * c ** self.p

    def conjugate(self, q: float) -> tuple[float, float]:
        """sup_{c >= 0} (U(c) - c q) together with the maximizing c.

        Finite only for q > 0; the supremum is (1-p) K^{1/(1-p)} (p/q)^{p/(1-p)}
        attained at c* = (K p / q)^{1/(1-p)} for K = u_scale.
        """
        if q <= 0.0:
            raise UnboundedConjugate(f"conjugate is +inf at slope q={q}")
        ip = 1.0 / (1.0 - self.p)
        c_star = (self.u_scale * self.p / q) ** ip
        value = (1.0 - self.p) * self.u_scale ** ip * (self.p / q) ** (self.p * ip)
        return value, c_star


@dataclass(frozen=True)
class DerivedConstants:
    k_tilde_p: float
    k_p: float
    margin: float          # beta - k_p, positive iff well posed
    delta: float           # lam / (lam + beta - k_p)
    drift_j: float         # b_i - rho b_l sigma_i / sigma_l
    vol_j: float           # sigma_i sqrt(1 - rho^2)
    drift_y: float         # rho b_l sigma_i / sigma_l
    vol_y: float           # rho sigma_i


def _clamped_quadratic_max(lin: float, quad: float, lo: float, hi: float) -> tuple[float, float]:
    """Maximize lin*u - quad*u^2 over [lo, hi] (quad >= 0). Returns (value, argmax)."""
    if quad <= 0.0:
        # degenerate to linear; pick the better endpoint, ties at the lower one
        v_lo, v_hi = lin * lo, lin * hi
        return (v_hi, hi) if v_hi > v_lo else (v_lo, lo)
    u = min(max(lin / (2.0 * quad), lo), hi)
    return lin * u - quad * u * u, u


def compute_k_tilde(params: MarketParams) -> float:
    """Growth constant of the illiquid direction.

    sup over u_i in [0,1] of
    p (b_i - rho b_l sigma_i/sigma_l) u_i - p(1-p)/2 sigma_i^2 (1-rho^2) u_i^2.
    """
    value, _ = _clamped_quadratic_max(
        params.p * (params.b_i - params.rho * params.b_l * params.sigma_i / params.sigma_l),
        0.5 * params.p * (1.0 - params.p) * params.sigma_i ** 2 * (1.0 - params.rho ** 2),
        0.0,
        1.0,
    )
    return value


def liquid_growth_constant(params: MarketParams) -> float:
    """p b_l^2 / (2 (1-p) sigma_l^2): the single-liquid-asset Merton constant."""
    return params.p * params.b_l ** 2 / (2.0 * (1.0 - params.p) * params.sigma_l ** 2)


def unconstrained_growth_constant(params: MarketParams) -> float:
    """Two-asset Merton constant p/(2(1-p)) b' Sigma^{-1} b without the [0,1] cap."""
    bl, bi = params.b_l, params.b_i
    sl, si, rho = params.sigma_l, params.sigma_i, params.rho
    det = sl * sl * si * si * (1.0 - rho * rho)
    quad = (bl * bl * si * si - 2.0 * rho * sl * si * bl * bi + bi * bi * sl * sl) / det
    return params.p / (2.0 * (1.0 - params.p)) * quad


def derive_constants(params: MarketParams) -> DerivedConstants:
    """All derived constants; raises WellPosednessViolated when beta <= k_p."""
    k_tilde = compute_k_tilde(params)
    k_p = liquid_growth_constant(params) + k_tilde
    margin = params.beta - k_p
    if margin <= 0.0:
        raise WellPosednessViolated(params.beta, k_p)
    return DerivedConstants(
        k_tilde_p=k_tilde,
        k_p=k_p,
        margin=margin,
        delta=params.lam / (params.lam + margin),
        drift_j=params.b_i - params.rho * params.b_l * params.sigma_i / params.sigma_l,
        vol_j=params.sigma_i * math.sqrt(1.0 - params.rho ** 2),
        drift_y=params.rho * params.b_l * params.sigma_i / params.sigma_l,
        vol_y=params.rho * params.sigma_i,
    )


def merton_fractions(params: MarketParams) -> tuple[float, float]:
    """Optimal (u_l, u_i) fractions of the constrained Merton problem.

    u_i maximizes the k_tilde quadratic clamped to [0, 1]; u_l is the inner
    unconstrained quadratic maximizer given u_i.
    """
    _, u_i = _clamped_quadratic_max(
        params.p * (params.b_i - params.rho * params.b_l * params.sigma_i / params.sigma_l),
        0.5 * params.p * (1.0 - params.p) * params.sigma_i ** 2 * (1.0 - params.rho ** 2),
        0.0,
        1.0,
    )
    u_l = params.b_l / ((1.0 - params.p) * params.sigma_l ** 2) \
        - params.rho * params.sigma_i * u_i / params.sigma_l
    return u_l, u_i


def merton_value(params: MarketParams, constrained: bool = True,
                 discount: float | None = None, growth: float | None = None) -> float:
    """Coefficient M of the Merton value M * r**p.

    M = u_scale * ((1-p)/(discount - k))**(1-p), with k the constrained or
    unconstrained growth constant (overridable through ``growth`` — passing the
    liquid-only constant with discount beta+lam gives the first-iterate value).
    ``discount`` defaults to beta.
    """
    if growth is not None:
        k = growth
    elif constrained:
        k = liquid_growth_constant(params) + compute_k_tilde(params)
    else:
        k = unconstrained_growth_constant(params)
    d = params.beta if discount is None else discount
    if d <= k:
        raise WellPosednessViolated(d, k)
    return params.u_scale * ((1.0 - params.p) / (d - k)) ** (1.0 - params.p)
