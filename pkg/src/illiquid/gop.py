"""The nonlocal averaging operator that couples the two value functions.

``g_point`` evaluates E[psi(x + y * J_t)] where J is a geometric Brownian
factor started at 1 at time 0, by Gauss-Hermite quadrature against the
standard normal law: J_t = exp((mu - v^2/2) t + v sqrt(t) xi).  ``g_field``
tabulates it over a whole lattice; the absolute time of the lattice layer is
the time argument of J (the reduced problem is not autonomous).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.polynomial.hermite_e import hermegauss

from .lattice import GridSpec, RadialField, ValueField, interp1
from .model import DerivedConstants


@dataclass(frozen=True)
class JLaw:
    drift: float
    vol: float

    @staticmethod
    def from_constants(consts: DerivedConstants) -> "JLaw":
        return JLaw(drift=consts.drift_j, vol=consts.vol_j)

    def mean(self, t: float) -> float:
        return float(np.exp(self.drift * t))

    def samples(self, t: float, xi: np.ndarray) -> np.ndarray:
        """Lognormal values of J_t at standard-normal abscissae xi."""
        if t == 0.0 or self.vol == 0.0:
            return np.exp(self.drift * t) * np.ones_like(xi)
        return np.exp((self.drift - 0.5 * self.vol ** 2) * t + self.vol * np.sqrt(t) * xi)


@dataclass(frozen=True)
class QuadratureRule:
    """Nodes and weights for integrals against the standard normal density."""

    nodes: np.ndarray
    weights: np.ndarray

    @property
    def order(self) -> int:
        return len(self.nodes)


def gauss_hermite(order: int = 32) -> QuadratureRule:
    nodes, weights = hermegauss(order)
    return QuadratureRule(nodes=nodes, weights=weights / weights.sum())


def g_point(psi: RadialField, law: JLaw, rule: QuadratureRule,
            t: float, x: float, y: float) -> float:
    """E[psi(x + y J_t)] by quadrature; exact degenerate cases at y=0 and t=0."""
    if y == 0.0 or t == 0.0:
        return float(interp1(psi, x + y))
    args = x + y * law.samples(t, rule.nodes)
    return float(rule.weights @ interp1(psi, args))


def g_field(psi: RadialField, law: JLaw, rule: QuadratureRule, grid: GridSpec) -> ValueField:
    """Tabulate g_point over every (t, x, y) lattice node."""
    xs, ys, ts = grid.xs, grid.ys, grid.ts
    out = np.empty((grid.n_t, grid.n_x, grid.n_y))
    for k, t in enumerate(ts):
        if t == 0.0:
            out[k] = interp1(psi, xs[:, None] + ys[None, :])
            continue
        jvals = law.samples(t, rule.nodes)                       # (q,)
        args = xs[:, None, None] + ys[None, :, None] * jvals     # (n_x, n_y, q)
        out[k] = interp1(psi, args) @ rule.weights
    return ValueField(grid=grid, values=out, envelope_exponent=psi.envelope_exponent)
