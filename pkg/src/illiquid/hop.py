"""Wealth-split maximization: sup over a in [0, r] of vhat(0, r - a, a).

The maximizer is the time-0 allocation to the illiquid asset.  A coarse scan
guards against numerically perturbed fields; golden-section refinement around
the best scan point resolves the maximizer (the slice is concave along the
segment for true iterates, so the refinement is valid there).  Ties break at
the smallest a.
"""

from __future__ import annotations

import numpy as np

from .lattice import GridSpec, RadialField, interp2_values

_INVPHI = (np.sqrt(5.0) - 1.0) / 2.0

COARSE_POINTS = 64
GOLDEN_TOL = 1e-7


def _segment_values(vhat0: np.ndarray, grid: GridSpec, r, a, p: float) -> np.ndarray:
    return interp2_values(vhat0, grid, r - a, a, p)


def h_apply(vhat0: np.ndarray, grid: GridSpec, r: float, p: float) -> tuple[float, float]:
    """Maximize the time-0 slice over the segment {(r-a, a): 0 <= a <= r}.

    Returns (value, a_star).
    """
    value, a_star = h_field(vhat0, grid, np.array([float(r)]), p)
    return float(value.values[0]), float(a_star[0])


def h_field(vhat0: np.ndarray, grid: GridSpec, rs: np.ndarray, p: float,
            coarse: int = COARSE_POINTS) -> tuple[RadialField, np.ndarray]:
    """Apply the split maximization at each r node, all nodes at once.

    Returns the maximized radial field and the allocation profile a_star(r).
    """
    rs = np.asarray(rs, dtype=float)
    n = len(rs)
    # coarse scan: fractions of r so that r = 0 degenerates to a = 0
    fracs = np.linspace(0.0, 1.0, coarse)
    avals = rs[:, None] * fracs[None, :]                       # (n, coarse)
    vals = _segment_values(vhat0, grid, rs[:, None], avals, p)
    best = np.argmax(vals, axis=1)
    # ties at the smallest a: argmax already returns the first maximum
    step = rs / (coarse - 1)
    lo = np.maximum(avals[np.arange(n), best] - step, 0.0)
    hi = np.minimum(avals[np.arange(n), best] + step, rs)

    # vectorized golden-section on [lo, hi] per node
    c = hi - _INVPHI * (hi - lo)
    d = lo + _INVPHI * (hi - lo)
    fc = _segment_values(vhat0, grid, rs, c, p)
    fd = _segment_values(vhat0, grid, rs, d, p)
    span = float(np.max(hi - lo, initial=0.0))
    n_iter = 0 if span <= 0 else int(np.ceil(np.log(max(GOLDEN_TOL / max(span, GOLDEN_TOL), 1e-300))
                                             / np.log(_INVPHI)))
    for _ in range(max(n_iter, 0)):
        take_c = fc >= fd          # >= keeps the left interval on ties (smallest a)
        hi = np.where(take_c, d, hi)
        lo = np.where(take_c, lo, c)
        c_new = hi - _INVPHI * (hi - lo)
        d_new = lo + _INVPHI * (hi - lo)
        fc_new = np.where(take_c, _segment_values(vhat0, grid, rs, c_new, p), fd)
        fd_new = np.where(take_c, fc, _segment_values(vhat0, grid, rs, d_new, p))
        c, d, fc, fd = c_new, d_new, fc_new, fd_new

    a_ref = np.where(fc >= fd, c, d)
    v_ref = np.maximum(fc, fd)
    # keep whichever of (scan best, refined) is larger; prefer smaller a on ties
    a_scan = avals[np.arange(n), best]
    v_scan = vals[np.arange(n), best]
    better = v_ref > v_scan + 0.0
    a_star = np.where(better, a_ref, np.where(v_scan > v_ref, a_scan, np.minimum(a_ref, a_scan)))
    value = np.maximum(v_ref, v_scan)
    fld = RadialField(rs=rs, values=value, envelope_exponent=p)
    return fld, a_star
