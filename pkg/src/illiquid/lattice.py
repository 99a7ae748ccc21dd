"""Grid containers for the value functions, with interpolation and shape checks.

Two kinds of fields: a ``ValueField`` holds a stage function on the uniform
(t, x, y) lattice, a ``RadialField`` holds an iterate on the one-dimensional
wealth grid.  Outside the stored domain both extrapolate along the power
envelope: the value at the clamped boundary point is scaled by
((x + y) / (x_b + y_b))**p, which is exact for pure power fields and keeps
the growth of the extrapolant consistent with the value function's.
"""

from __future__ import annotations

import ast
import io
from dataclasses import dataclass, replace

import numpy as np


@dataclass(frozen=True)
class GridSpec:
    t_max: float = 8.0
    n_t: int = 50
    x_max: float = 3.0
    y_max: float = 3.0
    n_x: int = 50
    n_y: int = 50
    r_max: float | None = None   # default x_max + y_max
    n_r: int | None = None       # default n_x + n_y

    def __post_init__(self):
        if min(self.n_t, self.n_x, self.n_y) < 2:
            raise ValueError("all resolutions must be >= 2")
        if min(self.t_max, self.x_max, self.y_max) <= 0:
            raise ValueError("all extents must be positive")
        if self.r_max is None:
            object.__setattr__(self, "r_max", self.x_max + self.y_max)
        if self.n_r is None:
            object.__setattr__(self, "n_r", self.n_x + self.n_y)
        if self.n_r < 2 or self.r_max <= 0:
            raise ValueError("radial grid must have n_r >= 2 and r_max > 0")

    @property
    def ts(self) -> np.ndarray:
        return np.linspace(0.0, self.t_max, self.n_t)

    @property
    def xs(self) -> np.ndarray:
        return np.linspace(0.0, self.x_max, self.n_x)

    @property
    def ys(self) -> np.ndarray:
        return np.linspace(0.0, self.y_max, self.n_y)

    @property
    def rs(self) -> np.ndarray:
        return np.linspace(0.0, self.r_max, self.n_r)

    @property
    def dt(self) -> float:
        return self.t_max / (self.n_t - 1)

    @property
    def dx(self) -> float:
        return self.x_max / (self.n_x - 1)

    @property
    def dy(self) -> float:
        return self.y_max / (self.n_y - 1)

    def with_(self, **kwargs) -> "GridSpec":
        return replace(self, **kwargs)


@dataclass(frozen=True)
class ValueField:
    """Values on the (t, x, y) lattice, indexed [time layer, x index, y index]."""

    grid: GridSpec
    values: np.ndarray
    envelope_exponent: float = 0.5

    def __post_init__(self):
        expected = (self.grid.n_t, self.grid.n_x, self.grid.n_y)
        if self.values.shape != expected:
            raise ValueError(f"values shape {self.values.shape} != {expected}")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("field contains non-finite entries")
        self.values.setflags(write=False)

    def slice0(self) -> np.ndarray:
        return self.values[0]


@dataclass(frozen=True)
class RadialField:
    """Values on the wealth grid r, with power-envelope extrapolation beyond r_max."""

    rs: np.ndarray
    values: np.ndarray
    envelope_exponent: float = 0.5

    def __post_init__(self):
        if self.rs.shape != self.values.shape or self.rs.ndim != 1:
            raise ValueError("rs and values must be matching 1-D arrays")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("field contains non-finite entries")
        self.rs.setflags(write=False)
        self.values.setflags(write=False)

    @staticmethod
    def zeros(rs: np.ndarray, p: float) -> "RadialField":
        return RadialField(rs=np.asarray(rs, dtype=float), values=np.zeros(len(rs)), envelope_exponent=p)


def interp1(fld: RadialField, r) -> np.ndarray:
    """Piecewise-linear interpolation; envelope (r/r_max)**p beyond the last node."""
    r = np.asarray(r, dtype=float)
    out = np.interp(r, fld.rs, fld.values)
    r_max = fld.rs[-1]
    beyond = r > r_max
    if np.any(beyond):
        out = np.where(beyond, fld.values[-1] * (r / r_max) ** fld.envelope_exponent, out)
    return out


def _bilinear(vals: np.ndarray, xs: np.ndarray, ys: np.ndarray, x, y) -> np.ndarray:
    dx = xs[1] - xs[0]
    dy = ys[1] - ys[0]
    fi = np.clip(x / dx, 0.0, len(xs) - 1.0)
    fj = np.clip(y / dy, 0.0, len(ys) - 1.0)
    i0 = np.minimum(fi.astype(int), len(xs) - 2)
    j0 = np.minimum(fj.astype(int), len(ys) - 2)
    wx = fi - i0
    wy = fj - j0
    return ((1 - wx) * (1 - wy) * vals[i0, j0] + wx * (1 - wy) * vals[i0 + 1, j0]
            + (1 - wx) * wy * vals[i0, j0 + 1] + wx * wy * vals[i0 + 1, j0 + 1])


def interp2(fld: ValueField, t_layer: int, x, y) -> np.ndarray:
    """Bilinear interpolation of one time layer, power envelope outside the box.

    Points with x > x_max or y > y_max are clamped to the boundary and the
    stored value there is scaled by ((x+y)/(x_b+y_b))**p.
    """
    return interp2_values(fld.values[t_layer], fld.grid, x, y, fld.envelope_exponent)


def interp2_values(vals: np.ndarray, grid: GridSpec, x, y, p: float) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    xc = np.minimum(x, grid.x_max)
    yc = np.minimum(y, grid.y_max)
    out = _bilinear(vals, grid.xs, grid.ys, xc, yc)
    outside = (x > grid.x_max) | (y > grid.y_max)
    if np.any(outside):
        s = xc + yc
        scale = np.where(s > 0, ((x + y) / np.where(s > 0, s, 1.0)) ** p, 1.0)
        out = np.where(outside, out * scale, out)
    return out


@dataclass
class ShapeReport:
    worst_monotone_x: float = 0.0
    worst_monotone_y: float = 0.0
    worst_concavity_axis: float = 0.0
    worst_concavity_diag: float = 0.0
    tol: float = 0.0
    passed: bool = True

    def worst(self) -> float:
        return max(self.worst_monotone_x, self.worst_monotone_y,
                   self.worst_concavity_axis, self.worst_concavity_diag)


def shape_check(values: np.ndarray, tol: float) -> ShapeReport:
    """Largest violations of monotonicity and discrete midpoint concavity.

    ``values`` is a 2-D (x, y) slice or a 1-D radial array.  Midpoint
    concavity along a direction d means (v[z-d] + v[z+d])/2 - v[z] <= 0;
    for a field sampling x**2 the worst violation is exactly h**2.
    """
    v = np.asarray(values, dtype=float)
    rep = ShapeReport(tol=tol)
    if v.ndim == 1:
        rep.worst_monotone_x = float(np.maximum(v[:-1] - v[1:], 0.0).max(initial=0.0))
        mid = 0.5 * (v[:-2] + v[2:]) - v[1:-1]
        rep.worst_concavity_axis = float(np.maximum(mid, 0.0).max(initial=0.0))
    else:
        rep.worst_monotone_x = float(np.maximum(v[:-1, :] - v[1:, :], 0.0).max(initial=0.0))
        rep.worst_monotone_y = float(np.maximum(v[:, :-1] - v[:, 1:], 0.0).max(initial=0.0))
        ax_x = 0.5 * (v[:-2, :] + v[2:, :]) - v[1:-1, :]
        ax_y = 0.5 * (v[:, :-2] + v[:, 2:]) - v[:, 1:-1]
        rep.worst_concavity_axis = float(max(np.maximum(ax_x, 0.0).max(initial=0.0),
                                             np.maximum(ax_y, 0.0).max(initial=0.0)))
        d1 = 0.5 * (v[:-2, :-2] + v[2:, 2:]) - v[1:-1, 1:-1]
        d2 = 0.5 * (v[:-2, 2:] + v[2:, :-2]) - v[1:-1, 1:-1]
        rep.worst_concavity_diag = float(max(np.maximum(d1, 0.0).max(initial=0.0),
                                             np.maximum(d2, 0.0).max(initial=0.0)))
    rep.passed = rep.worst() <= tol
    return rep


# --- serialization: text header with key = value lines, then raw float64 payload ---

_MAGIC = b"FIELDv1\n"


def _write_header(fh, kind: str, meta: dict):
    fh.write(_MAGIC)
    fh.write(f"kind = {kind!r}\n".encode())
    for k, v in meta.items():
        fh.write(f"{k} = {v!r}\n".encode())
    fh.write(b"---\n")


def _read_header(fh) -> dict:
    if fh.read(len(_MAGIC)) != _MAGIC:
        raise ValueError("not a field file")
    meta = {}
    while True:
        line = fh.readline().decode()
        if line == "---\n":
            return meta
        if not line:
            raise ValueError("truncated field header")
        k, _, v = line.partition(" = ")
        meta[k.strip()] = ast.literal_eval(v.strip())


def save_field(path, fld) -> None:
    with open(path, "wb") as fh:
        if isinstance(fld, ValueField):
            g = fld.grid
            _write_header(fh, "value", dict(
                t_max=g.t_max, n_t=g.n_t, x_max=g.x_max, y_max=g.y_max,
                n_x=g.n_x, n_y=g.n_y, r_max=g.r_max, n_r=g.n_r,
                p=fld.envelope_exponent))
            fh.write(np.ascontiguousarray(fld.values, dtype="<f8").tobytes())
        elif isinstance(fld, RadialField):
            _write_header(fh, "radial", dict(
                r_max=float(fld.rs[-1]), n_r=len(fld.rs), p=fld.envelope_exponent))
            fh.write(np.ascontiguousarray(fld.values, dtype="<f8").tobytes())
        else:
            raise TypeError(f"cannot serialize {type(fld)}")


def load_field(path):
    with open(path, "rb") as fh:
        meta = _read_header(fh)
        payload = np.frombuffer(fh.read(), dtype="<f8")
    p = meta["p"]
    if meta["kind"] == "value":
        grid = GridSpec(t_max=meta["t_max"], n_t=meta["n_t"], x_max=meta["x_max"],
                        y_max=meta["y_max"], n_x=meta["n_x"], n_y=meta["n_y"],
                        r_max=meta["r_max"], n_r=meta["n_r"])
        vals = payload.reshape(grid.n_t, grid.n_x, grid.n_y).copy()
        return ValueField(grid=grid, values=vals, envelope_exponent=p)
    rs = np.linspace(0.0, meta["r_max"], meta["n_r"])
    return RadialField(rs=rs, values=payload.copy(), envelope_exponent=p)


def radial_to_csv(fld: RadialField, extra: dict | None = None) -> str:
    """CSV text with columns r,value plus optional extra columns."""
    cols = {"r": fld.rs, "value": fld.values}
    if extra:
        cols.update(extra)
    buf = io.StringIO()
    buf.write(",".join(cols) + "\n")
    for row in zip(*cols.values()):
        buf.write(",".join(f"{v:.12g}" for v in row) + "\n")
    return buf.getvalue()
