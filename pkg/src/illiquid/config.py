"""Flat key = value experiment configuration.

One section prefix per subsystem: market.*, grid.*, solver.*, iter.*, mc.*.
Unknown keys are errors, values are parsed by the type of the documented
default.  The shipped defaults reproduce the reference parameter set
(beta=0.2, p=0.5, b_l=0.15, sigma_l=1, b_i=0.2, sigma_i=1).
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

from .driver import IterationConfig
from .hjb import SolverConfig
from .lattice import GridSpec
from .mc import PathConfig
from .model import MarketParams


class ConfigError(Exception):
    pass


_MARKET_KEYS = {
    "b_l": 0.15, "sigma_l": 1.0, "b_i": 0.2, "sigma_i": 1.0, "rho": 0.0,
    "lambda": 1.0, "beta": 0.2, "p": 0.5, "u_scale": 1.0,
}
_GRID_KEYS = {
    "t_max": 12.0, "n_t": 50, "x_max": 3.0, "y_max": 3.0, "n_x": 50,
    "n_y": 50, "r_max": None, "n_r": None,
}
_SOLVER_KEYS = {
    "c_max": None, "pi_max": None, "n_c": 9, "n_pi": 13, "cfl_safety": 0.9,
    "quad_order": 32, "pi_cfl_cap": None, "max_substeps": 2_000_000,
}
_ITER_KEYS = {
    "tol_rel": 1e-2, "n_max": 4000, "t_policy": "auto", "t_fixed": None,
    "stop_rule": "residual", "horizon_safety": 10.0,
    "account_contraction": True, "adapt_layers": True,
}
_MC_KEYS = {
    "n_paths": 100_000, "horizon": 35.0, "dt": 0.005, "seed": 20240901,
    "antithetic": True,
}

_SECTIONS = {
    "market": _MARKET_KEYS, "grid": _GRID_KEYS, "solver": _SOLVER_KEYS,
    "iter": _ITER_KEYS, "mc": _MC_KEYS,
}


@dataclass
class AppConfig:
    market: MarketParams
    grid: GridSpec
    solver: SolverConfig
    iteration: IterationConfig
    mc: PathConfig


def _parse_value(raw: str, default):
    raw = raw.strip()
    if raw.lower() in ("none", "null"):
        return None
    if isinstance(default, bool):
        if raw.lower() in ("true", "1", "yes"):
            return True
        if raw.lower() in ("false", "0", "no"):
            return False
        raise ConfigError(f"expected boolean, got {raw!r}")
    if isinstance(default, int) and not isinstance(default, bool):
        return int(raw)
    if isinstance(default, float) or default is None:
        try:
            return float(raw)
        except ValueError:
            return raw
    if isinstance(default, str) or default is None:
        return raw
    raise ConfigError(f"cannot parse {raw!r}")


def parse_config_text(text: str) -> dict[str, dict]:
    values = {name: dict(defaults) for name, defaults in _SECTIONS.items()}
    errors = []
    for lineno, line in enumerate(text.splitlines(), 1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            errors.append(f"line {lineno}: expected 'section.key = value'")
            continue
        key, _, raw = stripped.partition("=")
        key = key.strip()
        section, _, name = key.partition(".")
        if section not in _SECTIONS or name not in _SECTIONS[section]:
            errors.append(f"line {lineno}: unknown key {key!r}")
            continue
        try:
            values[section][name] = _parse_value(raw, _SECTIONS[section][name])
        except (ConfigError, ValueError) as exc:
            errors.append(f"line {lineno}: {exc}")
    if errors:
        raise ConfigError("; ".join(errors))
    return values


def build_config(values: dict[str, dict]) -> AppConfig:
    m = values["market"]
    try:
        market = MarketParams(
            b_l=m["b_l"], sigma_l=m["sigma_l"], b_i=m["b_i"],
            sigma_i=m["sigma_i"], rho=m["rho"], lam=m["lambda"],
            beta=m["beta"], p=m["p"], u_scale=m["u_scale"])
        g = values["grid"]
        grid = GridSpec(t_max=g["t_max"], n_t=int(g["n_t"]), x_max=g["x_max"],
                        y_max=g["y_max"], n_x=int(g["n_x"]), n_y=int(g["n_y"]),
                        r_max=g["r_max"],
                        n_r=None if g["n_r"] is None else int(g["n_r"]))
        s = values["solver"]
        solver = SolverConfig(grid=grid, c_max=s["c_max"], pi_max=s["pi_max"],
                              n_c=int(s["n_c"]), n_pi=int(s["n_pi"]),
                              cfl_safety=s["cfl_safety"],
                              quad_order=int(s["quad_order"]),
                              pi_cfl_cap=s["pi_cfl_cap"],
                              max_substeps=int(s["max_substeps"]))
        i = values["iter"]
        iteration = IterationConfig(
            tol_rel=i["tol_rel"], n_max=int(i["n_max"]), t_policy=i["t_policy"],
            t_fixed=i["t_fixed"], stop_rule=i["stop_rule"],
            horizon_safety=i["horizon_safety"],
            account_contraction=bool(i["account_contraction"]),
            adapt_layers=bool(i["adapt_layers"]))
        c = values["mc"]
        mc = PathConfig(n_paths=int(c["n_paths"]), horizon=c["horizon"],
                        dt=c["dt"], seed=int(c["seed"]),
                        antithetic=bool(c["antithetic"]))
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    return AppConfig(market=market, grid=grid, solver=solver,
                     iteration=iteration, mc=mc)


def load_config(path: str | Path | None) -> AppConfig:
    """Parse a config file; None gives the shipped defaults."""
    text = Path(path).read_text() if path is not None else ""
    return build_config(parse_config_text(text))


def default_config_text() -> str:
    lines = ["# flat key = value configuration; all keys optional"]
    for section, keys in _SECTIONS.items():
        for name, default in keys.items():
            lines.append(f"{section}.{name} = {default}")
    return "\n".join(lines) + "\n"
