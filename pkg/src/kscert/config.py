"""Run configuration: one TOML file per experiment.

Layout (every block optional unless the subcommand needs it)::

    seed = 0
    [potential]  kind = "soft_core", d = 1.0, eps = 0.05
    [thermo]     beta = 1.0, nu = 1, z = 0.05        # or rho = ...
    [quad]       abs_tol, rel_tol, max_depth, seed, panel_level, mc_samples, mc_replicates
    [mayer]      n = 2, P = 4, x_min, x_max, points
    [hardrod]    rho = 0.2, d = 1.0, x_min, x_max, points
    [hclimit]    epsilons, x_min, x_max, points, drive, z, rho, P
    [residuals]  suite = ["tonks", ...], configs, z_scale, ...
    [invert]     rho = [0.01, 0.05], P = 4
    [bounds]     n_max = 3, p_max = 4

Unknown keys anywhere are rejected.
"""

from __future__ import annotations

import sys
from dataclasses import dataclass, field
from typing import Optional

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .integrate import QuadSpec
from .potential import PairPotential

__all__ = ["ConfigError", "RunConfig", "load_config", "parse_config", "SUITES"]

SUITES = ("tonks", "ks", "ks_symmetric", "bbgky", "bogolyubov", "groeneveld", "cluster")

_BLOCKS = {
    "seed": None,
    "potential": None,
    "thermo": {"beta", "nu", "z", "rho"},
    "quad": None,
    "mayer": {"n", "P", "x_min", "x_max", "points"},
    "hardrod": {"rho", "d", "x_min", "x_max", "points"},
    "hclimit": {"epsilons", "x_min", "x_max", "points", "drive", "z", "rho", "P", "d", "beta"},
    "residuals": {"suite", "configs", "n", "z_scale", "P", "samples", "fd_step", "m_max", "k_max"},
    "invert": {"rho", "P"},
    "bounds": {"n_max", "p_max"},
}


class ConfigError(ValueError):
    pass


def _check_keys(name, block, allowed):
    if not isinstance(block, dict):
        raise ConfigError(f"[{name}] must be a table")
    extra = set(block) - set(allowed)
    if extra:
        raise ConfigError(f"unknown keys in [{name}]: {sorted(extra)}")


def _positive(name, value):
    if not (isinstance(value, (int, float)) and not isinstance(value, bool) and value > 0):
        raise ConfigError(f"{name} must be a positive number, got {value!r}")
    return value


@dataclass(frozen=True)
class RunConfig:
    seed: int = 0
    potential: Optional[PairPotential] = None
    beta: float = 1.0
    nu: int = 1
    z: Optional[float] = None
    rho: Optional[float] = None
    quad: QuadSpec = QuadSpec()
    blocks: dict = field(default_factory=dict)

    def block(self, name) -> dict:
        return dict(self.blocks.get(name, {}))

    def need_potential(self) -> PairPotential:
        if self.potential is None:
            raise ConfigError("a [potential] block is required")
        return self.potential


def parse_config(data: dict) -> RunConfig:
    extra = set(data) - set(_BLOCKS)
    if extra:
        raise ConfigError(f"unknown top-level keys: {sorted(extra)}")
    for name, allowed in _BLOCKS.items():
        if allowed is not None and name in data:
            _check_keys(name, data[name], allowed)
    seed = data.get("seed", 0)
    if not isinstance(seed, int) or isinstance(seed, bool) or seed < 0:
        raise ConfigError("seed must be a nonnegative integer")
    try:
        pot = PairPotential.from_config(data["potential"]) if "potential" in data else None
        quad = QuadSpec.from_config(dict(data.get("quad", {}), seed=data.get("quad", {}).get("seed", seed)))
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    thermo = data.get("thermo", {})
    beta = _positive("beta", thermo.get("beta", 1.0))
    nu = thermo.get("nu", 1)
    if nu not in (1, 2, 3):
        raise ConfigError("nu must be 1, 2 or 3")
    z = thermo.get("z")
    rho = thermo.get("rho")
    if z is not None and rho is not None:
        raise ConfigError("[thermo] takes either z or rho, not both")
    if z is not None:
        _positive("z", z)
    if rho is not None:
        _positive("rho", rho)
    for name in ("mayer", "hardrod", "hclimit", "residuals", "invert", "bounds"):
        for k, v in data.get(name, {}).items():
            if k in ("x_min", "x_max", "points", "rho", "d", "z", "P", "n", "beta", "n_max", "p_max"):
                if isinstance(v, list):
                    for item in v:
                        _positive(f"{name}.{k}", item)
                else:
                    _positive(f"{name}.{k}", v)
    blocks = {k: v for k, v in data.items() if isinstance(v, dict)}
    return RunConfig(seed, pot, float(beta), int(nu), z, rho, quad, blocks)


def load_config(path) -> RunConfig:
    try:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"malformed TOML: {exc}") from exc
    return parse_config(data)
