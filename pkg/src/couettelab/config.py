"""Flat key=value (INI) run configuration.

Sections: [domain] grid and viscosity, [sim] integration controls,
[ic] initial-condition generator (unknown keys become generator
parameters), [threshold] bisection queries with [ic_params].
"""
from __future__ import annotations

import configparser

from .domain import DomainSpec
from .dns import ICSpec, SimConfig
from .experiments import ThresholdQuery


class ConfigError(ValueError):
    pass


def _parse_scalar(text: str):
    t = text.strip()
    low = t.lower()
    if low in ("true", "false"):
        return low == "true"
    try:
        return int(t)
    except ValueError:
        pass
    try:
        return float(t)
    except ValueError:
        return t


def _read(path: str) -> configparser.ConfigParser:
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    read = cp.read(path)
    if not read:
        raise ConfigError(f"cannot read config file {path!r}")
    return cp


def load_domain(cp: configparser.ConfigParser) -> DomainSpec:
    if "domain" not in cp:
        raise ConfigError("config needs a [domain] section")
    sec = cp["domain"]
    try:
        return DomainSpec(
            nx=sec.getint("nx"),
            ny=sec.getint("ny"),
            nz=sec.getint("nz"),
            Ly=sec.getfloat("Ly", 4.0),
            nu=sec.getfloat("nu"),
        )
    except (TypeError, ValueError) as e:
        raise ConfigError(f"bad [domain] section: {e}") from e


def load_sim_config(path: str, *, seed_override: int | None = None) -> SimConfig:
    cp = _read(path)
    domain = load_domain(cp)
    sim = cp["sim"] if "sim" in cp else {}

    def fval(key, default):
        if key not in sim:
            return default
        return _parse_scalar(sim[key])

    dt_raw = fval("dt", "auto")
    ic_sec = cp["ic"] if "ic" in cp else {}
    known = {"name", "amplitude", "seed"}
    params = {k: _parse_scalar(v) for k, v in ic_sec.items() if k not in known}
    ic = ICSpec(
        name=str(ic_sec.get("name", "zero")),
        amplitude=float(_parse_scalar(ic_sec.get("amplitude", "0"))),
        seed=int(_parse_scalar(ic_sec.get("seed", "0"))),
        params=params,
    )
    if seed_override is not None:
        ic.seed = seed_override
    try:
        return SimConfig(
            domain=domain,
            t_start=float(fval("t_start", 1.0)),
            t_end=float(fval("t_end", 2.0)),
            dt="auto" if dt_raw == "auto" else float(dt_raw),
            cfl=float(fval("cfl", 0.4)),
            record_every=(
                None if fval("record_every", None) is None
                else float(fval("record_every", 0.1))
            ),
            remesh_enabled=bool(fval("remesh", True)),
            linearized=bool(fval("linearized", False)),
            blowup_factor=float(fval("blowup_factor", 1e3)),
            ic=ic,
        )
    except ValueError as e:
        raise ConfigError(str(e)) from e


def load_threshold_query(
    path: str, *, seed_override: int | None = None, threads: int = 1
) -> ThresholdQuery:
    cp = _read(path)
    if "threshold" not in cp:
        raise ConfigError("config needs a [threshold] section")
    sec = cp["threshold"]
    try:
        nu_list = [float(x) for x in sec.get("nu_list", "").split(",") if x.strip()]
    except ValueError as e:
        raise ConfigError(f"bad nu_list: {e}") from e
    if not nu_list:
        raise ConfigError("[threshold] nu_list must list at least one viscosity")
    params = {}
    if "ic_params" in cp:
        params = {k: _parse_scalar(v) for k, v in cp["ic_params"].items()}
    try:
        return ThresholdQuery(
            nu_list=nu_list,
            ic_family=sec.get("ic_family", "random"),
            ic_params=params,
            seed=seed_override if seed_override is not None else sec.getint("seed", 0),
            bisection_tol=sec.getfloat("bisection_tol", 1.2),
            max_runs_per_nu=sec.getint("max_runs_per_nu", 12),
            t_end_policy=sec.getfloat("t_end_policy", 20.0),
            bracket=(
                sec.getfloat("bracket_lo", 0.05),
                sec.getfloat("bracket_hi", 20.0),
            ),
            allow_coarse=sec.getboolean("allow_coarse", False),
            threads=threads,
        )
    except ValueError as e:
        raise ConfigError(str(e)) from e
