"""Run configuration: ``key = value`` lines grouped in ``[section]`` blocks.

Sections and keys (defaults in :data:`DEFAULTS`)::

    [grid]     nx, nz, Lx, h
    [physics]  nu, g | potential (path to an IINS snapshot holding f), gamma, beta, bc
    [profile]  kind = linear | exponential | unstable-step, alpha1, alpha2, delta0,
               interface, thickness
    [init]     kind = rest | mode | streamfunction, amplitude, rho_amplitude, k, n
               (k = 0 with kind = mode picks the most unstable scanned wavenumber)
    [time]     cfl, t_end, dt_max, viscous = explicit | cn, limiter
    [io]       sample_every, snapshot_every, outdir
    [poisson]  tol, max_iter, tol_div

:func:`dumps` writes every key in a fixed order, so ``loads(dumps(c)) == c``
and ``dumps(loads(dumps(c))) == dumps(c)``.
"""
from __future__ import annotations

import configparser
import copy
import os

SECTIONS = ("grid", "physics", "profile", "init", "time", "io", "poisson")

DEFAULTS = {
    "grid": {"nx": 64, "nz": 32, "Lx": 6.283185307179586, "h": 1.0},
    "physics": {"nu": 0.01, "g": 1.0, "potential": "", "gamma": 1.0, "beta": 2.0, "bc": "free-slip"},
    "profile": {"kind": "linear", "alpha1": 1.0, "alpha2": 2.0, "delta0": 1.0,
                "interface": 0.5, "thickness": 0.05},
    "init": {"kind": "rest", "amplitude": 0.0, "rho_amplitude": 0.0, "k": 1.0, "n": 1},
    "time": {"cfl": 0.5, "t_end": 1.0, "dt_max": 0.01, "viscous": "explicit", "limiter": "minmod"},
    "io": {"sample_every": 10, "snapshot_every": 0, "outdir": "out"},
    "poisson": {"tol": 1e-10, "max_iter": 10000, "tol_div": 1e-8},
}

CHOICES = {
    ("physics", "bc"): ("no-slip", "free-slip"),
    ("profile", "kind"): ("linear", "exponential", "unstable-step"),
    ("init", "kind"): ("rest", "mode", "streamfunction"),
    ("time", "viscous"): ("explicit", "cn"),
    ("time", "limiter"): ("minmod", "superbee"),
}


class ConfigError(ValueError):
    pass


def default_config():
    return copy.deepcopy(DEFAULTS)


def _coerce(section, key, raw):
    proto = DEFAULTS[section][key]
    try:
        if isinstance(proto, bool):
            return raw.strip().lower() in ("1", "true", "yes", "on")
        if isinstance(proto, int):
            return int(raw)
        if isinstance(proto, float):
            return float(raw)
    except ValueError:
        raise ConfigError(f"[{section}] {key} = {raw!r} is not a number") from None
    return raw.strip()


def validate(cfg):
    for (sec, key), allowed in CHOICES.items():
        if cfg[sec][key] not in allowed:
            raise ConfigError(f"[{sec}] {key} must be one of {allowed}, got {cfg[sec][key]!r}")
    if cfg["physics"]["nu"] <= 0:
        raise ConfigError("[physics] nu must be positive")
    if not 0 < cfg["time"]["cfl"] <= 1:
        raise ConfigError("[time] cfl must lie in (0, 1]")
    if cfg["grid"]["nx"] < 4 or cfg["grid"]["nz"] < 4:
        raise ConfigError("[grid] nx and nz must be >= 4")
    return cfg


def loads(text, base=None):
    """Parse configuration text on top of ``base`` (defaults when omitted)."""
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(str(exc)) from None
    cfg = copy.deepcopy(base) if base is not None else default_config()
    for sec in parser.sections():
        if sec not in DEFAULTS:
            raise ConfigError(f"unknown section [{sec}]")
        for key, raw in parser.items(sec):
            if key not in DEFAULTS[sec]:
                raise ConfigError(f"unknown key {key!r} in [{sec}]")
            cfg[sec][key] = _coerce(sec, key, raw)
    return validate(cfg)


def load(path):
    with open(path) as fh:
        return loads(fh.read())


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return str(v)


def dumps(cfg):
    lines = []
    for sec in SECTIONS:
        lines.append(f"[{sec}]")
        for key in DEFAULTS[sec]:
            lines.append(f"{key} = {_fmt(cfg[sec][key])}")
        lines.append("")
    return "\n".join(lines)


def dump(cfg, path):
    with open(path, "w") as fh:
        fh.write(dumps(cfg))


def apply_env(cfg, environ=None):
    """``IINS_OUTDIR`` overrides ``[io] outdir``."""
    env = os.environ if environ is None else environ
    cfg = copy.deepcopy(cfg)
    if env.get("IINS_OUTDIR"):
        cfg["io"]["outdir"] = env["IINS_OUTDIR"]
    return cfg
