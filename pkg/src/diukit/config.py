"""INI-style experiment configuration with a fixed schema.

Every section and key is declared below with a parser and a default, so
unknown keys are rejected (with their line number) and the fully resolved
configuration, defaults included, can be written into a run manifest.
"""

from __future__ import annotations

import configparser
import json
import re
from dataclasses import fields
from pathlib import Path
from typing import Any, Callable

from .model import PARAM_NAMES, UltradianParams


class ConfigError(ValueError):
    pass


def _floats(raw: str) -> list[float]:
    items = [x.strip() for x in str(raw).replace(";", ",").split(",") if x.strip()]
    if not items:
        raise ValueError("empty list")
    return [float(x) for x in items]


def _bool(raw: str) -> bool:
    v = str(raw).strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {raw!r}")


_DEFAULT_PARAMS = UltradianParams()

# section -> key -> (parser, default)
SCHEMA: dict[str, dict[str, tuple[Callable[[str], Any], Any]]] = {
    "model": {f.name: (float, getattr(_DEFAULT_PARAMS, f.name)) for f in fields(UltradianParams)},
    "forcing": {
        "kind": (str, "periodic"),
        "A": (float, 10.0),
        "T": (float, 20.0),
        "lo": (float, 45.0),
        "hi": (float, 55.0),
        "n": (int, 0),  # 0: derived from the run length
    },
    "lyapunov": {
        "d0": (float, 1e-8),
        "cycles": (int, 1000),
        "burn_in": (int, 100),
        "realizations": (int, 100),
        "seed": (int, 0),
        "batches": (int, 20),
    },
    "integrator": {
        "rtol": (float, 1e-8),
        "atol": (float, 1e-10),
        "h0": (float, 0.1),
        "hmax": (float, 2.0),
        "max_steps": (int, 10_000_000),
        "method": (str, "dopri5"),
    },
    "output": {
        "dir": (str, "out"),
    },
    "simulate": {
        "horizon": (float, 1000.0),
        "sample_dt": (float, 1.0),
        "initial": (str, "default"),
    },
    "sweep": {
        "A_values": (_floats, [50.0]),
        "T_values": (_floats, [10.0, 20.0, 50.0, 100.0, 200.0]),
        "width": (float, 0.0),
    },
    "hopf": {
        "td_values": (_floats, [2.0, 8.0, 12.0, 20.0]),
        "transient": (float, 5000.0),
        "window": (float, 2000.0),
        "threshold": (float, 1.0),
    },
    "dde": {
        "lam": (float, 0.1),
        "sigma": (float, 3.0),
        "A": (float, 0.1),
        "taus": (_floats, [0.5]),
        "Ts": (_floats, [5.0, 20.0, 50.0, 100.0]),
        "m": (int, 64),
        "zero_band": (float, 1e-3),
    },
    "attractor": {
        "burn_in": (int, 100),
        "keep": (int, 1000),
        "initial": (str, "default"),
    },
    "hist": {
        "horizon": (float, 30000.0),
        "burn_in": (float, 5000.0),
        "bins": (int, 100),
        "sample_dt": (float, 1.0),
        "bandwidth": (float, 2.0),
        "prominence": (float, 0.05),
        "initial": (str, "default"),
    },
}

FORCING_KINDS = ("periodic", "poisson", "uniform", "meal", "none")
INITIAL_KINDS = ("default", "reference")


def defaults() -> dict[str, dict[str, Any]]:
    return {sec: {k: (list(v) if isinstance(v, list) else v) for k, (_, v) in keys.items()}
            for sec, keys in SCHEMA.items()}


def _key_lines(text: str) -> dict[tuple[str, str], int]:
    lines: dict[tuple[str, str], int] = {}
    section = None
    for no, line in enumerate(text.splitlines(), start=1):
        s = line.strip()
        m = re.match(r"^\[([^\]]+)\]$", s)
        if m:
            section = m.group(1).strip()
            lines.setdefault((section, ""), no)
            continue
        m = re.match(r"^([^=:#;\s][^=:]*?)\s*[=:]", s)
        if m and section is not None:
            lines.setdefault((section, m.group(1).strip()), no)
    return lines


def parse_config_text(text: str, source: str = "<config>") -> dict[str, dict[str, Any]]:
    """Parse INI text into a fully resolved config (defaults filled in)."""
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str
    try:
        cp.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigError(f"{source}: {exc}") from None
    lines = _key_lines(text)
    cfg = defaults()
    for section in cp.sections():
        where = f"{source}:{lines.get((section, ''), '?')}"
        if section not in SCHEMA:
            raise ConfigError(f"{where}: unknown section [{section}]")
        for key, raw in cp.items(section):
            where = f"{source}:{lines.get((section, key), '?')}"
            if key not in SCHEMA[section]:
                raise ConfigError(f"{where}: unknown key {key!r} in section [{section}]")
            parser = SCHEMA[section][key][0]
            try:
                cfg[section][key] = parser(raw)
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"{where}: [{section}] {key} = {raw!r}: {exc}") from None
    validate(cfg)
    return cfg


def _check(cond: bool, section: str, msg: str):
    if not cond:
        raise ConfigError(f"[{section}] {msg}")


def validate(cfg: dict[str, dict[str, Any]]) -> None:
    """Check values against the preconditions of the operations they feed."""
    try:
        UltradianParams(**{k: float(cfg["model"][k]) for k in PARAM_NAMES})
    except ValueError as exc:
        raise ConfigError(f"[model] {exc}") from None
    f = cfg["forcing"]
    _check(f["kind"] in FORCING_KINDS, "forcing", f"kind must be one of {FORCING_KINDS}")
    _check(f["A"] >= 0, "forcing", f"A must be >= 0, got {f['A']}")
    _check(f["T"] > 0, "forcing", f"T must be > 0, got {f['T']}")
    _check(0 <= f["lo"] <= f["hi"], "forcing", f"need 0 <= lo <= hi, got lo={f['lo']}, hi={f['hi']}")
    _check(f["n"] >= 0, "forcing", f"n must be >= 0, got {f['n']}")
    ly = cfg["lyapunov"]
    _check(ly["d0"] > 0, "lyapunov", f"d0 must be > 0, got {ly['d0']}")
    _check(ly["cycles"] >= 1, "lyapunov", f"cycles must be >= 1, got {ly['cycles']}")
    _check(ly["burn_in"] >= 0, "lyapunov", f"burn_in must be >= 0, got {ly['burn_in']}")
    _check(ly["realizations"] >= 1, "lyapunov", "realizations must be >= 1")
    _check(0 <= ly["seed"] < 2**64, "lyapunov", "seed must be a 64-bit unsigned integer")
    _check(ly["batches"] >= 2, "lyapunov", "batches must be >= 2")
    it = cfg["integrator"]
    _check(it["rtol"] > 0 and it["atol"] > 0, "integrator", "tolerances must be > 0")
    _check(it["h0"] > 0 and it["hmax"] > 0, "integrator", "step sizes must be > 0")
    _check(it["max_steps"] >= 1, "integrator", "max_steps must be >= 1")
    _check(it["method"] in ("dopri5", "rosenbrock"), "integrator",
           "method must be dopri5 or rosenbrock")
    s = cfg["simulate"]
    _check(s["horizon"] >= 0, "simulate", "horizon must be >= 0")
    _check(s["sample_dt"] > 0, "simulate", "sample_dt must be > 0")
    _check(s["initial"] in INITIAL_KINDS, "simulate", f"initial must be one of {INITIAL_KINDS}")
    sw = cfg["sweep"]
    _check(all(t > 0 for t in sw["T_values"]), "sweep", "T_values must be > 0")
    _check(all(a >= 0 for a in sw["A_values"]), "sweep", "A_values must be >= 0")
    _check(sw["width"] >= 0, "sweep", "width must be >= 0")
    h = cfg["hopf"]
    _check(all(t > 0 for t in h["td_values"]), "hopf", "td_values must be > 0")
    _check(h["transient"] >= 0, "hopf", "transient must be >= 0")
    _check(h["window"] >= 300, "hopf", "window must cover >= 3 oscillation periods (300 min)")
    d = cfg["dde"]
    _check(d["lam"] > 0, "dde", "lam must be > 0")
    _check(all(t >= 0 for t in d["taus"]), "dde", "taus must be >= 0")
    _check(all(t > 0 for t in d["Ts"]), "dde", "Ts must be > 0")
    _check(d["m"] >= 1, "dde", "m must be >= 1")
    a = cfg["attractor"]
    _check(a["burn_in"] >= 0 and a["keep"] >= 0, "attractor", "burn_in and keep must be >= 0")
    _check(a["initial"] in INITIAL_KINDS, "attractor", f"initial must be one of {INITIAL_KINDS}")
    hi = cfg["hist"]
    _check(hi["bins"] >= 1, "hist", "bins must be >= 1")
    _check(hi["sample_dt"] > 0, "hist", "sample_dt must be > 0")
    _check(hi["horizon"] - hi["burn_in"] >= 100 * hi["sample_dt"], "hist",
           "horizon - burn_in must cover at least 100 sample intervals")
    _check(hi["initial"] in INITIAL_KINDS, "hist", f"initial must be one of {INITIAL_KINDS}")


def load_config(path: str | Path) -> tuple[dict[str, dict[str, Any]], str | None]:
    """Load an INI config, or a run manifest (JSON). Returns (config, command or None)."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    if path.suffix == ".json" or text.lstrip().startswith("{"):
        try:
            man = json.loads(text)
            raw = man["config"]
        except (ValueError, KeyError, TypeError):
            raise ConfigError(f"{path}: not a run manifest") from None
        cfg = defaults()
        for section, values in raw.items():
            if section not in SCHEMA:
                raise ConfigError(f"{path}: unknown section [{section}]")
            for key, v in values.items():
                if key not in SCHEMA[section]:
                    raise ConfigError(f"{path}: unknown key {key!r} in section [{section}]")
                cfg[section][key] = v
        validate(cfg)
        return cfg, man.get("command")
    return parse_config_text(text, str(path)), None


def params_of(cfg) -> UltradianParams:
    return UltradianParams(**{k: float(cfg["model"][k]) for k in PARAM_NAMES})
