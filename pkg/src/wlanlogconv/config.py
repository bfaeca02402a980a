"""Flat ``key = value`` configuration files.

Example::

    # two saturated stations, sigma/t_c = 1/10 and t_s = t_c
    n = 2
    sigma = 10
    t_s = 100
    t_c = 100
    payloads = 8000, 8000
    tau_bar = 1, 1

Blank lines and ``#`` comments are ignored.  List values are comma
separated; a single list value is broadcast to all n stations.
"""

from __future__ import annotations

from pathlib import Path

from .model import WlanParams

PARAM_KEYS = ("n", "sigma", "t_s", "t_c", "payloads", "tau_bar")
PROBLEM_KEYS = ("weights", "fair_alpha")
LIST_KEYS = ("payloads", "tau_bar", "weights")


class ConfigError(ValueError):
    pass


def parse_config(text: str, source: str = "<config>") -> dict:
    values: dict = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {raw.strip()!r}")
        key, _, val = (part.strip() for part in line.partition("="))
        if key not in PARAM_KEYS + PROBLEM_KEYS:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        if key in values:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r}")
        try:
            if key == "n":
                values[key] = int(val)
            elif key in LIST_KEYS:
                values[key] = [float(v) for v in val.split(",")]
            else:
                values[key] = float(val)
        except ValueError:
            raise ConfigError(f"{source}:{lineno}: bad value for {key!r}: {val!r}") from None
    return values


def params_from_values(values: dict) -> WlanParams:
    missing = [k for k in ("n", "sigma", "t_s", "t_c", "payloads") if k not in values]
    if missing:
        raise ConfigError(f"missing required keys: {', '.join(missing)}")
    try:
        return WlanParams(values["n"], values["sigma"], values["t_s"], values["t_c"],
                          values["payloads"], values.get("tau_bar"))
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def load_config(path) -> dict:
    path = Path(path)
    return parse_config(path.read_text(encoding="utf-8"), source=str(path))


def load_params(path) -> WlanParams:
    return params_from_values(load_config(path))
