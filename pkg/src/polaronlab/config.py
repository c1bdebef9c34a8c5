"""Flat ``key = value`` experiment configuration with one section per subcommand.

Values are parsed from text: comma-separated lists, ``log:lo:hi:count``
grids, fractions like ``1/256``, booleans.  Every subcommand declares its
defaults and validators here so bad input fails before any work starts.
"""
from __future__ import annotations

import configparser
import hashlib
import json
from dataclasses import dataclass
from fractions import Fraction
from typing import Any, Callable

import numpy as np


class ConfigError(ValueError):
    pass


def parse_number(text: str) -> float:
    text = text.strip()
    try:
        return float(text)
    except ValueError:
        pass
    try:
        return float(Fraction(text))
    except (ValueError, ZeroDivisionError) as exc:
        raise ConfigError(f"not a number: {text!r}") from exc


def parse_grid(text: str) -> list[float]:
    """``a,b,c`` or ``log:lo:hi:count`` (log-spaced, endpoints included)."""
    text = text.strip()
    if not text:
        return []
    if text.startswith("log:"):
        parts = text.split(":")
        if len(parts) != 4:
            raise ConfigError(f"bad log grid {text!r}; want log:lo:hi:count")
        lo, hi = parse_number(parts[1]), parse_number(parts[2])
        count = int(parse_number(parts[3]))
        if lo <= 0 or hi <= 0 or count < 1:
            raise ConfigError(f"bad log grid {text!r}")
        return [float(v) for v in np.logspace(np.log10(lo), np.log10(hi), count)]
    return [parse_number(p) for p in text.split(",") if p.strip()]


def parse_bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"not a boolean: {text!r}")


@dataclass(frozen=True)
class Field:
    default: str
    parse: Callable[[str], Any]
    check: Callable[[Any], bool] = lambda v: True
    rule: str = ""


def _int(text):
    v = parse_number(text)
    if v != int(v):
        raise ConfigError(f"not an integer: {text!r}")
    return int(v)


def _pos(v):
    return v > 0


def _all(pred):
    return lambda vs: len(vs) > 0 and all(pred(v) for v in vs)


def _inv_integer(eta):
    return eta > 0 and abs(1 / eta - round(1 / eta)) < 1e-9


SCHEMA: dict[str, dict[str, Field]] = {
    "spectral": {
        "betas": Field("0,2,10,100,1000", parse_grid, _all(lambda b: b >= 0), "non-empty, >= 0"),
        "eta": Field("1/256", parse_number, _inv_integer, "1/eta a positive integer"),
        "tol": Field("5e-3", parse_number, _pos, "> 0"),
        "zero_tol": Field("1e-10", parse_number, _pos, "> 0"),
        "series_tol": Field("1e-10", parse_number, _pos, "> 0"),
    },
    "recursion": {
        "alphas": Field("log:10:1e6:51", parse_grid, _all(lambda a: a >= 2), "non-empty, each >= 2"),
        "ps": Field("0.5,1,1.5", parse_grid, _all(lambda p: 0 < p < 2), "each in (0, 2)"),
        "preset": Field("desk", str, lambda s: s in ("desk", "default", "custom"), "desk | default | custom"),
        "c_decomp": Field("100", parse_number, lambda v: v >= 100, ">= 100"),
        "c_unif": Field("10", parse_number, _pos, "> 0"),
        "c_p": Field("118.2248975828903942", parse_number, _pos, "> 0"),
        "c_stop": Field("4", parse_number, _pos, "> 0"),
        "fit_lo": Field("1e3", parse_number, lambda v: v >= 2, ">= 2"),
        "fit_hi": Field("1e6", parse_number, _pos, "> fit_lo"),
        "slope_tol": Field("0.15", parse_number, _pos, "> 0"),
    },
    "mcmc": {
        "alphas": Field("0,0.5,1,2", parse_grid, _all(lambda a: a >= 0), "non-empty, each >= 0"),
        "T": Field("4", _int, lambda v: v >= 1, ">= 1"),
        "eta": Field("1/32", parse_number, _inv_integer, "1/eta a positive integer"),
        "A": Field("50", parse_number, _pos, "> 0"),
        "p": Field("1", parse_number, lambda v: 0 < v < 2, "in (0, 2)"),
        "d": Field("3", _int, lambda v: v >= 1, ">= 1"),
        "steps": Field("20000", _int, lambda v: v >= 10_000, ">= 1e4"),
        "chains": Field("2", _int, lambda v: v >= 1, ">= 1"),
        "rho": Field("0.2", parse_number, lambda v: 0 < v <= 1, "in (0, 1]"),
        "bridge_fraction": Field("0.5", parse_number, lambda v: 0 <= v < 1, "in [0, 1)"),
        "R_grid": Field("0.5,1,2,3,inf", parse_grid, _all(_pos), "each > 0"),
        "dump_chains": Field("true", parse_bool),
    },
    "gci": {
        "cases": Field("200", _int, lambda v: v >= 1, ">= 1"),
        "independent_cases": Field("20", _int, lambda v: v >= 0, ">= 0"),
        "max_dim": Field("6", _int, lambda v: 1 <= v <= 6, "in [1, 6]"),
        "points": Field("1048576", _int, lambda v: v >= 1024, ">= 1024"),
    },
    "decompose": {
        "dim": Field("2", _int, lambda v: v >= 1, ">= 1"),
        "body": Field("ball", str, lambda s: s in ("ball", "box"), "ball | box"),
        "size": Field("4", parse_number, _pos, "> 0"),
        "C1": Field("10", parse_number, _pos, "> 0"),
        "n_mc": Field("100000", _int, lambda v: v >= 1000, ">= 1000"),
        "good_samples": Field("100000", _int, lambda v: v >= 1, ">= 1"),
        "lines": Field("1000", _int, lambda v: v >= 1, ">= 1"),
    },
    "oracle-check": {
        "eta": Field("1/64", parse_number, _inv_integer, "1/eta a positive integer"),
    },
}


def load(subcommand: str, path: str | None = None, overrides: list[str] | None = None) -> dict:
    """Resolve a subcommand's parameters from defaults, a file and overrides.

    ``path`` may be an INI-style file or a run manifest (JSON).  Overrides are
    ``key=value`` or ``section.key=value``.
    """
    if subcommand not in SCHEMA:
        raise ConfigError(f"unknown subcommand {subcommand!r}")
    schema = SCHEMA[subcommand]
    raw = {k: f.default for k, f in schema.items()}
    if path:
        raw.update(_read_file(subcommand, path))
    for item in overrides or []:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not key=value")
        key, value = item.split("=", 1)
        key = key.strip()
        if "." in key:
            section, key = key.split(".", 1)
            if section != subcommand:
                continue
        raw[key] = value.strip()
    unknown = set(raw) - set(schema)
    if unknown:
        raise ConfigError(f"unknown keys for {subcommand}: {sorted(unknown)}")
    out = {}
    for key, f in schema.items():
        try:
            value = f.parse(str(raw[key]))
        except ConfigError as exc:
            raise ConfigError(f"{subcommand}.{key}: {exc}") from exc
        if not f.check(value):
            raise ConfigError(f"{subcommand}.{key} = {raw[key]!r} violates: {f.rule}")
        out[key] = value
    out["_raw"] = {k: str(raw[k]) for k in schema}
    return out


def _read_file(subcommand: str, path: str) -> dict:
    with open(path) as fh:
        text = fh.read()
    if text.lstrip().startswith("{"):
        manifest = json.loads(text)
        if manifest.get("subcommand") != subcommand:
            raise ConfigError(f"manifest is for {manifest.get('subcommand')!r}, not {subcommand!r}")
        return dict(manifest["config"])
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(str(exc)) from exc
    return dict(cp[subcommand]) if cp.has_section(subcommand) else {}


def config_hash(raw: dict) -> str:
    blob = json.dumps(raw, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()
