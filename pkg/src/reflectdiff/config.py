"""Experiment configuration: defaults, JSON-schema validation and resolution."""

from __future__ import annotations

import copy
import json
from pathlib import Path

import jsonschema

from .errors import ConfigurationError

DEFAULTS: dict = {
    "domain": {"bounds": [[0.0, 1.0]]},
    "grid": {"cells": [256]},
    "truth": {"kind": "bump", "amplitude": 0.8},
    "D": 0.05,
    "N": 500,
    "seed": 0,
    "spectral": {"modes": None, "face_mean": "arithmetic", "cache_dir": None},
    "simulate": {"euler": False, "dt": 1e-3, "T": 1.0},
    "estimator": {"s": 3.0, "J": None, "J_const": 1.0, "alpha": 0.0},
    "rates": {"N_values": [1000, 4000, 16000, 64000], "replicates": 20, "s": 3.0,
              "J_const": 1.0, "alpha": 0.0, "fixed_J": None},
    "prior": {"s": 1.0, "K": None, "K_const": 1.0, "beta": "auto", "M": 10000,
              "burn_in": 2000, "thin": 10, "modes": None,
              "subdomain": {"support_frac": 0.8, "inner_frac": 0.6}},
    "conditions": {"O0_frac": 0.6, "O0": None, "mu": "optimize", "iota": "scan", "modes": 10,
                   "kappa": 0.1, "transport_trials": 100,
                   "subdomain": {"support_frac": 0.8, "inner_frac": 0.6}},
    "metrics": {"eps": [0.05, 0.1, 0.2, 0.4], "gamma": 1.0 / 3.0, "t": 0.025, "modes": None,
                "bump": {"radius_frac": 0.25}},
    "plots": False,
}

_bounds = {"type": "array", "minItems": 1,
           "items": {"type": "array", "minItems": 2, "maxItems": 2, "items": {"type": "number"}}}
_subdomain = {
    "type": "object",
    "properties": {
        "support_frac": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
        "inner_frac": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
        "inner": _bounds,
        "support": _bounds,
    },
}
_opt_int = {"type": ["integer", "null"], "minimum": 1}

SCHEMA = {
    "type": "object",
    "properties": {
        "domain": {"type": "object", "required": ["bounds"], "properties": {"bounds": _bounds}},
        "grid": {"type": "object", "required": ["cells"],
                 "properties": {"cells": {"type": "array", "minItems": 1,
                                          "items": {"type": "integer", "minimum": 2}}}},
        "truth": {
            "type": "object",
            "properties": {
                "kind": {"enum": ["constant", "bump", "multi_bump"]},
                "value": {"type": "number", "exclusiveMinimum": 0},
                "amplitude": {"type": "number"},
                "centre": {"type": "array", "items": {"type": "number"}},
                "radius": {"type": ["number", "array"]},
                "bumps": {"type": "array", "items": {"type": "object"}},
            },
        },
        "D": {"type": "number", "exclusiveMinimum": 0},
        "N": {"type": "integer", "minimum": 1},
        "seed": {"type": "integer", "minimum": 0, "maximum": 2**64 - 1},
        "spectral": {"type": "object", "properties": {
            "modes": _opt_int, "face_mean": {"enum": ["arithmetic", "harmonic"]},
            "cache_dir": {"type": ["string", "null"]}}},
        "simulate": {"type": "object", "properties": {
            "euler": {"type": "boolean"}, "dt": {"type": "number", "exclusiveMinimum": 0},
            "T": {"type": "number", "exclusiveMinimum": 0}}},
        "estimator": {"type": "object", "properties": {
            "s": {"type": "number", "minimum": 0}, "J": _opt_int,
            "J_const": {"type": "number", "exclusiveMinimum": 0}, "alpha": {"type": "number"}}},
        "rates": {"type": "object", "properties": {
            "N_values": {"type": "array", "items": {"type": "integer", "minimum": 1}},
            "replicates": {"type": "integer", "minimum": 1},
            "s": {"type": "number", "minimum": 0},
            "J_const": {"type": "number", "exclusiveMinimum": 0},
            "alpha": {"type": "number"}, "fixed_J": _opt_int}},
        "prior": {"type": "object", "properties": {
            "s": {"type": "number", "minimum": 0}, "K": _opt_int,
            "K_const": {"type": "number", "exclusiveMinimum": 0},
            "beta": {"oneOf": [{"const": "auto"},
                               {"type": "number", "exclusiveMinimum": 0, "maximum": 1}]},
            "M": {"type": "integer", "minimum": 1}, "burn_in": {"type": "integer", "minimum": 0},
            "thin": {"type": "integer", "minimum": 1}, "modes": _opt_int,
            "subdomain": _subdomain}},
        "conditions": {"type": "object", "properties": {
            "O0_frac": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
            "O0": {"oneOf": [_bounds, {"type": "null"}]},
            "mu": {"oneOf": [{"const": "optimize"}, {"type": "number", "exclusiveMinimum": 0}]},
            "iota": {"oneOf": [{"const": "scan"}, {"type": "array", "items": {"type": "number"}}]},
            "modes": {"type": "integer", "minimum": 3},
            "kappa": {"type": "number", "exclusiveMinimum": 0},
            "transport_trials": {"type": "integer", "minimum": 1},
            "subdomain": _subdomain}},
        "metrics": {"type": "object", "properties": {
            "eps": {"type": "array", "items": {"type": "number"}},
            "gamma": {"type": "number", "exclusiveMinimum": 0},
            "t": {"type": "number", "exclusiveMinimum": 0}, "modes": _opt_int,
            "bump": {"type": "object"}}},
        "plots": {"type": "boolean"},
    },
}


def deep_merge(base: dict, update: dict) -> dict:
    out = copy.deepcopy(base)
    for key, value in (update or {}).items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = deep_merge(out[key], value)
        else:
            out[key] = copy.deepcopy(value)
    return out


def parse_override(text: str) -> tuple[list[str], object]:
    """``a.b.c=VALUE`` with VALUE parsed as JSON when possible."""
    if "=" not in text:
        raise ConfigurationError(f"override {text!r} is not of the form key=value")
    key, raw = text.split("=", 1)
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return key.strip().split("."), value


def apply_override(cfg: dict, path: list[str], value) -> None:
    node = cfg
    for k in path[:-1]:
        node = node.setdefault(k, {})
        if not isinstance(node, dict):
            raise ConfigurationError(f"cannot override inside non-object key {k!r}")
    node[path[-1]] = value


def validate(cfg: dict) -> None:
    try:
        jsonschema.validate(cfg, SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigurationError(f"config error at {where}: {exc.message}") from None
    dim = len(cfg["domain"]["bounds"])
    if len(cfg["grid"]["cells"]) != dim:
        raise ConfigurationError(f"grid.cells has {len(cfg['grid']['cells'])} entries for a {dim}-d domain")


def resolve(user: dict | None = None, overrides=()) -> dict:
    """Merge ``user`` over the defaults, apply ``key=value`` overrides and validate."""
    cfg = deep_merge(DEFAULTS, user or {})
    for item in overrides:
        path, value = parse_override(item) if isinstance(item, str) else item
        apply_override(cfg, path, value)
    validate(cfg)
    return cfg


def load(path) -> dict:
    try:
        return json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise ConfigurationError(f"config file {path} not found") from None
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"config file {path} is not valid JSON: {exc}") from None
