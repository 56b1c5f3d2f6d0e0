"""Experiment configuration: JSON schema, validation and model construction."""

from __future__ import annotations

import copy
import json
from fractions import Fraction
from pathlib import Path

import jsonschema
import numpy as np

from .errors import ConfigError
from .measures import (Atomic, DensityOnIntervals, IntervalUnion, SphericalStableLike, SymmetricStable,
                       svc_set)
from .symbol import LevyTriplet, OUModel

SCHEMA_VERSION = 1

EXPERIMENTS = ("tv_decay", "coupling_tail", "lemma23_sweep", "symbol_bounds", "gradient_scan",
               "cantor_demo", "overlap_check", "negative_control")

# experiments whose output is a Monte Carlo statistic
STATISTICAL = ("tv_decay", "coupling_tail", "negative_control")

_number = {"type": "number"}
_rational = {"oneOf": [{"type": "number"}, {"type": "string", "pattern": r"^-?\d+(\.\d+)?(/\d+)?$"}]}
_matrix = {"type": "array", "minItems": 1, "items": {"type": "array", "minItems": 1, "items": _number}}
_vector = {"type": "array", "minItems": 1, "items": _number}

_measure = {
    "type": "object",
    "required": ["kind"],
    "properties": {
        "kind": {"enum": ["atomic", "density", "stable", "svc", "spherical"]},
        "atoms": {"type": "array", "minItems": 1,
                  "items": {"type": "array", "minItems": 2, "maxItems": 2}},
        "intervals": {"type": "array", "minItems": 1,
                      "items": {"type": "array", "minItems": 2, "maxItems": 2, "items": _number}},
        "power": _number,
        "center": _number,
        "weight": {"type": "number", "exclusiveMinimum": 0},
        "alpha": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 2},
        "beta": _number,
        "r0": {"type": "number", "exclusiveMinimum": 0},
        "scale": {"type": "number", "exclusiveMinimum": 0},
        "dim": {"type": "integer", "minimum": 1},
        "level": {"type": "integer", "minimum": 0},
        "removed": _rational,
        "sphere_atoms": {"type": "array", "minItems": 1,
                         "items": {"type": "array", "minItems": 2, "maxItems": 2}},
    },
    "additionalProperties": False,
}

SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "required": ["schema_version", "experiment", "seed"],
    "properties": {
        "schema_version": {"const": SCHEMA_VERSION},
        "experiment": {"enum": list(EXPERIMENTS)},
        "seed": {"type": "integer", "minimum": 0},
        "model": {
            "type": "object",
            "required": ["A", "B"],
            "properties": {
                "A": _matrix,
                "B": _matrix,
                "Q": _matrix,
                "b": _vector,
                "nu": {"oneOf": [{"type": "null"}, _measure]},
            },
            "additionalProperties": False,
        },
        "model_file": {"type": "string"},
        "t_grid": {"type": "array", "minItems": 1, "items": {"type": "number", "exclusiveMinimum": 0}},
        "sample_count": {"type": "integer", "minimum": 1},
        "output_dir": {"type": "string"},
        "workers": {"type": "integer", "minimum": 1},
        "params": {"type": "object"},
    },
    "additionalProperties": False,
}

_point = {"oneOf": [_number, _vector]}

PARAM_SCHEMAS = {
    "tv_decay": {
        "x": _point, "y": _point, "epsilon": {"type": "number", "exclusiveMinimum": 0},
        "delta": {"type": "number", "exclusiveMinimum": 0}, "bins": {"type": "integer", "minimum": 1},
        "paired": {"type": "boolean"}, "trim": {"type": "number", "minimum": 0, "maximum": 0.5},
        "mode": {"enum": ["cp_truncated", "stable_exact", "gaussian_exact", "path_euler"]},
        "chunk": {"type": "integer", "minimum": 1}, "C": {"type": "number", "exclusiveMinimum": 0},
    },
    "coupling_tail": {
        "x": _point, "y": _point, "epsilon": {"type": "number", "exclusiveMinimum": 0},
        "delta": {"type": "number", "exclusiveMinimum": 0}, "horizon": {"type": "number", "exclusiveMinimum": 0},
        "ks": {"type": "array", "minItems": 2, "items": {"type": "integer", "minimum": 1}},
        "k0": {"type": "integer", "minimum": 1}, "chunk": {"type": "integer", "minimum": 1},
    },
    "lemma23_sweep": {
        "kmax": {"type": "integer", "minimum": 1, "maximum": 18},
        "r": {"type": "array", "minItems": 1, "items": _rational},
    },
    "symbol_bounds": {
        "x": _point, "y": _point, "C": {"type": "number", "exclusiveMinimum": 0},
        "c": {"type": "number", "exclusiveMinimum": 0}, "t0": {"type": "number", "exclusiveMinimum": 0},
        "xi_range": {"type": "number", "exclusiveMinimum": 1},
    },
    "gradient_scan": {
        "f": {"enum": ["indicator_halfline", "cos"]},
        "probe": {"type": "object", "required": ["lo", "hi", "count"],
                  "properties": {"lo": _number, "hi": _number, "count": {"type": "integer", "minimum": 3}},
                  "additionalProperties": False},
        "relative_probe": {"type": "boolean"},
    },
    "cantor_demo": {
        "level": {"type": "integer", "minimum": 0, "maximum": 20}, "removed": _rational,
        "delta": _rational, "grid": {"type": "integer", "minimum": 1},
    },
    "overlap_check": {
        "epsilon": {"type": "number", "exclusiveMinimum": 0}, "delta": {"type": "number", "exclusiveMinimum": 0},
        "grid": {"type": "integer", "minimum": 1},
    },
    "negative_control": {
        "x": _point, "y": _point, "bins": {"type": "integer", "minimum": 1},
        "trim": {"type": "number", "minimum": 0, "maximum": 0.5}, "threshold": _number,
        "mode": {"enum": ["cp_truncated", "stable_exact", "gaussian_exact", "path_euler"]},
        "epsilon": {"type": "number", "exclusiveMinimum": 0}, "chunk": {"type": "integer", "minimum": 1},
    },
}

NEEDS_MODEL = ("tv_decay", "coupling_tail", "symbol_bounds", "gradient_scan", "overlap_check", "negative_control")


def _pointer(path) -> str:
    return "/" + "/".join(str(p) for p in path)


def _check(instance, schema, prefix=()):
    validator = jsonschema.Draft202012Validator(schema)
    errors = sorted(validator.iter_errors(instance), key=lambda e: list(e.absolute_path))
    if errors:
        err = jsonschema.exceptions.best_match(errors)
        raise ConfigError(err.message, _pointer(list(prefix) + list(err.absolute_path)))


def validate_config(cfg: dict, base_dir=None) -> dict:
    """Schema and cross-field checks.

    A ``model_file`` entry (relative to ``base_dir``) is read and inlined as
    ``model``; the returned config is self-contained.
    """
    if not isinstance(cfg, dict):
        raise ConfigError("config must be a JSON object", "")
    _check(cfg, SCHEMA)
    if "model_file" in cfg:
        if "model" in cfg:
            raise ConfigError("give either model or model_file, not both", "/model_file")
        path = Path(base_dir or ".") / cfg["model_file"]
        if not path.is_file():
            raise ConfigError(f"referenced file {path} does not exist", "/model_file")
        try:
            model = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"invalid JSON in {path}: {exc}", "/model_file") from exc
        cfg = {k: v for k, v in cfg.items() if k != "model_file"}
        cfg["model"] = model
        _check(cfg, SCHEMA)
    exp = cfg["experiment"]
    params = cfg.get("params", {})
    _check(params, {"type": "object", "properties": PARAM_SCHEMAS[exp], "additionalProperties": False},
           ("params",))
    if exp in NEEDS_MODEL and "model" not in cfg:
        raise ConfigError(f"experiment {exp} needs a model", "/model")
    if exp in STATISTICAL and cfg.get("sample_count", 100000) < 1000:
        raise ConfigError("statistical experiments need sample_count >= 1000", "/sample_count")
    if exp in ("tv_decay", "symbol_bounds", "gradient_scan", "negative_control") and "t_grid" not in cfg:
        raise ConfigError(f"experiment {exp} needs t_grid", "/t_grid")
    if "model" in cfg:
        build_model(cfg["model"])
    return cfg


def load_config(path) -> dict:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file {path} does not exist", "")
    try:
        cfg = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON: {exc}", "") from exc
    return validate_config(cfg, path.parent)


def parse_rational(v) -> Fraction:
    return Fraction(v) if isinstance(v, str) else Fraction(v).limit_denominator(10 ** 12)


def _power_density(power, center):
    return lambda z: np.abs(z - center) ** power


def build_measure(spec, pointer="/model/nu"):
    kind = spec["kind"]
    try:
        if kind == "atomic":
            return Atomic([(loc, m) for loc, m in spec["atoms"]])
        if kind == "density":
            dens = None
            if "power" in spec:
                dens = _power_density(float(spec["power"]), float(spec.get("center", 0.0)))
            return DensityOnIntervals(IntervalUnion.from_pairs(spec["intervals"]), dens,
                                      weight=float(spec.get("weight", 1.0)))
        if kind == "svc":
            u = svc_set(int(spec["level"]), parse_rational(spec.get("removed", "1/4")))
            return DensityOnIntervals(u, weight=float(spec.get("weight", 1.0)))
        if kind == "stable":
            return SymmetricStable(float(spec["alpha"]), float(spec.get("scale", 1.0)), int(spec.get("dim", 1)))
        if kind == "spherical":
            atoms = [(np.asarray(d, dtype=float), float(w)) for d, w in spec["sphere_atoms"]]
            return SphericalStableLike(float(spec["alpha"]), float(spec.get("beta", 1.0)), float(spec["r0"]), atoms)
    except KeyError as exc:
        raise ConfigError(f"missing field {exc.args[0]!r} for measure kind {kind}", pointer) from exc
    except ValueError as exc:
        raise ConfigError(str(exc), pointer) from exc
    raise ConfigError(f"unknown measure kind {kind!r}", pointer + "/kind")


def build_model(spec) -> OUModel:
    A = np.asarray(spec["A"], dtype=float)
    B = np.asarray(spec["B"], dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ConfigError("A must be square", "/model/A")
    if B.ndim != 2 or B.shape[0] != A.shape[0]:
        raise ConfigError("B must have as many rows as A", "/model/B")
    d = B.shape[1]
    nu = build_measure(spec["nu"]) if spec.get("nu") else None
    Q = np.asarray(spec.get("Q", np.zeros((d, d))), dtype=float)
    b = np.asarray(spec.get("b", np.zeros(d)), dtype=float)
    try:
        return OUModel(A, B, LevyTriplet(Q, b, nu))
    except ValueError as exc:
        raise ConfigError(str(exc), "/model") from exc


def embedded_config(cfg: dict) -> dict:
    """The config as embedded in sidecars: execution-only fields removed."""
    out = copy.deepcopy(cfg)
    out.pop("workers", None)
    out.pop("output_dir", None)
    return out
