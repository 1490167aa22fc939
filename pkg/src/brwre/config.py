"""Experiment configuration: JSON schema, overrides and model construction."""
from __future__ import annotations

import copy
import hashlib
import json
from pathlib import Path

import jsonschema

from .environment import EnvModel, env_model_from_json
from .errors import ConfigError
from .steps import StepLaw, step_law_from_json
from . import systems

_PAIR = {"type": "array", "prefixItems": [{"type": "number"}, {"type": "number"}], "minItems": 2, "maxItems": 2}
_PMF = {"type": "array", "items": _PAIR, "minItems": 1}
_INT_LIST = {"type": "array", "items": {"type": "integer", "minimum": 1}, "minItems": 1}
_SEED = {"type": "integer", "minimum": 0}
_OPT_SEED = {"type": ["integer", "null"], "minimum": 0}
_POS_INT = {"type": "integer", "minimum": 1}
_OPT_POS = {"type": ["number", "null"], "exclusiveMinimum": 0}


def _block(props: dict) -> dict:
    return {"type": "object", "properties": props, "additionalProperties": False}


ENV_PRESETS = {"env_a": systems.env_a, "env_c": systems.env_c, "env_b_star": lambda: systems.env_b(systems.solve_env_b())}
STEP_PRESETS = {"fair": systems.fair_step, "lazy": systems.lazy_step}

SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "env": {
            "oneOf": [
                _block({"preset": {"enum": sorted(ENV_PRESETS)}}) | {"required": ["preset"]},
                _block({"states": {"type": "array", "minItems": 1, "items": _block({
                    "weight": {"type": "number", "exclusiveMinimum": 0}, "pmf": _PMF,
                }) | {"required": ["weight", "pmf"]}}}) | {"required": ["states"]},
            ]
        },
        "step": {
            "oneOf": [
                _block({"preset": {"enum": sorted(STEP_PRESETS)}}) | {"required": ["preset"]},
                _block({"pmf": _PMF}) | {"required": ["pmf"]},
            ]
        },
        "seed": _SEED,
        "workers": _POS_INT,
        "classify": _block({"table_points": {"type": "integer", "minimum": 2, "maximum": 1000}}),
        "oracle": _block({
            "xs": _INT_LIST, "T": {"type": "integer", "minimum": 0},
            "mode": {"enum": ["quenched", "enumerate", "average"]},
            "env_seed": _SEED, "n_env": {"type": "integer", "minimum": 2},
        }),
        "simulate": _block({
            "n": _POS_INT, "env_seed": _OPT_SEED, "max_gen": _POS_INT, "max_particles": _POS_INT,
        }),
        "spine": _block({
            "xs": _INT_LIST, "n": _POS_INT,
            "measure": {"enum": ["forward_quenched", "annealed_base", "tilted_rho1", "tilted_rho"]},
            "rho": _OPT_POS, "lam": _OPT_POS, "env_seed": _SEED, "max_gen": _POS_INT,
        }),
        "estimate": _block({
            "xs": _INT_LIST, "n": _POS_INT,
            "schemes": {"type": "array", "minItems": 1, "items": {
                "enum": ["naive", "spine", "class1", "class3", "quenched_spine"]}},
            "lam": _OPT_POS, "rho": _OPT_POS, "env_seed": _SEED, "max_gen": _POS_INT,
        }),
        "fit": _block({
            "source": {"enum": ["oracle", "csv"]}, "csv": {"type": "string"}, "scheme": {"type": "string"},
            "xs": _INT_LIST, "env_seed": _SEED, "rel_bound": {"type": "number", "exclusiveMinimum": 0},
        }),
        "report": _block({"xs": _INT_LIST, "n": _POS_INT, "max_gen": _POS_INT}),
        "selftest": _block({"n": {"type": "integer", "minimum": 100}}),
    },
}

DEFAULTS = {
    "seed": 0,
    "workers": 1,
    "classify": {"table_points": 11},
    "oracle": {"xs": [1, 2, 3], "T": 60, "mode": "quenched", "env_seed": 0, "n_env": 1000},
    "simulate": {"n": 1000, "env_seed": None, "max_gen": 500, "max_particles": 10**7},
    "spine": {"xs": [2], "n": 100, "measure": "annealed_base", "rho": None, "lam": None, "env_seed": 0,
              "max_gen": 400},
    "estimate": {"xs": [2, 3, 4], "n": 10000, "schemes": ["naive"], "lam": None, "rho": None, "env_seed": 0,
                 "max_gen": 400},
    "fit": {"source": "oracle", "xs": list(range(10, 31)), "env_seed": 0, "rel_bound": 1e-3},
    "report": {"xs": [5, 10, 20], "n": 10000, "max_gen": 400},
    "selftest": {"n": 20000},
}


def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def apply_overrides(config: dict, overrides) -> dict:
    """Apply ``key.sub=value`` assignments; values are parsed as JSON when possible."""
    out = copy.deepcopy(config)
    for item in overrides or []:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not key=value")
        key, value = item.split("=", 1)
        parts = key.strip().split(".")
        node = out
        for p in parts[:-1]:
            node = node.setdefault(p, {})
            if not isinstance(node, dict):
                raise ConfigError(f"override {key!r} descends into a non-object")
        node[parts[-1]] = _parse_value(value)
    return out


def validate(config: dict) -> None:
    try:
        jsonschema.validate(config, SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"{where}: {exc.message}") from None


def with_defaults(config: dict) -> dict:
    out = copy.deepcopy(DEFAULTS)
    for key, value in config.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key].update(value)
        else:
            out[key] = value
    return out


def load_config(path: str | None, overrides=None) -> dict:
    raw: dict = {}
    if path:
        try:
            raw = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        if not isinstance(raw, dict):
            raise ConfigError("config must be a JSON object")
    raw = apply_overrides(raw, overrides)
    validate(raw)
    return with_defaults(raw)


def config_hash(config: dict) -> str:
    return hashlib.sha256(json.dumps(config, sort_keys=True, separators=(",", ":")).encode()).hexdigest()


def build_env(config: dict) -> EnvModel:
    spec = config.get("env")
    if spec is None:
        raise ConfigError("config has no 'env' section")
    if "preset" in spec:
        return ENV_PRESETS[spec["preset"]]()
    return env_model_from_json(spec)


def build_step(config: dict) -> StepLaw:
    spec = config.get("step")
    if spec is None:
        raise ConfigError("config has no 'step' section")
    if "preset" in spec:
        return STEP_PRESETS[spec["preset"]]()
    return step_law_from_json(spec)
