"""Run-configuration schema, validation and the published report schema."""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import jsonschema
import numpy as np

from .errors import ConfigError, InvalidArgument, NotFound
from .estimator import LambdaRule, OptimizerConfig
from .model import builtin
from .montecarlo import ExperimentConfig

FORMAT_VERSION = "1"

_number_list = {"type": "array", "items": {"type": "number"}, "minItems": 1}

CONFIG_SCHEMA = {
    "$schema": "http://json-schema.org/draft-07/schema#",
    "title": "bridgemde run configuration",
    "type": "object",
    "additionalProperties": False,
    "required": ["version", "model", "theta_star", "eps_list", "reps", "gamma", "lambda_rule"],
    "properties": {
        "version": {"const": FORMAT_VERSION},
        "model": {"type": "string"},
        "theta_star": _number_list,
        "eps_list": {**_number_list, "items": {"type": "number", "minimum": 0}},
        "reps": {"type": "integer", "minimum": 1},
        "gamma": {"type": "number", "exclusiveMinimum": 0},
        "lambda_rule": {
            "type": "object",
            "additionalProperties": False,
            "required": ["name", "lambda0"],
            "properties": {
                "name": {"enum": list(LambdaRule.NAMES)},
                "lambda0": {"type": "number", "minimum": 0},
            },
        },
        "n_steps": {"type": "integer", "minimum": 2},
        "base_seed": {"type": "integer", "minimum": 0, "maximum": 2 ** 64 - 1},
        "fit": {"enum": ["norm", "squared"]},
        "n_limit": {"type": "integer", "minimum": 1},
        "out_dir": {"type": "string"},
        "optimizer": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "starts": {"type": "integer", "minimum": 1},
                "max_evals": {"type": "integer", "minimum": 1},
                "tol": {"type": "number", "exclusiveMinimum": 0},
                "seed": {"type": "integer", "minimum": 0},
            },
        },
    },
}

_float_array = {"type": "array", "items": {"type": "number"}}

REPORT_SCHEMA = {
    "$schema": "http://json-schema.org/draft-07/schema#",
    "title": "bridgemde comparison report",
    "type": "object",
    "required": ["tool_version", "format_version", "config", "eps", "regime",
                 "lambda0_limit", "n_reps", "n_failed", "n_limit", "ks", "wasserstein",
                 "zero_fraction", "limit_zero_fraction", "estimator_mean",
                 "estimator_var", "limit_mean", "limit_var", "null_coords",
                 "false_zero_rate"],
    "additionalProperties": False,
    "properties": {
        "tool_version": {"type": "string"},
        "format_version": {"const": FORMAT_VERSION},
        "config": {"type": "object"},
        "eps": {"type": "number", "exclusiveMinimum": 0},
        "regime": {"enum": ["gamma>1", "gamma=1", "gamma<1"]},
        "lambda0_limit": {"type": "number", "minimum": 0},
        "n_reps": {"type": "integer", "minimum": 0},
        "n_failed": {"type": "integer", "minimum": 0},
        "n_limit": {"type": "integer", "minimum": 1},
        "ks": {"type": "array", "items": {"type": "number", "minimum": 0, "maximum": 1}},
        "wasserstein": {"type": "array", "items": {"type": "number", "minimum": 0}},
        "zero_fraction": {"type": "array", "items": {"type": "number", "minimum": 0, "maximum": 1}},
        "limit_zero_fraction": {"type": "array",
                                "items": {"type": "number", "minimum": 0, "maximum": 1}},
        "estimator_mean": _float_array,
        "estimator_var": _float_array,
        "limit_mean": _float_array,
        "limit_var": _float_array,
        "null_coords": {"type": "array", "items": {"type": "integer", "minimum": 0}},
        "false_zero_rate": {"type": "number", "minimum": 0, "maximum": 1},
    },
}


@dataclass(frozen=True)
class RunConfig:
    experiment: ExperimentConfig
    raw: dict
    n_limit: int
    out_dir: str | None


def _error_key(err: jsonschema.ValidationError) -> str:
    path = ".".join(str(p) for p in err.absolute_path)
    if err.validator == "required":
        missing = err.message.split("'")[1]
        return f"{path}.{missing}" if path else missing
    if err.validator == "additionalProperties":
        return path or "<root>"
    return path or "<root>"


def validate_raw(raw) -> None:
    validator = jsonschema.Draft7Validator(CONFIG_SCHEMA)
    errors = sorted(validator.iter_errors(raw), key=lambda e: list(e.absolute_path))
    if errors:
        err = errors[0]
        raise ConfigError(_error_key(err), err.message)


def parse_config(raw: dict, seed_override: int | None = None,
                 optimizer_override: dict | None = None) -> RunConfig:
    """Validate a decoded JSON config and build the experiment description.

    Overrides are applied before validation and echoed in ``raw``.
    """
    raw = json.loads(json.dumps(raw))
    if optimizer_override and isinstance(raw, dict):
        merged = dict(raw.get("optimizer", {}))
        merged.update({k: v for k, v in optimizer_override.items() if v is not None})
        if merged:
            raw["optimizer"] = merged
    validate_raw(raw)
    if seed_override is not None:
        if not 0 <= seed_override < 2 ** 64:
            raise ConfigError("--seed", "seed must be an unsigned 64-bit integer")
        raw["base_seed"] = int(seed_override)
    try:
        spec = builtin(raw["model"]).spec
    except NotFound as exc:
        raise ConfigError("model", str(exc)) from None
    if len(raw["theta_star"]) != spec.dim_theta:
        raise ConfigError("theta_star", f"model {raw['model']} needs {spec.dim_theta} values")
    th = np.array(raw["theta_star"], dtype=float)
    if np.any(th <= spec.lower) or np.any(th >= spec.upper):
        raise ConfigError("theta_star", f"must lie strictly inside {spec.theta_box}")
    eps = raw["eps_list"]
    if len(set(eps)) != len(eps):
        raise ConfigError("eps_list", "values must be distinct")
    opt = raw.get("optimizer", {})
    try:
        rule = LambdaRule(raw["lambda_rule"]["name"], float(raw["lambda_rule"]["lambda0"]))
        rule.limit_lambda0(float(raw["gamma"]))
    except InvalidArgument as exc:
        raise ConfigError("lambda_rule", str(exc)) from None
    experiment = ExperimentConfig(
        model=raw["model"],
        theta_star=tuple(th.tolist()),
        eps_list=tuple(float(e) for e in eps),
        reps=raw["reps"],
        gamma=float(raw["gamma"]),
        lambda_rule=rule,
        n_steps=raw.get("n_steps", 500),
        base_seed=raw.get("base_seed", 0),
        optimizer=OptimizerConfig(opt.get("starts", 8), opt.get("max_evals", 2000),
                                  float(opt.get("tol", 1e-8)), opt.get("seed", 0)),
        fit=raw.get("fit", "norm"),
    )
    return RunConfig(experiment, raw, raw.get("n_limit", 20000), raw.get("out_dir"))


def load_config(path, seed_override: int | None = None,
                optimizer_override: dict | None = None) -> RunConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError("--config", f"cannot read {path}: {exc.strerror}") from None
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError("--config", f"invalid JSON: {exc}") from None
    return parse_config(raw, seed_override, optimizer_override)
