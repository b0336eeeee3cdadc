"""YAML run configuration: schema validation and model construction.

The schema is strict: unknown keys anywhere in the tree are rejected, every
value is type-checked, and defaults are merged in before any computation.
``schema_version`` must be 1.
"""

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import yaml

from .errors import ConfigError
from .model import BUILTIN_MODELS, ModelSpec, builtin_model, polynomial_model

__all__ = ["RunConfig", "load_config", "validate_config", "ANALYSES", "CYCLE_GUESSES"]

ANALYSES = ("validate", "cycle-report", "clt-check", "laplace-check", "scaling")

# sensible starting points for the transient leg of the cycle search
CYCLE_GUESSES = {
    "vdp": [2.0, 0.0],
    "hopf": [0.5, 0.0],
    "brusselator": [1.0, 1.0],
}

_MODEL_ANALYSES = {"validate", "cycle-report", "clt-check"}


class _Field:
    def __init__(self, types, default=None, required=False, check=None):
        self.types = types if isinstance(types, tuple) else (types,)
        self.default = default
        self.required = required
        self.check = check


def _positive(path, v):
    if v <= 0:
        raise ConfigError(f"{path} must be positive, got {v}")


def _nonneg_int(path, v):
    if v < 0:
        raise ConfigError(f"{path} must be nonnegative, got {v}")


_SCHEMA = {
    "schema_version": _Field(int, required=True),
    "analysis": _Field(str),
    "epsilon": _Field((int, float), default=1e-3, check=_positive),
    "model": {
        "name": _Field(str),
        "params": _Field(dict, default=None),
        "polynomial": {
            "dim": _Field(int, required=True, check=_positive),
            "components": _Field(list, required=True),
            "name": _Field(str, default="polynomial"),
        },
        "diffusion": _Field(list, default=None),
    },
    "cycle": {
        "N": _Field(int, default=1024, check=_positive),
        "x_guess": _Field(list, default=None),
        "transient_time": _Field((int, float), default=50.0, check=_positive),
        "max_return_time": _Field((int, float), default=200.0, check=_positive),
        "cycle_tol": _Field((int, float), default=1e-9, check=_positive),
        "periodicity_tol": _Field((int, float), default=1e-10, check=_positive),
        "entropy_tol": _Field((int, float), default=1e-4, check=_positive),
        "residual_tol": _Field((int, float), default=1e-5, check=_positive),
        "constancy_tol": _Field((int, float), default=1e-3, check=_positive),
    },
    "clt": {
        "x0": _Field(list, default=None),
        "t1": _Field((int, float), default=None),
        "grid_points": _Field(int, default=17, check=_positive),
        "threshold": _Field((int, float), default=0.95, check=_positive),
    },
    "montecarlo": {
        "M": _Field(int, default=10000, check=_positive),
        "h": _Field((int, float), default=None),
        "seed": _Field(int, default=12345, check=_nonneg_int),
        "workers": _Field(int, default=1, check=_positive),
        "bins": _Field(int, default=32, check=_positive),
        "relax_periods": _Field(int, default=3, check=_positive),
        "dump_endpoints": _Field(bool, default=False),
    },
    "laplace": {
        "cases": _Field(int, default=10, check=_positive),
        "seed": _Field(int, default=2024, check=_nonneg_int),
        "resolution": _Field(int, default=8, check=_positive),
        "slope_threshold": _Field((int, float), default=1.9, check=_positive),
    },
    "scaling": {
        "orders": _Field(list, default=None),
        "alphas": _Field(list, default=None),
        "points": _Field(int, default=100, check=_positive),
        "seed": _Field(int, default=7, check=_nonneg_int),
    },
    "output": {
        "directory": _Field(str, default="stochcycle_out"),
        "figures": _Field(bool, default=True),
    },
}


def _walk(schema, data, path=""):
    if not isinstance(data, dict):
        raise ConfigError(f"{path or 'config'} must be a mapping, got {type(data).__name__}")
    out = {}
    for key, value in data.items():
        dotted = f"{path}.{key}" if path else key
        if key not in schema:
            raise ConfigError(f"unknown key '{dotted}'")
        spec = schema[key]
        if isinstance(spec, dict):
            out[key] = _walk(spec, value, dotted)
            continue
        if isinstance(value, bool) and bool not in spec.types:
            raise ConfigError(f"{dotted} must be {spec.types[0].__name__}, got bool")
        if value is not None and not isinstance(value, spec.types):
            names = "/".join(t.__name__ for t in spec.types)
            raise ConfigError(f"{dotted} must be {names}, got {type(value).__name__}")
        if spec.check is not None and value is not None:
            spec.check(dotted, value)
        out[key] = value
    for key, spec in schema.items():
        dotted = f"{path}.{key}" if path else key
        if key in out:
            continue
        if isinstance(spec, dict):
            out[key] = _fill_defaults(spec)
            continue
        if spec.required:
            raise ConfigError(f"missing required key '{dotted}'")
        out[key] = spec.default
    return out


def _fill_defaults(schema):
    out = {}
    for key, spec in schema.items():
        if isinstance(spec, dict):
            # nested optional sections default to absent, not half-filled
            out[key] = _fill_defaults(spec) if key != "polynomial" else None
        else:
            if spec.required:
                return None
            out[key] = spec.default
    return out


@dataclass
class RunConfig:
    """Validated configuration with the model already constructed."""

    analysis: Optional[str]
    epsilon: float
    model: Optional[ModelSpec]
    cycle: dict
    clt: dict
    montecarlo: dict
    laplace: dict
    scaling: dict
    output: dict
    raw: dict = field(repr=False, default_factory=dict)


def _build_model(section):
    if section is None:
        return None
    name = section.get("name")
    poly = section.get("polynomial")
    diffusion = section.get("diffusion")
    if diffusion is not None:
        diffusion = np.asarray(diffusion, dtype=float)
        if diffusion.ndim != 2 or diffusion.shape[0] != diffusion.shape[1]:
            raise ConfigError("model.diffusion must be a square matrix")
    if name is not None and poly is not None:
        raise ConfigError("give model.name or model.polynomial, not both")
    if name is not None:
        params = section.get("params")
        return builtin_model(name, params=params, diffusion=diffusion)
    if poly is not None:
        comps = poly["components"]
        try:
            components = [
                [(float(c), [int(p) for p in powers]) for c, powers in comp]
                for comp in comps
            ]
        except (TypeError, ValueError) as exc:
            raise ConfigError(
                "model.polynomial.components must be per-coordinate lists of "
                "(coefficient, powers) pairs"
            ) from exc
        n = poly["dim"]
        D = diffusion if diffusion is not None else np.eye(n)
        return polynomial_model(n, components, diffusion=D, name=poly["name"])
    return None


def validate_config(data):
    """Validate a parsed mapping against the schema; returns a RunConfig."""
    merged = _walk(_SCHEMA, data)
    if merged["schema_version"] != 1:
        raise ConfigError(f"unsupported schema_version {merged['schema_version']}")
    analysis = merged.get("analysis")
    if analysis is not None and analysis not in ANALYSES:
        raise ConfigError(
            f"analysis must be one of {', '.join(ANALYSES)}; got '{analysis}'"
        )
    model = _build_model(merged.get("model"))
    if analysis in _MODEL_ANALYSES and model is None:
        raise ConfigError(f"analysis '{analysis}' requires a model section")
    return RunConfig(
        analysis=analysis,
        epsilon=float(merged["epsilon"]),
        model=model,
        cycle=merged["cycle"],
        clt=merged["clt"],
        montecarlo=merged["montecarlo"],
        laplace=merged["laplace"],
        scaling=merged["scaling"],
        output=merged["output"],
        raw=data,
    )


def load_config(path):
    """Parse and validate a YAML config file."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            data = yaml.safe_load(fh)
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"invalid YAML in {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError("config root must be a mapping")
    return validate_config(data)
