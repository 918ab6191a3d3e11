"""JSON run configuration: schema, defaults and conversion to model objects."""

from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import jsonschema

from .model import (ConfigError, DampingProfile, Exponents, Grid, InitialData, NewtonSettings,
                    PowerProfile, ProblemSpec, WeightProfiles)

DEFAULTS = {
    "grid": {"n": 200, "length": 1.0},
    "exponents": {"ell": 2.0, "m": 2.0, "q": 2.0, "p_a1": 1.0},
    "a": 1.0,
    "damping": {"b0": 1.0, "spatial": "uniform", "temporal_sigma": 0.0,
                "center": 0.5, "width": 0.25},
    "weights": {"lambda": {"c": 1.0, "theta": 0.0}, "alpha": {"c": 1.0, "theta": 0.0},
                "delta": "empirical", "eta": "empirical", "j": "empirical"},
    "initial": {"psi": "sine", "phi": "zero", "amplitude": 1.0},
    "time": {"dt": 1e-3, "t_end": 20.0},
    "eps_reg": 1e-8,
    "newton": {"tol": 1e-12, "max_iter": 50},
    "lyapunov": {"mu": None, "nu": None, "c4": 1.0, "auto_tune": True},
    "analysis": {"window_fraction": 0.5, "slope_tolerance": 0.15},
    "assumptions": {"sample_count": 1000, "rho_conj": None},
    "seed": 0,
    "outputs": {"csv": "trajectory.csv", "summary": "summary.json"},
}

_num = {"type": "number"}
_pos = {"type": "number", "exclusiveMinimum": 0}
_nullable_num = {"type": ["number", "null"]}
_profile = {"type": "object", "additionalProperties": False,
            "properties": {"c": _pos, "theta": _num}}
_profile_or_empirical = {"oneOf": [_profile, {"const": "empirical"}]}


def _block(props, **extra):
    return {"type": "object", "additionalProperties": False, "properties": props, **extra}


SCHEMA = _block({
    "grid": _block({"n": {"type": "integer"}, "length": _num}),
    "exponents": _block({"ell": _num, "m": _num, "q": _num, "p_a1": _num}),
    "a": _num,
    "damping": _block({"b0": _num, "spatial": {"type": "string"}, "temporal_sigma": _num,
                       "center": _num, "width": _num}),
    "weights": _block({"lambda": _profile, "alpha": _profile, "delta": _profile_or_empirical,
                       "eta": _profile_or_empirical, "j": _profile_or_empirical}),
    "initial": _block({"psi": {"type": "string"}, "phi": {"type": "string"},
                       "amplitude": _num}),
    "time": _block({"dt": _num, "t_end": _num}),
    "eps_reg": _num,
    "newton": _block({"tol": _num, "max_iter": {"type": "integer"}}),
    "lyapunov": _block({"mu": _nullable_num, "nu": _nullable_num, "c4": _num,
                        "auto_tune": {"type": "boolean"}}),
    "analysis": _block({"window_fraction": {"type": "number", "exclusiveMinimum": 0,
                                            "maximum": 1},
                        "slope_tolerance": _num}),
    "assumptions": _block({"sample_count": {"type": "integer", "minimum": 100},
                           "rho_conj": _nullable_num}),
    "seed": {"type": "integer"},
    "outputs": _block({"csv": {"type": "string"}, "summary": {"type": "string"}}),
})


@dataclass(frozen=True)
class LyapunovSettings:
    mu: float | None = None
    nu: float | None = None
    c4: float = 1.0
    auto_tune: bool = True


@dataclass(frozen=True)
class AnalysisSettings:
    window_fraction: float = 0.5
    slope_tolerance: float = 0.15


@dataclass(frozen=True)
class RunConfig:
    spec: ProblemSpec
    lyapunov: LyapunovSettings = field(default_factory=LyapunovSettings)
    analysis: AnalysisSettings = field(default_factory=AnalysisSettings)
    sample_count: int = 1000
    rho_conj: float | None = None
    seed: int = 0
    csv: str = "trajectory.csv"
    summary: str = "summary.json"
    raw: dict = field(default_factory=dict, compare=False, repr=False)

    @property
    def config_hash(self) -> str:
        return config_hash(self.raw)


def _merge(base, override):
    out = copy.deepcopy(base)
    for key, val in override.items():
        if isinstance(val, dict) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], val)
        else:
            out[key] = copy.deepcopy(val)
    return out


def canonical_json(data) -> str:
    return json.dumps(data, sort_keys=True, separators=(",", ":"))


def config_hash(raw: dict) -> str:
    return hashlib.sha256(canonical_json(raw).encode()).hexdigest()


def validate(data: dict) -> None:
    """Raise :class:`ConfigError` naming the JSON pointer of the first schema violation."""
    validator = jsonschema.Draft7Validator(SCHEMA)
    errors = sorted(validator.iter_errors(data), key=lambda e: list(e.absolute_path))
    if errors:
        err = errors[0]
        pointer = "/" + "/".join(str(p) for p in err.absolute_path)
        if err.validator == "additionalProperties":
            extra = sorted(set(err.instance) - set(err.schema.get("properties", {})))
            pointer = pointer.rstrip("/") + "/" + extra[0]
            raise ConfigError(f"unknown key at {pointer}")
        raise ConfigError(f"schema violation at {pointer}: {err.message}")


def _profile_obj(val):
    if val == "empirical" or val is None:
        return None
    return PowerProfile(float(val["c"]), float(val["theta"]))


def from_dict(data: dict) -> RunConfig:
    validate(data)
    raw = _merge(DEFAULTS, data)
    g, ex, dmp, w = raw["grid"], raw["exponents"], raw["damping"], raw["weights"]
    spec = ProblemSpec(
        grid=Grid(int(g["n"]), float(g["length"])),
        exponents=Exponents(float(ex["ell"]), float(ex["m"]), float(ex["q"]), float(ex["p_a1"])),
        a=float(raw["a"]),
        damping=DampingProfile(float(dmp["b0"]), dmp["spatial"], float(dmp["temporal_sigma"]),
                               float(dmp["center"]), float(dmp["width"])),
        weights=WeightProfiles(lam=_profile_obj(w["lambda"]), alpha=_profile_obj(w["alpha"]),
                               delta=_profile_obj(w["delta"]), eta=_profile_obj(w["eta"]),
                               j=_profile_obj(w["j"])),
        initial=InitialData(raw["initial"]["psi"], raw["initial"]["phi"],
                            float(raw["initial"]["amplitude"])),
        dt=float(raw["time"]["dt"]),
        t_end=float(raw["time"]["t_end"]),
        eps_reg=float(raw["eps_reg"]),
        newton=NewtonSettings(tol=float(raw["newton"]["tol"]),
                              max_iter=int(raw["newton"]["max_iter"])),
    )
    ly = raw["lyapunov"]
    return RunConfig(
        spec=spec,
        lyapunov=LyapunovSettings(ly["mu"], ly["nu"], float(ly["c4"]), bool(ly["auto_tune"])),
        analysis=AnalysisSettings(float(raw["analysis"]["window_fraction"]),
                                  float(raw["analysis"]["slope_tolerance"])),
        sample_count=int(raw["assumptions"]["sample_count"]),
        rho_conj=raw["assumptions"]["rho_conj"],
        seed=int(raw["seed"]),
        csv=raw["outputs"]["csv"],
        summary=raw["outputs"]["summary"],
        raw=raw,
    )


def parse_config(path) -> RunConfig:
    path = Path(path)
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be an object")
    return from_dict(data)


def with_overrides(cfg: RunConfig, **changes) -> RunConfig:
    """New config with dotted-path overrides, e.g. ``{"exponents.m": 3}``."""
    data = copy.deepcopy(cfg.raw)
    for dotted, val in changes.items():
        node = data
        *head, last = dotted.split(".")
        for key in head:
            node = node.setdefault(key, {})
        node[last] = val
    return from_dict(data)
