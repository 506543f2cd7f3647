"""JSON run configuration: schema validation and object builders."""

from __future__ import annotations

import json
import math
from pathlib import Path

import jsonschema
import numpy as np

from .empirical import Observable
from .potential import LINE, TORUS, Potential, SwitchingRate
from .ratefn import DensityPair, WForm


class ConfigError(ValueError):
    pass


_num = {"type": "number"}
_pos = {"type": "number", "exclusiveMinimum": 0}
_nonneg = {"type": "number", "minimum": 0}
_int2 = {"type": "integer", "minimum": 2}
_posint = {"type": "integer", "minimum": 1}


def _obj(props: dict, required=()):
    return {"type": "object", "properties": props, "required": list(required), "additionalProperties": False}


POTENTIAL = {
    "oneOf": [
        _obj({"kind": {"const": "zero"}}, ["kind"]),
        _obj({"kind": {"const": "cosine"}, "amplitude": _num, "frequency": _posint, "phase": _num}, ["kind"]),
        _obj({"kind": {"const": "quadratic"}, "scale": _pos}, ["kind"]),
        _obj({"kind": {"const": "power"}, "scale": _pos, "exponent": {"type": "number", "exclusiveMinimum": 1}},
             ["kind", "exponent"]),
        _obj({"kind": {"const": "tabulated"}, "values": {"type": "array", "items": _num, "minItems": 4}},
             ["kind", "values"]),
    ]
}

OBSERVABLE = {
    "oneOf": [
        _obj({"kind": {"const": "constant"}, "value": _num}, ["kind", "value"]),
        _obj({"kind": {"const": "cosine"}, "amplitude": _num, "frequency": _posint, "phase": _num}, ["kind"]),
        _obj({"kind": {"const": "velocity"}}, ["kind"]),
    ]
}

TARGET = {
    "oneOf": [
        _obj({"kind": {"const": "stationary"}}, ["kind"]),
        _obj({"kind": {"const": "sine"}, "amplitude": {"type": "number", "minimum": -0.999, "maximum": 0.999},
              "frequency": _posint, "phase": _num, "c": _num}, ["kind"]),
        _obj({"kind": {"const": "w-scaled"}, "scale": _num}, ["kind", "scale"]),
        _obj({"kind": {"const": "constant"}, "rho_plus": _nonneg, "rho_minus": _nonneg},
             ["kind", "rho_plus", "rho_minus"]),
        _obj({"kind": {"const": "tabulated"}, "rho_plus": {"type": "array", "items": _nonneg, "minItems": 4},
              "rho_minus": {"type": "array", "items": _nonneg, "minItems": 4}},
             ["kind", "rho_plus", "rho_minus"]),
    ]
}

_start = {"x0": _num, "v0": {"enum": [1, -1]}}

SCHEMA = _obj({
    "domain": {"enum": [TORUS, LINE]},
    "potential": POTENTIAL,
    "gamma": _nonneg,
    "grid": _int2,
    "seed": {"type": "integer", "minimum": 0, "maximum": 2**64 - 1},
    "threads": {"type": "integer", "minimum": 0},
    "output": {"type": "string"},
    "simulate": _obj({"t_max": _pos, "h": _pos, "trajectories": _posint, **_start}),
    "histogram": _obj({"t_max": _pos, "h": _pos, "trajectories": _posint, **_start}),
    "rate": _obj({"target": TARGET}),
    "sweep": _obj({"target": TARGET, "gammas": {"type": "array", "items": _pos, "minItems": 2},
                   "epsilon": _pos}),
    "dv_compare": _obj({"target": TARGET, "grids": {"type": "array", "items": _int2, "minItems": 2}}),
    "eigen": _obj({"observable": OBSERVABLE, "theta": _num, "dump_matrix": {"type": "boolean"},
                   "duality_cases": {"type": "integer", "minimum": 0}}),
    "scgf": _obj({"observable": OBSERVABLE, "t": _pos, "ensemble": _posint, "grids": {
        "type": "array", "items": _int2, "minItems": 1, "maxItems": 2}, **_start}),
    "decay": _obj({"observable": OBSERVABLE, "horizons": {"type": "array", "items": _pos, "minItems": 2},
                   "ensemble": _posint, "level": _num, "level_offset": _num, **_start}),
    "conditions": _obj({"aux_potential": POTENTIAL,
                        "radii": {"type": "array", "items": _pos, "minItems": 3}}),
}, ["potential"])


def _describe(err: jsonschema.ValidationError) -> str:
    path = ".".join(str(p) for p in err.absolute_path) or "<root>"
    if err.validator == "additionalProperties":
        extra = sorted(set(err.instance) - set(err.schema.get("properties", {})))
        return f"unknown key(s) {', '.join(extra)} at {path}"
    if err.validator == "oneOf" and err.context:
        best = min(err.context, key=lambda e: len(list(e.schema_path)))
        for sub in err.context:
            if sub.validator != "const":
                best = sub
                break
        inner = ".".join(str(p) for p in best.absolute_path)
        key = f"{path}.{inner}" if inner else path
        return f"{key}: {best.message}"
    return f"{path}: {err.message}"


def validate(cfg: dict) -> dict:
    try:
        jsonschema.validate(cfg, SCHEMA)
    except jsonschema.ValidationError as err:
        raise ConfigError(_describe(err)) from None
    dom = cfg.get("domain", TORUS)
    kind = cfg["potential"]["kind"]
    if dom == TORUS and kind in ("quadratic", "power"):
        raise ConfigError(f"potential.kind: {kind} potentials live on the line domain")
    if dom == LINE and kind in ("cosine", "tabulated"):
        raise ConfigError(f"potential.kind: {kind} potentials live on the torus domain")
    return cfg


def load(path) -> dict:
    try:
        cfg = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as err:
        raise ConfigError(f"config: cannot read {path}: {err}") from None
    if not isinstance(cfg, dict):
        raise ConfigError("config: top level must be an object")
    return validate(cfg)


def potential(cfg: dict) -> Potential:
    return Potential.from_config(cfg["potential"], cfg.get("domain", TORUS))


def rate(cfg: dict, gamma: float | None = None) -> SwitchingRate:
    return SwitchingRate(potential(cfg), cfg.get("gamma", 1.0) if gamma is None else gamma)


def observable(spec: dict | None) -> Observable:
    return Observable.from_config(spec or {"kind": "cosine"})


def _sine(spec: dict):
    a = spec.get("amplitude", 0.5)
    k = spec.get("frequency", 1)
    ph = spec.get("phase", 0.0)
    w = 2 * math.pi * k
    return (lambda x: 1.0 + a * np.sin(w * x + ph)), (lambda x: a * w * np.cos(w * x + ph))


def density_pair(spec: dict, pot: Potential, n: int) -> DensityPair:
    kind = spec["kind"]
    if kind == "stationary":
        return DensityPair.stationary(pot, n)
    if kind == "sine":
        rho, drho = _sine(spec)
        return DensityPair.common(rho, drho, n, spec.get("c", 0.0))
    if kind == "w-scaled":
        return WForm.from_potential(pot, n, spec["scale"]).to_density_pair()
    if kind == "constant":
        rp, rm = spec["rho_plus"], spec["rho_minus"]
        return DensityPair(np.full(n, float(rp)), np.full(n, float(rm)), np.zeros(n), np.zeros(n))
    if kind == "tabulated":
        rp, rm = np.asarray(spec["rho_plus"], float), np.asarray(spec["rho_minus"], float)
        if rp.size != rm.size:
            raise ConfigError("target.rho_minus: length differs from rho_plus")
        return DensityPair.from_values(rp, rm, normalize=True)
    raise ConfigError(f"target.kind: unknown {kind!r}")


def w_form(spec: dict, pot: Potential, n: int) -> WForm | None:
    """W-form of a target with rho_plus = rho_minus, or None if it has none."""
    kind = spec["kind"]
    if kind == "stationary":
        return WForm.from_potential(pot, n, 1.0)
    if kind == "w-scaled":
        return WForm.from_potential(pot, n, spec["scale"])
    if kind == "sine" and spec.get("c", 0.0) == 0.0:
        rho, drho = _sine(spec)
        return WForm.from_density(rho, drho, n)
    return None
