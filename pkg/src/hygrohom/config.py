"""JSON run configurations: schemas, loading and object builders.

Every configuration carries ``"schema_version": 1``.  Unknown keys are
rejected and all problems are reported together in a :class:`ConfigError`.
Relative paths are resolved against the configuration file's directory.
"""

from __future__ import annotations

import copy
import json
from pathlib import Path
from typing import Any, Mapping

import jsonschema
import numpy as np

from hygrohom.errors import ConfigError
from hygrohom.materials import IsotropicElastic, TransverselyIsotropic
from hygrohom.mesh import (
    Mesh,
    generate_box_mesh,
    generate_cylinder_rve,
    generate_l_prism,
    generate_laminate_rve,
    parse_mesh,
)

__all__ = [
    "SCHEMA_VERSION",
    "TRANSIENT_SCHEMA",
    "DIRECTIONS_SCHEMA",
    "FE2_SCHEMA",
    "load_config",
    "validate",
    "build_mesh",
    "mechanical_material",
    "transport_value",
]

SCHEMA_VERSION = 1

_NUM = {"type": "number"}
_POS = {"type": "number", "exclusiveMinimum": 0}
_VEC3 = {"type": "array", "items": _NUM, "minItems": 3, "maxItems": 3}
_INT3 = {"type": "array", "items": {"type": "integer", "minimum": 1}, "minItems": 3, "maxItems": 3}
_MAT3 = {"type": "array", "items": _VEC3, "minItems": 3, "maxItems": 3}


def _obj(props: dict, required=(), **extra) -> dict:
    return {"type": "object", "properties": props, "required": list(required), "additionalProperties": False, **extra}


MESH_SCHEMA = {
    "oneOf": [
        _obj({"path": {"type": "string"}}, ["path"]),
        _obj({"generate": _obj(
            {
                "kind": {"enum": ["box", "laminate", "cylinder", "l_prism"]},
                "divisions": _INT3,
                "lengths": {"type": "array", "items": _POS, "minItems": 3, "maxItems": 3},
                "origin": _VEC3,
                "layers_per_phase": {"type": "integer", "minimum": 1},
                "n_phases": {"type": "integer", "minimum": 1},
                "radius": _POS,
                "axis": {"type": "integer", "minimum": 0, "maximum": 2},
                "n_per_leg": {"type": "integer", "minimum": 1},
                "leg": _POS,
                "thickness": _POS,
                "n_thick": {"type": "integer", "minimum": 1},
            },
            ["kind"],
        )}, ["generate"]),
    ]
}

_TRANSPORT = {"oneOf": [_POS, _MAT3]}
_TRANSPORT_FIELD = {
    "oneOf": [_POS, _MAT3, {"type": "object", "additionalProperties": _TRANSPORT, "minProperties": 1}]
}
_CAPACITY = {"oneOf": [_POS, {"type": "object", "additionalProperties": _POS, "minProperties": 1}]}
_SETS = {"type": "object", "additionalProperties": _NUM}
_PROBES = {"type": "object", "additionalProperties": _VEC3}
_YARN = _obj(
    {"phase": {"type": ["string", "integer"]}, "inlet": {"type": "string"}, "outlet": {"type": "string"}},
    ["phase", "inlet", "outlet"],
)

_MECH_MATERIAL = {
    "oneOf": [
        _obj({"type": {"const": "isotropic"}, "E": _POS, "nu": _NUM}, ["type", "E", "nu"]),
        _obj(
            {
                "type": {"const": "transverse"},
                "E_p": _POS,
                "E_z": _POS,
                "nu_p": _NUM,
                "nu_z": _NUM,
                "G_pz": _POS,
                "axis": _VEC3,
            },
            ["type", "E_p", "E_z", "nu_p", "nu_z", "G_pz"],
        ),
    ]
}

_TRANSIENT_BODY = {
    "conductivity": _TRANSPORT_FIELD,
    "capacity": _CAPACITY,
    "time_scale": _POS,
    "initial": _NUM,
    "fixed": _SETS,
    "flux": _SETS,
}

TRANSIENT_SCHEMA = _obj(
    {
        "schema_version": {"const": SCHEMA_VERSION},
        "mesh": MESH_SCHEMA,
        "name": {"type": "string", "pattern": "^[A-Za-z0-9_-]+$"},
        **_TRANSIENT_BODY,
        "dt": _POS,
        "t_end": _POS,
        "snapshot_stride": {"type": "integer", "minimum": 1},
        "steady_tolerance": _POS,
        "stop_at_steady": {"type": "boolean"},
        "probes": _PROBES,
        "output_dir": {"type": "string"},
    },
    ["schema_version", "mesh", "conductivity", "initial", "dt", "t_end"],
)

DIRECTIONS_SCHEMA = _obj(
    {
        "schema_version": {"const": SCHEMA_VERSION},
        "mesh": MESH_SCHEMA,
        "yarns": {"type": "array", "items": _YARN, "minItems": 1},
        "output_dir": {"type": "string"},
    },
    ["schema_version", "mesh", "yarns"],
)

_MACRO_FIELD = _obj(
    {
        "capacity": {"oneOf": [_POS, _obj({"volume_average": {"type": "object", "additionalProperties": _POS}}, ["volume_average"])]},
        "time_scale": _POS,
        "initial": _NUM,
        "fixed": _SETS,
        "flux": _SETS,
    },
    ["initial"],
)

_DISP = {"type": "array", "items": {"type": ["number", "null"]}, "minItems": 3, "maxItems": 3}

FE2_SCHEMA = _obj(
    {
        "schema_version": {"const": SCHEMA_VERSION},
        "macro_mesh": MESH_SCHEMA,
        "rve": _obj(
            {
                "mesh": MESH_SCHEMA,
                "thermal_mesh": MESH_SCHEMA,
                "moisture_mesh": MESH_SCHEMA,
                "mechanical_mesh": MESH_SCHEMA,
                "bc": {"enum": ["dirichlet", "periodic", "neumann"]},
                "order": {"enum": [1, 2]},
                "matrix_phase": {"type": ["string", "integer"]},
                "thermal": {"type": "object", "additionalProperties": _TRANSPORT, "minProperties": 1},
                "moisture": {"type": "object", "additionalProperties": _TRANSPORT, "minProperties": 1},
                "mechanical": {"type": "object", "additionalProperties": _MECH_MATERIAL, "minProperties": 1},
                "yarns": {"type": "array", "items": _YARN},
            },
            ["mesh", "matrix_phase", "thermal", "moisture", "mechanical"],
        ),
        "thermal": _MACRO_FIELD,
        "moisture": _MACRO_FIELD,
        "degradation": _obj(
            {"beta": {"type": "number", "maximum": 0}, "Tg_K": _POS, "Tg_C": _NUM},
            ["beta"],
            oneOf=[{"required": ["Tg_K"]}, {"required": ["Tg_C"]}],
        ),
        "mechanics": _obj(
            {
                "enabled": {"type": "boolean"},
                "fixed": {"type": "object", "additionalProperties": _DISP},
                "traction": {"type": "object", "additionalProperties": _VEC3},
            },
            ["fixed"],
        ),
        "schedule": _obj(
            {
                "dt": _POS,
                "t_end": _POS,
                "snapshot_stride": {"type": "integer", "minimum": 1},
                "cache_resolution": _POS,
            },
            ["dt", "t_end"],
        ),
        "probes": _PROBES,
        "threads": {"type": "integer", "minimum": 1},
        "output_dir": {"type": "string"},
    },
    ["schema_version", "macro_mesh", "rve", "thermal", "moisture", "degradation", "mechanics", "schedule"],
)


def _where(err: jsonschema.ValidationError) -> str:
    return "/".join(str(p) for p in err.absolute_path) or "<root>"


def validate(data: Any, schema: Mapping) -> None:
    """Raise ConfigError listing every schema violation."""
    validator = jsonschema.Draft202012Validator(schema)
    problems = []
    for err in sorted(validator.iter_errors(data), key=lambda e: list(map(str, e.absolute_path))):
        if err.validator == "oneOf" and err.context:
            # report the closest alternative rather than the bare oneOf failure
            best = jsonschema.exceptions.best_match(err.context)
            problems.append(f"{_where(err)}: {best.message}")
        else:
            problems.append(f"{_where(err)}: {err.message}")
    if problems:
        raise ConfigError(problems)


def load_config(path: str | Path, schema: Mapping) -> dict:
    """Parse and validate a JSON configuration; adds ``_base_dir``."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError([f"cannot read {path}: {exc.strerror}"]) from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError([f"{path}:{exc.lineno}:{exc.colno}: invalid JSON ({exc.msg})"]) from None
    validate(data, schema)
    data = copy.deepcopy(data)
    data["_base_dir"] = str(path.resolve().parent)
    return data


def build_mesh(spec: Mapping, base_dir: str | Path = ".") -> Mesh:
    """Mesh from ``{"path": ...}`` or ``{"generate": {...}}``."""
    if "path" in spec:
        p = Path(spec["path"])
        return parse_mesh(p if p.is_absolute() else Path(base_dir) / p)
    g = spec["generate"]
    kind = g["kind"]
    lengths = tuple(g.get("lengths", (1.0, 1.0, 1.0)))
    div = tuple(g.get("divisions", (2, 2, 2)))
    if kind == "box":
        return generate_box_mesh(div, lengths, tuple(g.get("origin", (0.0, 0.0, 0.0))))
    if kind == "laminate":
        return generate_laminate_rve(g.get("layers_per_phase", 1), div, g.get("n_phases", 2), lengths)
    if kind == "cylinder":
        if "radius" not in g:
            raise ConfigError(["generate: a cylinder mesh needs 'radius'"])
        return generate_cylinder_rve(div, g["radius"], g.get("axis", 2), lengths)
    return generate_l_prism(g.get("n_per_leg", 4), g.get("leg", 1.0), g.get("thickness", 1.0), g.get("n_thick", 2))


def mechanical_material(spec: Mapping):
    """Material object from a ``{"type": ...}`` entry."""
    if spec["type"] == "isotropic":
        return IsotropicElastic(spec["E"], spec["nu"])
    axis = np.asarray(spec.get("axis", (0.0, 0.0, 1.0)), dtype=float)
    axis = tuple(axis / np.linalg.norm(axis))
    return TransverselyIsotropic(spec["E_p"], spec["E_z"], spec["nu_p"], spec["nu_z"], spec["G_pz"], axis)


def transport_value(v):
    """Scalar or 3x3 transport coefficient as a float or array."""
    return float(v) if np.isscalar(v) else np.asarray(v, dtype=float)
