"""JSON model specs, fitted-model files and CSV tables.

A model spec is a JSON object::

    {
      "response": "yn",
      "components": [
        {"family": "normal", "formulas": {"mean": "~1+x+xsq", "scale": "~1"}},
        {"family": "normal", "formulas": {"mean": "~1+x+xsq", "scale": "~1"}}
      ],
      "gating": "~1",
      "networks": [{"name": "d", "layers": [{"units": 64, "activation": "relu",
                                            "bias": false}, ...]}],
      "train": {"optimizer": {"name": "rmsprop", "lr": 0.01}, "epochs": 1000,
                "batch_size": 32, "validation_split": 0.1, "patience": 100,
                "early_stopping": true, "seed": 42}
    }

Point-mass components are written ``{"family": "pointmass", "at": 0}``.
Unknown keys anywhere are rejected.
"""
from __future__ import annotations

import csv
import json
import math

import jsonschema
import numpy as np

from .deepnet import LayerSpec
from .distributions import Family
from .exceptions import DataError, SpecError, VersionError
from .formula import render
from .mixture import Component, MixtureModel, MixtureSpec
from .train import History, TrainConfig

FORMAT_VERSION = 1

_LAYER = {
    "type": "object",
    "properties": {
        "units": {"type": "integer", "minimum": 1},
        "activation": {"enum": ["relu", "softplus", "identity"]},
        "bias": {"type": "boolean"},
    },
    "required": ["units"],
    "additionalProperties": False,
}

SPEC_SCHEMA = {
    "type": "object",
    "properties": {
        "response": {"type": "string"},
        "components": {
            "type": "array",
            "minItems": 1,
            "items": {
                "type": "object",
                "properties": {
                    "family": {"enum": ["normal", "laplace", "poisson", "bernoulli", "pointmass"]},
                    "at": {"type": "number"},
                    "formulas": {"type": "object", "additionalProperties": {"type": "string"}},
                },
                "required": ["family"],
                "additionalProperties": False,
            },
        },
        "gating": {"type": "string"},
        "networks": {
            "type": "array",
            "items": {
                "type": "object",
                "properties": {
                    "name": {"type": "string"},
                    "layers": {"type": "array", "minItems": 1, "items": _LAYER},
                },
                "required": ["name", "layers"],
                "additionalProperties": False,
            },
        },
        "train": {
            "type": "object",
            "properties": {
                "optimizer": {
                    "type": "object",
                    "properties": {
                        "name": {"enum": ["sgd", "rmsprop", "adam"]},
                        "lr": {"type": "number", "exclusiveMinimum": 0},
                        "rho": {"type": "number"},
                        "beta1": {"type": "number"},
                        "beta2": {"type": "number"},
                        "eps": {"type": "number"},
                    },
                    "required": ["name"],
                    "additionalProperties": False,
                },
                "epochs": {"type": "integer", "minimum": 1},
                "batch_size": {"type": "integer", "minimum": 1},
                "validation_split": {"type": "number", "minimum": 0, "exclusiveMaximum": 1},
                "patience": {"type": "integer", "minimum": 0},
                "early_stopping": {"type": "boolean"},
                "seed": {"type": "integer"},
            },
            "additionalProperties": False,
        },
    },
    "required": ["components"],
    "additionalProperties": False,
}


def validate_spec(obj) -> None:
    """Raise :class:`SpecError` naming the offending field if ``obj`` breaks the schema."""
    try:
        jsonschema.validate(obj, SPEC_SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise SpecError(f"spec field {where}: {exc.message}") from None


def spec_to_json(spec: MixtureSpec) -> dict:
    comps = []
    for c in spec.components:
        entry = c.family.to_json()
        if c.family.n_params:
            entry["formulas"] = {n: render(f) for n, f in zip(c.names, c.formulas)}
        comps.append(entry)
    out = {"components": comps, "gating": render(spec.gating)}
    if spec.networks:
        out["networks"] = [{"name": name, "layers": [l.to_json() for l in layers]}
                           for name, layers in spec.networks]
    return out


def spec_from_json(obj) -> MixtureSpec:
    """Build a :class:`MixtureSpec` from the ``components``/``gating``/``networks`` keys."""
    validate_spec(obj)
    comps = []
    for i, c in enumerate(obj["components"], start=1):
        family = Family.from_json(c)
        given = dict(c.get("formulas", {}))
        extra = set(given) - set(family.param_names)
        missing = [n for n in family.param_names if n not in given]
        if extra or missing:
            raise SpecError(f"component {i} ({family}): formulas must be given for "
                            f"{list(family.param_names)}; missing {missing}, unknown {sorted(extra)}")
        comps.append(Component(family, [given[n] for n in family.param_names]))
    nets = {}
    for n in obj.get("networks", []):
        if n["name"] in nets:
            raise SpecError(f"network {n['name']!r} declared twice")
        nets[n["name"]] = [LayerSpec.from_json(l) for l in n["layers"]]
    return MixtureSpec(comps, obj.get("gating", "~1"), nets)


def read_spec_file(path):
    """Load and validate a spec file.

    Returns
    -------
    (MixtureSpec, TrainConfig, response name or None, raw dict)
    """
    try:
        with open(path, encoding="utf-8") as fh:
            obj = json.load(fh)
    except OSError as exc:
        raise SpecError(f"cannot read spec {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise SpecError(f"spec {path} is not valid JSON: {exc.msg} (line {exc.lineno})") from None
    spec = spec_from_json(obj)
    config = TrainConfig.from_json(obj.get("train"))
    return spec, config, obj.get("response"), obj


def model_to_json(model: MixtureModel, history: History, spec_echo: dict) -> dict:
    return {
        "version": FORMAT_VERSION,
        "spec": spec_echo,
        "theta": [float(v) for v in model.theta],
        "index_map": {k: [s.start, s.stop] for k, s in model.index_map.items()},
        "history": history.to_json(),
        "train_ranges": {k: list(v) for k, v in model.ranges.items()},
        "column_moments": model.moments,
        "seed": model.seed,
    }


def model_from_json(obj):
    """Inverse of :func:`model_to_json`: ``(MixtureModel, History, spec_echo)``."""
    version = obj.get("version") if isinstance(obj, dict) else None
    if version != FORMAT_VERSION:
        raise VersionError(f"model file version {version!r} is not supported "
                           f"(expected {FORMAT_VERSION})")
    try:
        spec = spec_from_json(obj["spec"])
        model = MixtureModel(spec, obj["train_ranges"], obj.get("column_moments"), obj["seed"])
        layout = {k: [s.start, s.stop] for k, s in model.index_map.items()}
        if layout != obj["index_map"]:
            raise DataError("model file index map does not match its spec")
        model.set_theta(obj["theta"])
        history = History.from_json(obj["history"])
    except KeyError as exc:
        raise DataError(f"model file lacks key {exc.args[0]!r}") from None
    return model, history, obj["spec"]


def save_json(obj, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=1, allow_nan=False)
        fh.write("\n")


def load_json(path):
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise DataError(f"{path} is not valid JSON: {exc.msg}") from None


def read_csv(path) -> dict[str, np.ndarray]:
    """Numeric CSV with a mandatory header row, as ``{column: float array}``."""
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise DataError(f"cannot read data {path}: {exc.strerror}") from None
    if not rows or not rows[0]:
        raise DataError(f"{path}: missing header row")
    header = [h.strip() for h in rows[0]]
    if len(set(header)) != len(header):
        raise DataError(f"{path}: duplicate column names in header")
    body = [r for r in rows[1:] if r]
    cols = {h: np.empty(len(body)) for h in header}
    for i, row in enumerate(body, start=2):
        if len(row) != len(header):
            raise DataError(f"{path}: line {i} has {len(row)} fields, expected {len(header)}")
        for h, v in zip(header, row):
            try:
                cols[h][i - 2] = float(v)
            except ValueError:
                raise DataError(f"{path}: column {h!r} line {i}: {v!r} is not numeric") from None
    return cols


def _fmt(v) -> str:
    if isinstance(v, str):
        return v
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    v = float(v)
    # repr is the shortest string that reads back to the same double
    return repr(v) if math.isfinite(v) else ("nan" if v != v else ("inf" if v > 0 else "-inf"))


def write_csv(path, columns: dict) -> None:
    """Write equal-length columns with a header; floats in shortest round-trip form."""
    names = list(columns)
    data = [np.asarray(columns[n]) if not isinstance(columns[n], list) else columns[n]
            for n in names]
    n = len(data[0]) if data else 0
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(names)
        for i in range(n):
            w.writerow([_fmt(col[i]) for col in data])
