"""Experiment configuration and output files.

Configs are JSON documents validated against :data:`CONFIG_SCHEMA`.  Every
output file starts with a provenance line ``# config_hash=<sha256> seed=<n>``
(CSV) or carries a ``provenance`` object (JSON); with the same config and
seed the files are reproduced byte for byte.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
from pathlib import Path

import jsonschema
import numpy as np

from .billiard import BilliardConfig, default_config
from .fields import FIELDS, gk_toy_observable
from .shift import cylinder_mean, toy_phi
from .slowfast import DrivenVectorField, product_field

_NUM_LIST = {"type": "array", "items": {"type": "number"}, "minItems": 1}

CONFIG_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "system": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "type": {"enum": ["toy", "billiard"]},
                "geometry": {
                    "type": "object",
                    "required": ["disks"],
                    "properties": {
                        "disks": {"type": "array", "minItems": 1, "items": {
                            "type": "object", "required": ["center", "radius"],
                            "properties": {"center": {"type": "array", "items": {"type": "number"},
                                                      "minItems": 2, "maxItems": 2},
                                           "radius": {"type": "number", "exclusiveMinimum": 0}}}},
                        "horizon_cap": {"type": "number", "exclusiveMinimum": 0},
                        "symmetry_required": {"type": "boolean"},
                    },
                },
            },
            "required": ["type"],
        },
        "field": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "name": {"enum": sorted(FIELDS)},
                "g": {"enum": ["cos", "one"]},
                "h": {"enum": ["phi", "phi_plus_half_shift", "cos_theta"]},
                "psi": {"type": "object", "patternProperties": {"^-?[0-9]+$": {"type": "number"}},
                        "additionalProperties": False},
                "fbar": {"enum": ["neg_sin", "zero"]},
            },
        },
        "x0": _NUM_LIST,
        "eps": _NUM_LIST,
        "T": {"type": "number", "exclusiveMinimum": 0},
        "substeps": {"type": "integer", "minimum": 1},
        "record_every": {"type": "integer", "minimum": 1},
        "n_orbits": {"type": "integer", "minimum": 1},
        "n_paths": {"type": "integer", "minimum": 1},
        "chunk": {"type": "integer", "minimum": 1},
        "dt": {"type": "number", "exclusiveMinimum": 0},
        "sigma": {"type": "number", "minimum": 0},
        "greenkubo": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "x_grid": {"type": "array", "items": _NUM_LIST},
                "l_max": {"type": "integer", "minimum": 0},
                "k_max": {"type": "integer", "minimum": 0},
                "n_samples": {"type": "integer", "minimum": 2},
                "method": {"enum": ["symmetrized", "invertible"]},
            },
        },
        "criteria": {"type": "array", "items": {"type": "integer", "minimum": 1, "maximum": 11}},
        "sizes": {"type": "object", "additionalProperties": {"type": "number"}},
        "seed": {"type": "integer", "minimum": 0},
        "output_dir": {"type": "string"},
    },
}

DEFAULTS = {
    "system": {"type": "toy"},
    "field": {"name": "toy_error"},
    "x0": [0.5],
    "eps": [1e-2],
    "T": 1.0,
    "substeps": 4,
    "record_every": 10,
    "n_orbits": 100,
    "n_paths": 1000,
    "chunk": 1000,
    "dt": 1e-3,
    "greenkubo": {"x_grid": [[0.0]], "l_max": 20, "k_max": 20, "n_samples": 100_000},
}


class ConfigError(ValueError):
    pass


def load_config(path: str | Path | None) -> dict:
    if path is None:
        raw = {}
    else:
        try:
            raw = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return validate_config(raw)


def validate_config(raw: dict) -> dict:
    try:
        jsonschema.validate(raw, CONFIG_SCHEMA)
    except jsonschema.ValidationError as exc:
        raise ConfigError(f"config error at {list(exc.absolute_path)}: {exc.message}") from exc
    cfg = json.loads(json.dumps(DEFAULTS))
    for k, v in raw.items():
        if isinstance(v, dict) and isinstance(cfg.get(k), dict) and k != "field":
            cfg[k].update(v)
        else:
            cfg[k] = v
    f = cfg["field"]
    if "name" not in f and not {"g", "h", "psi", "fbar"} <= set(f):
        raise ConfigError("field needs either 'name' or all of g, h, psi, fbar")
    return cfg


def config_hash(cfg: dict) -> str:
    return hashlib.sha256(json.dumps(cfg, sort_keys=True, separators=(",", ":")).encode()).hexdigest()


def billiard_geometry(cfg: dict) -> BilliardConfig:
    g = cfg["system"].get("geometry")
    return default_config() if g is None else BilliardConfig.from_dict(g)


_G = {"cos": (np.cos, 1.0, 1.0), "one": (lambda x: np.ones_like(x), 1.0, 0.0)}
_FBAR = {"neg_sin": (lambda x: -np.sin(x), lambda x: (-np.cos(x))[..., None], 1.0),
         "zero": (lambda x: np.zeros_like(x), lambda x: np.zeros(np.shape(x) + (1,)), 0.0)}


def build_field(cfg: dict) -> DrivenVectorField:
    f = cfg["field"]
    if "name" in f:
        return FIELDS[f["name"]]()
    g, g_sup, g_lip = _G[f["g"]]
    fbar, dfbar, fbar_sup = _FBAR[f["fbar"]]
    psi = {int(k): float(v) for k, v in f["psi"].items()}
    if f["h"] == "cos_theta":
        h = lambda base: np.cos(base.outgoing_angle().astype(float))
        h_sup, h_mean = 1.0, np.pi / 4
    else:
        obs = toy_phi if f["h"] == "phi" else gk_toy_observable
        h = lambda base: obs(base.window)
        h_sup = 1.0 if f["h"] == "phi" else 1.5
        h_mean = cylinder_mean(lambda w: obs(w), obs.depth)
    try:
        return product_field(g, h, psi, fbar, dfbar=dfbar, g_sup=g_sup, g_lip=g_lip, h_sup=h_sup,
                             h_mean=h_mean, fbar_sup=fbar_sup, name="custom")
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def _fmt(x) -> str:
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return repr(float(x))


def csv_text(header: list[str], rows, provenance: str) -> str:
    buf = io.StringIO()
    buf.write(f"# {provenance}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([_fmt(v) for v in r])
    return buf.getvalue()


def provenance(cfg: dict, seed: int) -> str:
    return f"config_hash={config_hash(cfg)} seed={seed}"


def write_table(path: Path, header, rows, cfg: dict, seed: int, fmt: str = "csv") -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if fmt == "json":
        path = path.with_suffix(".json")
        doc = {"provenance": {"config_hash": config_hash(cfg), "seed": seed},
               "columns": list(header), "rows": [[float(v) for v in r] for r in rows]}
        path.write_text(json.dumps(doc, indent=1) + "\n")
    else:
        path = path.with_suffix(".csv")
        path.write_text(csv_text(list(header), rows, provenance(cfg, seed)))
    return path


def write_json(path: Path, payload: dict, cfg: dict, seed: int) -> Path:
    path = Path(path).with_suffix(".json")
    path.parent.mkdir(parents=True, exist_ok=True)
    doc = {"provenance": {"config_hash": config_hash(cfg), "seed": seed}, **payload}
    path.write_text(json.dumps(doc, indent=2, sort_keys=True, default=float) + "\n")
    return path
