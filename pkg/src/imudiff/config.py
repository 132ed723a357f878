"""Pipeline configuration: defaults, profiles, JSON schema and hashing.

A config file is a JSON object whose keys override the defaults section by
section. Paths are resolved against ``--out``; the environment variables
``IMUDIFF_CORPUS``, ``IMUDIFF_CHECKPOINTS`` and ``IMUDIFF_OUTPUTS`` override
the path entries only.
"""

from __future__ import annotations

import copy
import hashlib
import json
import os
from pathlib import Path

import jsonschema

from .corpus import FAMILIES

DEFAULTS = {
    "seed": 0,
    "workers": 1,
    "paths": {"corpus": "corpus", "checkpoints": "checkpoints", "outputs": "outputs"},
    "embeddings": None,
    "allow_stub": True,
    "corpus": {
        "classes": list(FAMILIES),
        "count_per_class": 20,
        "min_seconds": 3.0,
        "max_seconds": 10.0,
        "fps": 20.0,
        "position_noise": 0.0,
    },
    "schedule": {"preset": "desk"},
    "loss_weights": {"lambda_pos": 1.0, "lambda_vel": 1.0, "lambda_foot": 1.0, "lambda_acc": 0.0},
    "train": {
        "n_frames": 60,
        "crop_stride": 20,
        "steps": 1500,
        "batch": 32,
        "lr": 1e-3,
        "optimizer": "adam",
        "momentum": 0.9,
        "beta2": 0.999,
        "clip_norm": None,
        "lr_schedule": "constant",
        "settle_steps": 2500,
        "settle_lr": 3e-4,
        "hidden": 256,
        "n_blocks": 2,
        "temb_dim": 32,
    },
    "finetune": {"steps": 1000, "lr": 3e-4, "lambda_acc": 1.0, "allow_zero_acc": False},
    "sample": {"n_frames": 60, "per_prompt": 1, "prompts": None},
    "imu": {
        "placements": None,
        "gravity": {"g": 9.81, "up_axis": [0.0, 1.0, 0.0]},
        "target_fps": None,
        "accel_noise": 0.0,
        "gyro_noise": 0.0,
        "smooth_window": 5,
    },
    "eval": {
        "window": 40,
        "overlap": 0.5,
        "repeats": 10,
        "tau": 0.45,
        "channels": "accel",
        "classifier": "logistic",
        "class_map": None,
        "max_projection_points": 2000,
    },
    "realworld": {
        "target_fps": 20.0,
        "time_unit": "ms",
        "acc_unit": "m/s2",
        "gyr_unit": "rad/s",
        "acc_pattern": "acc_*.csv",
        "gyr_pattern": "gyr_*.csv",
        "axis_map": {},
    },
}

# overrides applied on top of DEFAULTS for each --profile
PROFILES = {
    "full": {},
    "fast": {
        "corpus": {"count_per_class": 6},
        "train": {"steps": 200, "settle_steps": 0, "hidden": 64, "batch": 16},
        "finetune": {"steps": 100},
        "eval": {"repeats": 3},
        "schedule": {"preset": "test"},
    },
}

_num = {"type": "number"}
_pos = {"type": "number", "exclusiveMinimum": 0}
_nonneg = {"type": "number", "minimum": 0}
_posint = {"type": "integer", "minimum": 1}
_vec3 = {"type": "array", "items": _num, "minItems": 3, "maxItems": 3}


def _obj(props, required=()):
    return {"type": "object", "properties": props, "required": list(required), "additionalProperties": False}


SCHEMA = _obj({
    "seed": {"type": "integer", "minimum": 0},
    "workers": _posint,
    "paths": _obj({k: {"type": "string"} for k in ("corpus", "checkpoints", "outputs")}),
    "embeddings": {"type": ["string", "null"]},
    "allow_stub": {"type": "boolean"},
    "corpus": _obj({
        "classes": {"type": "array", "items": {"enum": list(FAMILIES)}, "minItems": 1, "uniqueItems": True},
        "count_per_class": _posint,
        "min_seconds": _pos,
        "max_seconds": _pos,
        "fps": _pos,
        "position_noise": _nonneg,
    }),
    "schedule": {
        "oneOf": [
            _obj({"preset": {"enum": ["test", "experiment", "desk", "long"]}}, ["preset"]),
            _obj({"T": _posint, "kind": {"enum": ["linear", "cosine"]}, "beta_min": _pos, "beta_max": _pos}, ["T"]),
        ]
    },
    "loss_weights": _obj({k: _nonneg for k in ("lambda_pos", "lambda_vel", "lambda_foot", "lambda_acc")}),
    "train": _obj({
        "n_frames": {"type": "integer", "minimum": 3},
        "crop_stride": _posint,
        "steps": {"type": "integer", "minimum": 0},
        "batch": _posint,
        "lr": _nonneg,
        "optimizer": {"enum": ["sgd", "adam"]},
        "momentum": {"type": "number", "minimum": 0, "exclusiveMaximum": 1},
        "beta2": {"type": "number", "minimum": 0, "exclusiveMaximum": 1},
        "clip_norm": {"type": ["number", "null"], "exclusiveMinimum": 0},
        "lr_schedule": {"enum": ["constant", "cosine"]},
        "settle_steps": {"type": "integer", "minimum": 0},
        "settle_lr": _nonneg,
        "hidden": _posint,
        "n_blocks": {"type": "integer", "minimum": 0},
        "temb_dim": {"type": "integer", "minimum": 2, "multipleOf": 2},
    }),
    "finetune": _obj({"steps": {"type": "integer", "minimum": 0}, "lr": _nonneg, "lambda_acc": _nonneg,
                      "allow_zero_acc": {"type": "boolean"}}),
    "sample": _obj({"n_frames": {"type": "integer", "minimum": 3}, "per_prompt": _posint,
                    "prompts": {"type": ["string", "null"]}}),
    "imu": _obj({
        "placements": {"type": ["array", "null"], "items": _obj({
            "name": {"type": "string"}, "joint": {"type": "string"},
            "bone": {"type": "array", "items": {"type": "string"}, "minItems": 2, "maxItems": 2},
            "ref": {"oneOf": [_vec3, {"type": "array", "items": {"type": "string"}, "minItems": 2, "maxItems": 2}]},
            "offset": _vec3,
            "local_rotation": {"type": "array", "items": _num, "minItems": 4, "maxItems": 4},
        }, ["name", "joint", "bone"])},
        "gravity": _obj({"g": _pos, "up_axis": _vec3}),
        "target_fps": {"type": ["number", "null"], "exclusiveMinimum": 0},
        "accel_noise": _nonneg,
        "gyro_noise": _nonneg,
        "smooth_window": {"type": "integer", "minimum": 0},
    }),
    "eval": _obj({
        "window": _posint,
        "overlap": {"type": "number", "minimum": 0, "exclusiveMaximum": 1},
        "repeats": _posint,
        "tau": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
        "channels": {"enum": ["accel", "gyro", "all"]},
        "classifier": {"enum": ["logistic", "mlp"]},
        "class_map": {"type": ["object", "null"], "additionalProperties": {"type": "string"}},
        "max_projection_points": _posint,
    }),
    "realworld": _obj({
        "target_fps": _pos,
        "time_unit": {"enum": ["s", "ms", "us", "ns"]},
        "acc_unit": {"enum": ["m/s2", "g"]},
        "gyr_unit": {"enum": ["rad/s", "deg/s"]},
        "acc_pattern": {"type": "string"},
        "gyr_pattern": {"type": "string"},
        "axis_map": {"type": "object", "additionalProperties": {
            "type": "array", "items": _vec3, "minItems": 3, "maxItems": 3}},
    }),
})

PATH_ENV = {"corpus": "IMUDIFF_CORPUS", "checkpoints": "IMUDIFF_CHECKPOINTS", "outputs": "IMUDIFF_OUTPUTS"}


class ConfigError(ValueError):
    pass


def deep_merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict) and k not in ("schedule", "axis_map", "class_map"):
            out[k] = deep_merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def validate(cfg: dict) -> dict:
    try:
        jsonschema.validate(cfg, SCHEMA)
    except jsonschema.ValidationError as e:
        where = "/".join(str(p) for p in e.absolute_path) or "<root>"
        raise ConfigError(f"config error at {where}: {e.message}") from None
    c = cfg["corpus"]
    if c["min_seconds"] > c["max_seconds"]:
        raise ConfigError("corpus.min_seconds must not exceed corpus.max_seconds")
    w = cfg["imu"]["smooth_window"]
    if w > 1 and (w % 2 == 0 or w < 3):
        raise ConfigError("imu.smooth_window must be 0, 1 or an odd number >= 3")
    return cfg


def load_config(path=None, profile: str = "full", seed: int | None = None) -> dict:
    """Defaults, then the profile, then the file, then ``--seed``; validated."""
    if profile not in PROFILES:
        raise ConfigError(f"unknown profile {profile!r}")
    cfg = deep_merge(DEFAULTS, PROFILES[profile])
    if path is not None:
        try:
            user = json.loads(Path(path).read_text())
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {path}") from None
        except json.JSONDecodeError as e:
            raise ConfigError(f"config file is not valid JSON: {e}") from None
        if not isinstance(user, dict):
            raise ConfigError("config must be a JSON object")
        cfg = deep_merge(cfg, user)
    if seed is not None:
        cfg["seed"] = int(seed)
    return validate(cfg)


def resolve_paths(cfg: dict, out_dir) -> dict:
    out = Path(out_dir)
    paths = {}
    for key, rel in cfg["paths"].items():
        env = os.environ.get(PATH_ENV[key])
        p = Path(env) if env else Path(rel)
        paths[key] = p if p.is_absolute() else out / p
    return paths


def config_hash(cfg: dict) -> str:
    blob = json.dumps(cfg, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()[:16]
