"""Experiment configuration: trainer settings, target spec, output directory."""

from __future__ import annotations

import json
from dataclasses import dataclass, fields
from pathlib import Path

import jsonschema

from .gan.targets import PRESETS, SyntheticTarget
from .gan.trainer import TrainerConfig

_NUM = {"type": "number"}
_POS_INT = {"type": "integer", "minimum": 1}

_COMPONENT = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "hue": _NUM,
        "hue_sigma": {"type": "number", "minimum": 0},
        "sv": {"type": "array", "items": _NUM, "minItems": 2, "maxItems": 2},
        "sv_sigma": {"type": "array", "items": {"type": "number", "minimum": 0}, "minItems": 2, "maxItems": 2},
        "mean": {"type": "array"},
        "kappa": {"type": "number", "minimum": 0},
        "sigma": {"type": "number", "minimum": 0},
    },
}

TARGET_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "preset": {"enum": sorted(PRESETS)},
        "tag": {"enum": ["hsv", "sphere", "spd"]},
        "components": {"type": "array", "items": _COMPONENT, "minItems": 1},
        "weights": {"type": "array", "items": {"type": "number", "minimum": 0}},
        "dims": {"type": "array", "items": _POS_INT, "minItems": 2, "maxItems": 2},
        "seed": {"type": "integer", "minimum": 0},
    },
    "oneOf": [{"required": ["preset"]}, {"required": ["tag", "components"]}],
}

EXPERIMENT_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "manifold-wgan experiment",
    "type": "object",
    "additionalProperties": False,
    "required": ["target", "output_dir"],
    "properties": {
        "target": TARGET_SCHEMA,
        "output_dir": {"type": "string", "minLength": 1},
        "n_train": _POS_INT,
        "lr": {"type": "number", "exclusiveMinimum": 0},
        "batch_size": _POS_INT,
        "n_critic": _POS_INT,
        "gp_lambda": {"type": "number", "minimum": 0},
        "iterations": {"type": "integer", "minimum": 0},
        "seed": {"type": "integer", "minimum": 0},
        "tag": {"enum": ["hsv", "sphere", "spd"]},
        "anchor": {"type": ["array", "null"]},
        "latent_dim": _POS_INT,
        "hidden": {"type": "array", "items": _POS_INT, "minItems": 1},
        "eval_interval": _POS_INT,
        "eval_samples": _POS_INT,
        "eval_method": {"enum": ["exact", "sinkhorn", "auto"]},
        "eval_cost": {"enum": ["geodesic", "anchored"]},
        "betas": {"type": "array", "items": {"type": "number", "minimum": 0, "exclusiveMaximum": 1},
                  "minItems": 2, "maxItems": 2},
        "lr_decay": {"type": "boolean"},
        "checkpoint_every_eval": {"type": "boolean"},
    },
}


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    trainer: TrainerConfig
    target: SyntheticTarget
    output_dir: Path
    n_train: int = 2048


def build_target(spec: dict) -> SyntheticTarget:
    if "preset" in spec:
        target = PRESETS[spec["preset"]](seed=spec.get("seed", 0))
        if "dims" in spec:
            target.dims = tuple(spec["dims"])
        return target
    return SyntheticTarget(spec["tag"], spec["components"], spec.get("weights"),
                           tuple(spec.get("dims", (1, 1))), spec.get("seed", 0))


def parse_experiment(doc: dict) -> ExperimentConfig:
    """Validate against :data:`EXPERIMENT_SCHEMA` and build the typed config."""
    try:
        jsonschema.validate(doc, EXPERIMENT_SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"config invalid at {where}: {exc.message}") from None
    try:
        target = build_target(doc["target"])
        names = {f.name for f in fields(TrainerConfig)}
        kwargs = {k: v for k, v in doc.items() if k in names}
        kwargs.setdefault("tag", target.tag.name.lower())
        trainer = TrainerConfig(**kwargs)
    except (ValueError, KeyError, TypeError) as exc:
        raise ConfigError(f"config invalid: {exc}") from None
    if trainer.geometry is not target.tag:
        raise ConfigError(f"trainer tag {trainer.geometry.label} does not match target {target.tag.label}")
    return ExperimentConfig(trainer, target, Path(doc["output_dir"]), doc.get("n_train", 2048))


def load_experiment(path) -> ExperimentConfig:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: not valid JSON ({exc})") from None
    return parse_experiment(doc)
