"""Experiment configuration files.

An experiment file is YAML with three top-level sections besides the schema
version::

    schema_version: 1
    output_dir: runs/demo
    train:            # skill discovery (TrainConfig)
      env: {kind: toroidal_grid, width: 8, height: 8, slip_prob: 0.0, seed: 0}
      skills: {num_skills: 16, episode_length: 4, episodes_per_reset: 10, ...}
      predictor: {family: counts, alpha: 0.1, decay: 0.995, ...}
      policy: {step_size: 0.1, eps_start: 1.0, eps_end: 0.05, ...}
      total_skill_episodes: 100000
      eval_every: 1000
      seed: 0
    meta:             # hierarchical phase (MetaConfig)
      meta_action_cost: 0.0
      ...

Every key is optional; ``default_document()`` lists all of them with their
defaults. Unknown keys are rejected with their full dotted path.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import yaml

from . import __version__
from .errors import ConfigError
from .hrl import MetaConfig
from .trainer import TrainConfig, build_dataclass, config_hash

SCHEMA_VERSION = 1
TOP_LEVEL_KEYS = ("schema_version", "output_dir", "train", "meta")


@dataclass(frozen=True)
class ExperimentConfig:
    train: TrainConfig = field(default_factory=TrainConfig)
    meta: MetaConfig = field(default_factory=MetaConfig)
    output_dir: str = "runs/default"

    def to_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "output_dir": self.output_dir,
            "train": self.train.to_dict(),
            "meta": self.meta.to_dict(),
        }

    def hash(self) -> str:
        d = self.to_dict()
        d.pop("output_dir")
        return config_hash(d)

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        if not isinstance(d, dict):
            raise ConfigError("experiment config must be a mapping")
        for key in d:
            if key not in TOP_LEVEL_KEYS:
                raise ConfigError(f"unknown config key '{key}'")
        version = d.get("schema_version", SCHEMA_VERSION)
        if version != SCHEMA_VERSION:
            raise ConfigError(f"unsupported schema_version {version!r} (expected {SCHEMA_VERSION})")
        train = d.get("train") or {}
        if not isinstance(train, dict):
            raise ConfigError("'train' must be a mapping")
        try:
            return cls(
                train=TrainConfig.from_dict(train, "train."),
                meta=build_dataclass(MetaConfig, d.get("meta") or {}, "meta"),
                output_dir=str(d.get("output_dir", "runs/default")),
            )
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc


def default_document() -> dict:
    return ExperimentConfig().to_dict()


def apply_override(doc: dict, assignment: str) -> dict:
    """Apply ``dotted.key=value`` to a config document; the value is parsed as YAML."""
    if "=" not in assignment:
        raise ConfigError(f"override {assignment!r} is not of the form key=value")
    key, raw = assignment.split("=", 1)
    parts = key.strip().split(".")
    node = doc
    for p in parts[:-1]:
        node = node.setdefault(p, {})
        if not isinstance(node, dict):
            raise ConfigError(f"override {key!r}: '{p}' is not a section")
    node[parts[-1]] = yaml.safe_load(raw)
    return doc


def load_document(path) -> dict:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"config file {path} is not valid YAML: {exc}") from exc
    return doc or {}


def load_config(path, overrides=()) -> ExperimentConfig:
    doc = load_document(path) if path is not None else {}
    for assignment in overrides:
        apply_override(doc, assignment)
    return ExperimentConfig.from_dict(doc)


def dump_config(config: ExperimentConfig, path) -> None:
    header = f"# config_hash: {config.hash()}\n# artifact_version: {__version__}\n"
    Path(path).write_text(header + yaml.safe_dump(config.to_dict(), sort_keys=False), encoding="utf-8")
