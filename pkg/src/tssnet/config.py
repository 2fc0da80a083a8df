"""Pipeline configuration: built-in defaults < config file < command flags.

The config file is a YAML tree whose sections mirror the pipeline stages.
Unknown keys anywhere in the tree are rejected up front, so typos fail
before any work starts.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .errors import ValidationError


def _from_mapping(cls, data: dict, path: str):
    if not isinstance(data, dict):
        raise ValidationError(f"config section {path!r} must be a mapping, got {type(data).__name__}")
    known = {f.name for f in dataclasses.fields(cls)}
    unknown = set(data) - known
    if unknown:
        raise ValidationError(f"unknown config key {path}.{sorted(unknown)[0]}")
    return cls(**{f.name: data[f.name] for f in dataclasses.fields(cls) if f.name in data})


@dataclass
class SynthgenConfig:
    image_size: int = 450
    particle_coefficient: float = 0.5
    base_luminance: float = 0.08
    scatter_gain: float = 0.25
    blob_sigma_min: float = 1.0
    blob_sigma_max: float = 3.0
    noise_sigma: float = 0.01
    per_class: int = 200


@dataclass
class IngestConfig:
    rate_fps: float = 4.0
    blur_threshold: float = 50.0
    crop_side: int = 450


@dataclass
class DataConfig:
    val_fraction: float = 0.1
    split_strategy: str = "stratified_random"
    scale_to_unit: bool = True
    channel_means: list = field(default_factory=lambda: [0.485, 0.456, 0.406])
    channel_stds: list = field(default_factory=lambda: [0.229, 0.224, 0.225])


@dataclass
class NetworkConfig:
    architecture: str = "alexnet"


@dataclass
class TrainerConfig:
    optimizer: str = "adam"
    learning_rate: float = 0.000005
    batch_size: int = 50
    epochs: int = 50
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8


@dataclass
class PipelineConfig:
    seed: int = 0
    synthgen: SynthgenConfig = field(default_factory=SynthgenConfig)
    ingest: IngestConfig = field(default_factory=IngestConfig)
    datamodel: DataConfig = field(default_factory=DataConfig)
    network: NetworkConfig = field(default_factory=NetworkConfig)
    trainer: TrainerConfig = field(default_factory=TrainerConfig)

    @classmethod
    def from_dict(cls, data: dict) -> "PipelineConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValidationError(f"unknown config key {sorted(unknown)[0]}")
        sections = {}
        for f in dataclasses.fields(cls):
            if f.name not in data:
                continue
            if f.name == "seed":
                sections["seed"] = int(data["seed"])
            else:
                sections[f.name] = _from_mapping(f.default_factory, data[f.name], f.name)
        return cls(**sections)


def load_config(path: str | Path | None) -> PipelineConfig:
    """Parse a YAML config file; None yields the built-in defaults."""
    if path is None:
        return PipelineConfig()
    with open(path) as f:
        data = yaml.safe_load(f)
    if data is None:
        return PipelineConfig()
    if not isinstance(data, dict):
        raise ValidationError(f"config file {path} must contain a mapping at top level")
    return PipelineConfig.from_dict(data)
