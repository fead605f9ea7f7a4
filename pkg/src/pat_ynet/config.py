"""Run configuration: JSON document, schema and thread control."""
from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import List, Optional, Union

import jsonschema

from .geometry import ImagingGeometry
from .ynet import VARIANTS, YNetConfig


@dataclass
class TrainConfig:
    """Optimization settings.  Desk-scale defaults; the original study used
    batch 64 for 1000 epochs."""

    lr: float = 0.005
    batch_size: int = 8
    epochs: int = 60
    seed: int = 0
    checkpoint_interval: int = 0

    def __post_init__(self):
        if self.lr <= 0 or self.batch_size < 1 or self.epochs < 1:
            raise ValueError("lr, batch_size and epochs must be positive")
        if self.checkpoint_interval < 0:
            raise ValueError("checkpoint_interval must be >= 0 (0 = final checkpoint only)")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class RunConfig:
    geometry: ImagingGeometry = field(default_factory=ImagingGeometry)
    model: YNetConfig = field(default_factory=YNetConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    dataset_dir: Optional[str] = None
    mask_paths: List[str] = field(default_factory=list)
    test_count: int = 0
    output_dir: str = "runs"
    deterministic: bool = True

    def to_dict(self) -> dict:
        model = self.model.to_dict()
        model.pop("signal_shape")
        model.pop("image_shape")
        return {
            "geometry": self.geometry.to_dict(),
            "model": model,
            "train": self.train.to_dict(),
            "data": {"dataset_dir": self.dataset_dir, "mask_paths": list(self.mask_paths),
                     "test_count": self.test_count},
            "output_dir": self.output_dir,
            "deterministic": self.deterministic,
        }


def _props(cls, types: dict, exclude=()) -> dict:
    return {f.name: types[f.name] for f in fields(cls) if f.name not in exclude}


_NUM = {"type": "number"}
_POS = {"type": "number", "exclusiveMinimum": 0}
_INT1 = {"type": "integer", "minimum": 1}

RUN_CONFIG_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "pat-ynet run configuration",
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "geometry": {
            "type": "object",
            "additionalProperties": False,
            "properties": _props(ImagingGeometry, {
                "grid_nx": _INT1, "grid_ny": _INT1, "pixel_pitch": _POS, "sound_speed": _POS,
                "sensor_count": _INT1, "sample_rate": _POS, "sample_count": _INT1,
                "center_frequency": _POS, "fractional_bandwidth": _POS}),
        },
        "model": {
            "type": "object",
            "additionalProperties": False,
            "properties": _props(YNetConfig, {
                "base_channels": _INT1, "variant": {"enum": list(VARIANTS)},
                "aux_weight": {"type": "number", "minimum": 0},
                "disconnect_bottleneck": {"type": "boolean"},
                "bn_momentum": {"type": "number", "minimum": 0, "maximum": 1},
                "bn_eps": _POS}, exclude=("signal_shape", "image_shape")),
        },
        "train": {
            "type": "object",
            "additionalProperties": False,
            "properties": _props(TrainConfig, {
                "lr": _POS, "batch_size": _INT1, "epochs": _INT1, "seed": {"type": "integer"},
                "checkpoint_interval": {"type": "integer", "minimum": 0}}),
        },
        "data": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "dataset_dir": {"type": ["string", "null"]},
                "mask_paths": {"type": "array", "items": {"type": "string"}},
                "test_count": {"type": "integer", "minimum": 0},
            },
        },
        "output_dir": {"type": "string"},
        "deterministic": {"type": "boolean"},
    },
}


class ConfigError(ValueError):
    pass


def parse_run_config(doc: dict) -> RunConfig:
    validator = jsonschema.Draft202012Validator(RUN_CONFIG_SCHEMA)
    errors = sorted(validator.iter_errors(doc), key=lambda e: list(e.absolute_path))
    if errors:
        lines = [f"  {'/'.join(map(str, e.absolute_path)) or '<root>'}: {e.message}" for e in errors]
        raise ConfigError("invalid run configuration:\n" + "\n".join(lines))
    try:
        geom = ImagingGeometry(**doc.get("geometry", {}))
        model = YNetConfig(**doc.get("model", {}), signal_shape=geom.sinogram_shape,
                           image_shape=geom.image_shape)
        train = TrainConfig(**doc.get("train", {}))
    except ValueError as exc:
        raise ConfigError(f"invalid run configuration: {exc}") from exc
    data = doc.get("data", {})
    return RunConfig(geometry=geom, model=model, train=train,
                     dataset_dir=data.get("dataset_dir"), mask_paths=list(data.get("mask_paths", [])),
                     test_count=data.get("test_count", 0), output_dir=doc.get("output_dir", "runs"),
                     deterministic=doc.get("deterministic", True))


def load_run_config(path: Optional[Union[str, Path]]) -> RunConfig:
    if path is None:
        return parse_run_config({})
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: not valid JSON ({exc})") from exc
    return parse_run_config(doc)


THREADS_ENV = "PAT_NUM_THREADS"


def configure_threads(deterministic: bool):
    """Limit BLAS threads.  Deterministic mode always pins one thread;
    otherwise ``PAT_NUM_THREADS`` sets the count.  The returned controller
    must be kept alive for the limit to hold."""
    from threadpoolctl import threadpool_limits

    if deterministic:
        return threadpool_limits(limits=1)
    env = os.environ.get(THREADS_ENV)
    return threadpool_limits(limits=int(env)) if env else None
