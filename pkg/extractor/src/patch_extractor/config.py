"""Extraction configuration."""

from __future__ import annotations

import json
from dataclasses import dataclass, field, fields
from pathlib import Path

from .errors import InvalidConfig

_ANGLE_MODES = ("random", "grid")
_AGGREGATIONS = ("mean", "concat")


@dataclass
class ExtractConfig:
    """Knobs for feature extraction and support-set augmentation.

    rotation_disabled lists categories where orientation itself is
    meaningful, so rotated support views would poison the model.
    """

    backbone: str = "dinov2_vitg14"
    layers: list[int] = field(default_factory=lambda: [22, 23, 24, 25, 26, 27, 28])
    resolution: int = 672
    patch_size: int = 14
    augmentations: int = 30
    rotation_max_degrees: float = 345.0
    rotation_disabled: list[str] = field(default_factory=lambda: ["transistor"])
    seed: int = 0
    angle_mode: str = "random"
    aggregation: str = "mean"

    def validate(self) -> None:
        if self.resolution < 1:
            raise InvalidConfig(f"resolution must be >= 1, got {self.resolution}")
        if self.patch_size < 1:
            raise InvalidConfig(f"patch_size must be >= 1, got {self.patch_size}")
        if self.resolution % self.patch_size != 0:
            raise InvalidConfig(
                f"resolution {self.resolution} not divisible by "
                f"patch size {self.patch_size}")
        if not self.layers:
            raise InvalidConfig("layer set must not be empty")
        if any(l < 0 for l in self.layers):
            raise InvalidConfig(f"negative layer index in {self.layers}")
        if len(set(self.layers)) != len(self.layers):
            raise InvalidConfig(f"duplicate layer index in {self.layers}")
        if self.augmentations < 0:
            raise InvalidConfig("augmentations must be >= 0")
        if not 0.0 < self.rotation_max_degrees < 360.0:
            raise InvalidConfig(
                f"rotation_max_degrees must be in (0, 360), "
                f"got {self.rotation_max_degrees}")
        if self.angle_mode not in _ANGLE_MODES:
            raise InvalidConfig(
                f"angle_mode must be one of {_ANGLE_MODES}, "
                f"got {self.angle_mode!r}")
        if self.aggregation not in _AGGREGATIONS:
            raise InvalidConfig(
                f"aggregation must be one of {_AGGREGATIONS}, "
                f"got {self.aggregation!r}")

    def validate_for(self, backbone) -> None:
        """Checks that need the resolved backbone: patch fit, layer range."""
        self.validate()
        if backbone.patch_size != self.patch_size:
            raise InvalidConfig(
                f"config expects patch size {self.patch_size} but backbone "
                f"uses {backbone.patch_size}")
        bad = [l for l in self.layers if l >= backbone.n_layers]
        if bad:
            raise InvalidConfig(
                f"layer indices {bad} out of range for a "
                f"{backbone.n_layers}-layer backbone")

    @classmethod
    def from_dict(cls, raw: dict) -> "ExtractConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(raw) - known
        if unknown:
            raise InvalidConfig(f"unknown config keys: {sorted(unknown)}")
        cfg = cls(**raw)
        cfg.layers = [int(l) for l in cfg.layers]
        cfg.validate()
        return cfg

    @classmethod
    def from_file(cls, path) -> "ExtractConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def to_dict(self) -> dict:
        return {
            "backbone": self.backbone,
            "layers": list(self.layers),
            "resolution": self.resolution,
            "patch_size": self.patch_size,
            "augmentations": self.augmentations,
            "rotation_max_degrees": self.rotation_max_degrees,
            "rotation_disabled": list(self.rotation_disabled),
            "seed": self.seed,
            "angle_mode": self.angle_mode,
            "aggregation": self.aggregation,
        }
