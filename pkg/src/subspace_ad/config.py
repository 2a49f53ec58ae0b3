"""Run configuration shared by the CLI and the evaluation API."""

from __future__ import annotations

import json
from dataclasses import dataclass, field, fields
from pathlib import Path

_NORMALIZATION_MODES = ("raw", "per-image")


@dataclass
class RunConfig:
    """Pipeline hyperparameters with benchmark defaults."""

    tau: float = 0.99
    rho: float = 1.0              # TVaR tail percent
    sigma: float = 4.0            # Gaussian blur, pixels
    resolution: int = 672
    shots: int = 1                # k support images per sample
    seeds: list[int] = field(default_factory=lambda: [0])
    pro_fpr_limit: float = 0.3
    normalization: str = "raw"    # pixel metrics on raw | per-image maps

    def validate(self) -> None:
        if not 0.0 < self.tau <= 1.0:
            raise ValueError(f"tau must be in (0, 1], got {self.tau}")
        if not 0.0 < self.rho <= 100.0:
            raise ValueError(f"rho must be in (0, 100], got {self.rho}")
        if self.sigma <= 0.0:
            raise ValueError(f"sigma must be positive, got {self.sigma}")
        if self.resolution < 1:
            raise ValueError(f"resolution must be >= 1, got {self.resolution}")
        if self.shots < 0:
            raise ValueError(f"shots must be >= 0, got {self.shots}")
        if not self.seeds:
            raise ValueError("seeds list must not be empty")
        if not 0.0 < self.pro_fpr_limit <= 1.0:
            raise ValueError(
                f"pro_fpr_limit must be in (0, 1], got {self.pro_fpr_limit}")
        if self.normalization not in _NORMALIZATION_MODES:
            raise ValueError(
                f"normalization must be one of {_NORMALIZATION_MODES}, "
                f"got {self.normalization!r}")

    @classmethod
    def from_dict(cls, raw: dict) -> "RunConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(raw) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        cfg = cls(**raw)
        cfg.seeds = [int(s) for s in cfg.seeds]
        cfg.validate()
        return cfg

    @classmethod
    def from_file(cls, path) -> "RunConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def to_dict(self) -> dict:
        return {
            "tau": self.tau,
            "rho": self.rho,
            "sigma": self.sigma,
            "resolution": self.resolution,
            "shots": self.shots,
            "seeds": list(self.seeds),
            "pro_fpr_limit": self.pro_fpr_limit,
            "normalization": self.normalization,
        }
