"""Synthetic low-rank feature data with planted anomalies.

Normal patches live on a random r-dimensional affine subspace of R^D
plus isotropic Gaussian noise; anomalous images get one rectangular
block of patches displaced along a direction orthogonal to that
subspace.  Everything derives from a counter-based generator keyed by
the seed, so a spec and a seed pin the output bit for bit.

Draw order (fixed; changing it breaks reproducibility):
    1. subspace mean, D draws
    2. basis pre-image, D*r draws, orthonormalized in column order
    3. anomaly direction pre-image, D draws, projected off the basis
    4. per image, in generation order (train, then test normal, then
       test anomalous): coefficients z (cells * r), then noise
       (cells * D).  The noise block is always drawn, even at
       noise_std == 0, so spectra differ across images but not layouts.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import InvalidSpec
from .fileio import (
    FeatureMap,
    GroundTruthMask,
    write_feature_map,
    write_mask_pgm,
)
from .manifest import Manifest, ManifestItem, save_manifest

COEFF_SCALE = 5.0   # std of subspace coefficients; keeps signal >> noise


@dataclass
class SynthSpec:
    """Generation parameters. seed plus spec fully determine the data."""

    dim: int = 64
    normal_rank: int = 6
    grid_h: int = 10
    grid_w: int = 10
    noise_std: float = 0.0
    anomaly_magnitude: float = 1.0
    anomaly_block: tuple[int, int, int, int] = (2, 2, 4, 4)  # top, left, h, w
    n_train: int = 10
    n_test_normal: int = 10
    n_test_anomalous: int = 10
    seed: int = 0
    pixels_per_patch: int = 14  # mask / pixel-map scale per grid cell

    def validate(self) -> None:
        if self.dim < 1 or self.grid_h < 1 or self.grid_w < 1:
            raise InvalidSpec("dim and grid sides must be >= 1")
        if not 1 <= self.normal_rank <= self.dim:
            raise InvalidSpec(
                f"normal_rank {self.normal_rank} outside [1, {self.dim}]")
        if self.noise_std < 0.0:
            raise InvalidSpec(f"noise_std must be >= 0, got {self.noise_std}")
        if self.anomaly_magnitude < 0.0:
            raise InvalidSpec("anomaly_magnitude must be >= 0")
        if self.normal_rank >= self.dim and self.anomaly_magnitude > 0.0:
            raise InvalidSpec(
                "no direction orthogonal to a full-rank subspace")
        top, left, bh, bw = self.anomaly_block
        if bh < 1 or bw < 1 or top < 0 or left < 0 \
                or top + bh > self.grid_h or left + bw > self.grid_w:
            raise InvalidSpec(
                f"anomaly block {self.anomaly_block} does not fit "
                f"{self.grid_h}x{self.grid_w}")
        if self.n_train < 1:
            raise InvalidSpec("need at least one training image")
        if self.n_test_normal < 0 or self.n_test_anomalous < 0:
            raise InvalidSpec("test counts must be >= 0")
        if self.pixels_per_patch < 1:
            raise InvalidSpec("pixels_per_patch must be >= 1")

    def to_dict(self) -> dict:
        return {
            "dim": self.dim,
            "normal_rank": self.normal_rank,
            "grid_h": self.grid_h,
            "grid_w": self.grid_w,
            "noise_std": self.noise_std,
            "anomaly_magnitude": self.anomaly_magnitude,
            "anomaly_block": list(self.anomaly_block),
            "n_train": self.n_train,
            "n_test_normal": self.n_test_normal,
            "n_test_anomalous": self.n_test_anomalous,
            "seed": self.seed,
            "pixels_per_patch": self.pixels_per_patch,
        }

    @classmethod
    def from_dict(cls, raw: dict) -> "SynthSpec":
        unknown = set(raw) - set(cls.__dataclass_fields__)
        if unknown:
            raise InvalidSpec(f"unknown spec keys: {sorted(unknown)}")
        merged = dict(raw)
        if "anomaly_block" in merged:
            merged["anomaly_block"] = tuple(merged["anomaly_block"])
        spec = cls(**merged)
        spec.validate()
        return spec


@dataclass
class SynthDataset:
    """In-memory generation result, ready to write or score directly."""

    spec: SynthSpec
    mean: np.ndarray               # (D,)
    basis: np.ndarray              # (D, r) orthonormal
    anomaly_direction: np.ndarray  # (D,) unit, orthogonal to basis
    train_maps: list[FeatureMap] = field(default_factory=list)
    test_maps: list[FeatureMap] = field(default_factory=list)
    test_labels: list[int] = field(default_factory=list)
    test_masks: list[GroundTruthMask | None] = field(default_factory=list)


def _orthonormal_basis(rng: np.random.Generator, dim: int,
                       rank: int) -> np.ndarray:
    raw = rng.normal(size=(dim, rank))
    basis = np.empty((dim, rank))
    for j in range(rank):
        v = raw[:, j].copy()
        for i in range(j):
            v -= (basis[:, i] @ v) * basis[:, i]
        basis[:, j] = v / np.linalg.norm(v)
    return basis


def _off_subspace_unit(rng: np.random.Generator,
                       basis: np.ndarray) -> np.ndarray:
    v = rng.normal(size=basis.shape[0])
    v -= basis @ (basis.T @ v)
    norm = np.linalg.norm(v)
    if norm < 1e-12:
        raise InvalidSpec("random direction degenerate; raise dim - rank")
    return v / norm


def _image_rows(rng: np.random.Generator, spec: SynthSpec, mean: np.ndarray,
                basis: np.ndarray) -> np.ndarray:
    cells = spec.grid_h * spec.grid_w
    z = rng.normal(scale=COEFF_SCALE, size=(cells, spec.normal_rank))
    noise = rng.normal(size=(cells, spec.dim))  # drawn even at std 0
    return mean + z @ basis.T + spec.noise_std * noise


def generate(spec: SynthSpec) -> SynthDataset:
    """Produce a dataset deterministically from the spec."""
    spec.validate()
    rng = np.random.Generator(np.random.Philox(key=spec.seed))

    mean = rng.normal(size=spec.dim)
    basis = _orthonormal_basis(rng, spec.dim, spec.normal_rank)
    if spec.anomaly_magnitude > 0.0 and spec.normal_rank < spec.dim:
        direction = _off_subspace_unit(rng, basis)
    else:
        rng.normal(size=spec.dim)  # keep the draw schedule fixed
        direction = np.zeros(spec.dim)

    ds = SynthDataset(spec=spec, mean=mean, basis=basis,
                      anomaly_direction=direction)
    gh, gw, dim = spec.grid_h, spec.grid_w, spec.dim
    top, left, bh, bw = spec.anomaly_block
    ppp = spec.pixels_per_patch

    for i in range(spec.n_train):
        rows = _image_rows(rng, spec, mean, basis)
        ds.train_maps.append(FeatureMap(
            gh, gw, dim, rows.reshape(gh, gw, dim).astype(np.float32),
            f"synth/{spec.seed}/train_{i}#a0"))

    for i in range(spec.n_test_normal):
        rows = _image_rows(rng, spec, mean, basis)
        ds.test_maps.append(FeatureMap(
            gh, gw, dim, rows.reshape(gh, gw, dim).astype(np.float32),
            f"synth/{spec.seed}/good_{i}#a0"))
        ds.test_labels.append(0)
        ds.test_masks.append(None)

    for i in range(spec.n_test_anomalous):
        grid = _image_rows(rng, spec, mean, basis).reshape(gh, gw, dim)
        grid[top:top + bh, left:left + bw] += \
            spec.anomaly_magnitude * ds.anomaly_direction
        ds.test_maps.append(FeatureMap(
            gh, gw, dim, grid.astype(np.float32),
            f"synth/{spec.seed}/bad_{i}#a0"))
        ds.test_labels.append(1)
        pixels = np.zeros((gh * ppp, gw * ppp), dtype=bool)
        pixels[top * ppp:(top + bh) * ppp, left * ppp:(left + bw) * ppp] = True
        ds.test_masks.append(GroundTruthMask(
            height=gh * ppp, width=gw * ppp, pixels=pixels))

    return ds


def dataset_manifest(ds: SynthDataset, base_dir) -> Manifest:
    """Manifest skeleton for a written dataset (file names only).

    Callers are expected to write each map and mask under the names
    used here; write_dataset does both in one step.
    """
    spec = ds.spec
    h = spec.grid_h * spec.pixels_per_patch
    w = spec.grid_w * spec.pixels_per_patch
    items = []
    for i in range(len(ds.train_maps)):
        items.append(ManifestItem(
            role="train", image_id=f"train_{i}",
            feature_file=f"train_{i}.sfm", mask_file=None,
            image_label=0, original_height=h, original_width=w))
    for i, (label, mask) in enumerate(zip(ds.test_labels, ds.test_masks)):
        items.append(ManifestItem(
            role="test", image_id=f"test_{i}",
            feature_file=f"test_{i}.sfm",
            mask_file=f"test_{i}_mask.pgm" if mask is not None else None,
            image_label=label, original_height=h, original_width=w))
    return Manifest(category=f"synth_{spec.seed}", items=items,
                    base_dir=base_dir, extra={"synth_spec": spec.to_dict()})


def write_dataset(ds: SynthDataset, out_dir) -> Manifest:
    """Write maps, masks and manifest.json under out_dir."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = dataset_manifest(ds, out_dir)
    for fmap, item in zip(ds.train_maps, manifest.train_items):
        write_feature_map(fmap, out_dir / item.feature_file)
    test_items = manifest.test_items
    for fmap, mask, item in zip(ds.test_maps, ds.test_masks, test_items):
        write_feature_map(fmap, out_dir / item.feature_file)
        if mask is not None:
            write_mask_pgm(mask, out_dir / item.mask_file)
    save_manifest(manifest, out_dir / "manifest.json")
    return manifest
