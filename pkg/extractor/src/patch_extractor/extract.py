"""Feature extraction, layer aggregation, and SFM1 serialization.

SFM1 layout (shared contract with the scoring side):
    magic "SFM1" | version u32=1 | grid_h u32 | grid_w u32 | dim u32 |
    tag_len u32 | tag bytes zero-padded to a 4-byte boundary |
    f32 data, row-major over (row, col, channel); all little-endian.
"""

from __future__ import annotations

import os
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .config import ExtractConfig
from .errors import BadImage, NonFiniteTokens
from .images import rotate_image

SFM_MAGIC = b"SFM1"
SFM_VERSION = 1


@dataclass
class PatchGrid:
    """One extracted feature map, ready to serialize."""

    grid_h: int
    grid_w: int
    dim: int
    data: np.ndarray  # float32 (grid_h, grid_w, dim)
    source_tag: str = ""


def serialize_grid(grid: PatchGrid) -> bytes:
    data = np.ascontiguousarray(grid.data, dtype="<f4")
    if data.shape != (grid.grid_h, grid.grid_w, grid.dim):
        raise ValueError(
            f"data shape {data.shape} does not match declared "
            f"{(grid.grid_h, grid.grid_w, grid.dim)}")
    if not np.all(np.isfinite(data)):
        raise NonFiniteTokens("feature values contain NaN or Inf")
    tag = grid.source_tag.encode("utf-8")
    pad = (-len(tag)) % 4
    header = SFM_MAGIC + struct.pack(
        "<5I", SFM_VERSION, grid.grid_h, grid.grid_w, grid.dim, len(tag))
    return header + tag + b"\x00" * pad + data.tobytes()


def atomic_write(path, payload: bytes) -> None:
    """Write-temp-then-rename so partial files never appear."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(payload)
    os.replace(tmp, path)


def write_grid(grid: PatchGrid, path) -> None:
    atomic_write(path, serialize_grid(grid))


def write_mask_pgm(pixels: np.ndarray, path) -> None:
    pixels = np.asarray(pixels, dtype=bool)
    h, w = pixels.shape
    raster = np.where(pixels, 255, 0).astype(np.uint8)
    atomic_write(path, b"P5\n%d %d\n255\n" % (w, h) + raster.tobytes())


def extract_features(image: np.ndarray, config: ExtractConfig, backbone,
                     source_tag: str = "") -> PatchGrid:
    """Aggregate the configured layer set into one patch grid.

    Mean mode averages token vectors across layers; concat mode stacks
    them along the channel axis in layer order.
    """
    config.validate_for(backbone)
    h, w = image.shape[:2]
    if h != config.resolution or w != config.resolution:
        raise BadImage(
            f"expected a {config.resolution}px square input, got {h}x{w}")
    tokens = np.asarray(backbone.tokens(image), dtype=np.float64)
    if tokens.ndim != 4 or tokens.shape[0] != backbone.n_layers:
        raise NonFiniteTokens(
            f"backbone returned shape {tokens.shape}, expected "
            f"({backbone.n_layers}, grid, grid, dim)")
    picked = tokens[np.asarray(config.layers, dtype=int)]
    if config.aggregation == "mean":
        merged = picked.mean(axis=0)
    else:
        merged = np.concatenate(list(picked), axis=2)
    if not np.all(np.isfinite(merged)):
        raise NonFiniteTokens("aggregated features contain NaN or Inf")
    gh, gw, dim = merged.shape
    expected = config.resolution // backbone.patch_size
    if (gh, gw) != (expected, expected):
        raise NonFiniteTokens(
            f"backbone grid {gh}x{gw} does not match "
            f"resolution/patch = {expected}")
    return PatchGrid(grid_h=gh, grid_w=gw, dim=dim,
                     data=merged.astype(np.float32), source_tag=source_tag)


def augmentation_angles(config: ExtractConfig, image_index: int) -> np.ndarray:
    """Rotation angles for one support image's augmented views.

    Random mode draws uniformly from [0, rotation_max_degrees] with a
    counter-based generator keyed by (seed, image index); grid mode
    spaces them evenly up to the maximum.
    """
    n = config.augmentations
    if n == 0:
        return np.empty(0)
    if config.angle_mode == "grid":
        step = config.rotation_max_degrees / n
        return np.linspace(step, config.rotation_max_degrees, n)
    rng = np.random.Generator(
        np.random.Philox(key=[config.seed, image_index]))
    return rng.uniform(0.0, config.rotation_max_degrees, size=n)


def augment_and_extract(image: np.ndarray, image_index: int,
                        config: ExtractConfig, backbone,
                        tag_prefix: str = "",
                        rotation_enabled: bool = True) -> list[PatchGrid]:
    """Original view plus the configured number of rotated views."""
    grids = [extract_features(image, config, backbone,
                              source_tag=f"{tag_prefix}#a0")]
    if not rotation_enabled:
        return grids
    for angle in augmentation_angles(config, image_index):
        rotated = rotate_image(image, float(angle))
        grids.append(extract_features(
            rotated, config, backbone,
            source_tag=f"{tag_prefix}#a{angle:.4f}"))
    return grids
