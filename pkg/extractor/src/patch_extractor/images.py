"""Image loading, geometry normalization, and rotation augmentation.

Policy for arbitrary input sizes: resize the shorter side to the target
resolution (bilinear), then center-crop to a square.  Ground-truth
masks follow the same geometry with nearest-neighbor resampling so they
stay binary.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError
from scipy import ndimage

from .errors import BadImage


def load_image(path) -> np.ndarray:
    """RGB float32 in [0, 1], shape (H, W, 3)."""
    try:
        with Image.open(path) as img:
            rgb = img.convert("RGB")
            data = np.asarray(rgb, dtype=np.float32) / 255.0
    except FileNotFoundError:
        raise BadImage(f"image file {path} does not exist") from None
    except UnidentifiedImageError:
        raise BadImage(f"{path} is not a readable image") from None
    if data.ndim != 3 or data.shape[2] != 3:
        raise BadImage(f"unexpected image shape {data.shape} for {path}")
    return data


def _scaled_size(h: int, w: int, target: int) -> tuple[int, int]:
    if h <= w:
        return target, max(target, round(w * target / h))
    return max(target, round(h * target / w)), target


def _center_crop(arr: np.ndarray, size: int) -> np.ndarray:
    h, w = arr.shape[:2]
    top = (h - size) // 2
    left = (w - size) // 2
    return arr[top:top + size, left:left + size]


def preprocess(image: np.ndarray, resolution: int) -> np.ndarray:
    """Shorter side to resolution, bilinear, then center crop."""
    h, w = image.shape[:2]
    if h < 1 or w < 1:
        raise BadImage(f"degenerate image {h}x{w}")
    nh, nw = _scaled_size(h, w, resolution)
    pil = Image.fromarray(
        (np.clip(image, 0.0, 1.0) * 255.0 + 0.5).astype(np.uint8))
    resized = np.asarray(
        pil.resize((nw, nh), Image.BILINEAR), dtype=np.float32) / 255.0
    return np.ascontiguousarray(_center_crop(resized, resolution))


def preprocess_mask(mask: np.ndarray, resolution: int) -> np.ndarray:
    """Same geometry as preprocess, nearest-neighbor, boolean output."""
    mask = np.asarray(mask, dtype=bool)
    h, w = mask.shape
    nh, nw = _scaled_size(h, w, resolution)
    pil = Image.fromarray(mask.astype(np.uint8) * 255)
    resized = np.asarray(pil.resize((nw, nh), Image.NEAREST)) > 0
    return np.ascontiguousarray(_center_crop(resized, resolution))


def rotate_image(image: np.ndarray, angle_degrees: float) -> np.ndarray:
    """Rotate around the center; bilinear; borders filled by reflection."""
    if angle_degrees == 0.0:
        return image.copy()
    out = ndimage.rotate(image, angle_degrees, axes=(1, 0), reshape=False,
                         order=1, mode="reflect")
    return np.clip(out, 0.0, 1.0).astype(np.float32)
