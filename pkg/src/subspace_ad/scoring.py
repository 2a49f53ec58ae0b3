"""Patch residual scoring, image-level tail aggregation, and localization maps.

The scoring path never materializes the D x D projector: centered features
are projected into the r-dimensional basis and reconstructed back, so the
cost per patch is O(D r).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, EmptyMap, InvalidTarget
from .fileio import FeatureMap
from .model import SubspaceModel

# A patch whose residual norm is below this fraction of its centered norm
# lies in the retained subspace up to floating-point noise; its score is
# reported as exactly 0 so degenerate full-rank models produce clean ties.
SPAN_REL_TOL = 1e-8


@dataclass
class AnomalyMap:
    """Patch-level squared-residual scores on the feature grid."""

    grid_h: int
    grid_w: int
    scores: np.ndarray  # float64, shape (grid_h, grid_w), all >= 0

    @property
    def cells(self) -> int:
        return self.grid_h * self.grid_w


@dataclass
class PixelMap:
    """Min-max normalized per-pixel anomaly values in [0, 1]."""

    height: int
    width: int
    values: np.ndarray


@dataclass
class ImageScore:
    value: float
    rho: float


@dataclass
class PipelineResult:
    image_score: ImageScore
    pixel_map: PixelMap
    anomaly_map: AnomalyMap
    raw_pixel_scores: np.ndarray  # smoothed, un-normalized grid


def patch_scores(model: SubspaceModel, features: FeatureMap) -> AnomalyMap:
    """Squared reconstruction residual of every patch.

    score(p) = ||(x_p - mu) - C C^T (x_p - mu)||^2, zero exactly when the
    centered vector lies in span(C) to within SPAN_REL_TOL.
    """
    if features.dim != model.dim:
        raise DimensionMismatch(
            f"features have dim {features.dim}, model expects {model.dim}")
    x = features.patch_matrix()
    centered = x - model.mean
    coeff = centered @ model.basis
    residual = centered - coeff @ model.basis.T
    raw = np.einsum("ij,ij->i", residual, residual)
    centered_sq = np.einsum("ij,ij->i", centered, centered)
    scores = np.where(raw <= (SPAN_REL_TOL ** 2) * centered_sq, 0.0, raw)
    return AnomalyMap(grid_h=features.grid_h, grid_w=features.grid_w,
                      scores=scores.reshape(features.grid_h, features.grid_w))


def tail_count(rho: float, cells: int) -> int:
    """Number of scores in the rho-percent upper tail, never zero.

    ceil with a small tolerance so that exact products like 1% of 100 are
    not pushed up a bucket by floating-point representation error.
    """
    k = rho * cells / 100.0
    return max(1, math.ceil(k - 1e-9))


def image_score(amap: AnomalyMap, rho: float) -> ImageScore:
    """Tail value-at-risk: mean of the top max(1, ceil(rho% of cells)) scores."""
    if amap.cells == 0:
        raise EmptyMap("anomaly map has no cells")
    if not 0.0 < rho <= 100.0:
        raise ValueError(f"rho must be in (0, 100], got {rho}")
    flat = amap.scores.reshape(-1)
    m = tail_count(rho, flat.size)
    top = np.partition(flat, flat.size - m)[flat.size - m:]
    return ImageScore(value=float(top.mean()), rho=float(rho))


def upsample_bilinear(amap: AnomalyMap, target_h: int, target_w: int) -> np.ndarray:
    """Half-pixel-center bilinear interpolation of the patch grid.

    Source coordinate for destination pixel i is (i + 0.5) * scale - 0.5,
    clamped into the grid.
    """
    grid = np.asarray(amap.scores, dtype=np.float64)
    h, w = grid.shape
    if target_h < h or target_w < w or target_h < 1 or target_w < 1:
        raise InvalidTarget(
            f"target {target_h}x{target_w} below grid {h}x{w}")

    src_y = np.clip((np.arange(target_h) + 0.5) * (h / target_h) - 0.5, 0, h - 1)
    src_x = np.clip((np.arange(target_w) + 0.5) * (w / target_w) - 0.5, 0, w - 1)
    y0 = np.floor(src_y).astype(int)
    x0 = np.floor(src_x).astype(int)
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    wy = (src_y - y0)[:, None]
    wx = (src_x - x0)[None, :]
    return ((1 - wy) * (1 - wx) * grid[np.ix_(y0, x0)]
            + (1 - wy) * wx * grid[np.ix_(y0, x1)]
            + wy * (1 - wx) * grid[np.ix_(y1, x0)]
            + wy * wx * grid[np.ix_(y1, x1)])


def gaussian_kernel(sigma: float) -> np.ndarray:
    radius = math.ceil(4.0 * sigma)
    xs = np.arange(-radius, radius + 1, dtype=np.float64)
    kernel = np.exp(-(xs ** 2) / (2.0 * sigma * sigma))
    return kernel / kernel.sum()


def gaussian_smooth(grid: np.ndarray, sigma: float) -> np.ndarray:
    """Separable Gaussian blur, kernel radius ceil(4*sigma), reflect padding.

    Reflection mirrors about the edge without repeating the edge sample
    (numpy 'reflect' semantics).
    """
    if sigma <= 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    grid = np.asarray(grid, dtype=np.float64)
    kernel = gaussian_kernel(sigma)
    radius = (kernel.size - 1) // 2
    out = grid
    for axis in (0, 1):
        pad = [(0, 0), (0, 0)]
        pad[axis] = (radius, radius)
        padded = np.pad(out, pad, mode="reflect")
        windows = np.lib.stride_tricks.sliding_window_view(
            padded, kernel.size, axis=axis)
        out = windows @ kernel
    return out


def normalize_minmax(grid: np.ndarray) -> PixelMap:
    """Affine map onto [0, 1]; a constant grid maps to all zeros."""
    grid = np.asarray(grid, dtype=np.float64)
    lo = float(grid.min())
    hi = float(grid.max())
    if hi == lo:
        values = np.zeros_like(grid)
    else:
        values = (grid - lo) / (hi - lo)
    return PixelMap(height=grid.shape[0], width=grid.shape[1], values=values)


def score_image_pipeline(model: SubspaceModel, features: FeatureMap,
                         target_h: int, target_w: int,
                         rho: float, sigma: float) -> PipelineResult:
    """Full per-image scoring: residual grid -> TVaR, upsample, smooth, normalize.

    The image score is computed on the raw patch map, before upsampling or
    smoothing. raw_pixel_scores (pre-normalization) feed pooled pixel
    metrics; the normalized PixelMap is for export and visualization.
    """
    amap = patch_scores(model, features)
    score = image_score(amap, rho)
    upsampled = upsample_bilinear(amap, target_h, target_w)
    smoothed = gaussian_smooth(upsampled, sigma)
    pixel_map = normalize_minmax(smoothed)
    return PipelineResult(image_score=score, pixel_map=pixel_map,
                          anomaly_map=amap, raw_pixel_scores=smoothed)
