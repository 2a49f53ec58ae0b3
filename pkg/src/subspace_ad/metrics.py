"""Detection metrics: ranking scores, pixel pooling, and region overlap.

All ranking metrics share one tie convention: samples with equal score
form a single group, and every threshold cut happens between groups,
never inside one.  AUROC grants half credit to tied pairs, average
precision treats a tie group as one step, and the overlap curve walks
tie groups as single jump segments.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import ndimage

from .config import RunConfig
from .errors import (
    EmptyInput,
    ManifestError,
    NonFiniteValue,
    NoRegions,
    OneClassOnly,
    ShapeMismatch,
)
from .fileio import read_feature_map, read_mask_pgm
from .manifest import Manifest
from .model import SubspaceModel
from .scoring import score_image_pipeline

HIST_BINS = 4096


def _validate_labeled(scores: np.ndarray, labels: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    scores = np.asarray(scores, dtype=np.float64).ravel()
    labels = np.asarray(labels).ravel()
    if scores.size == 0:
        raise EmptyInput("no scored samples")
    if scores.shape != labels.shape:
        raise ShapeMismatch(
            f"scores ({scores.size}) and labels ({labels.size}) differ in length")
    if not np.all(np.isfinite(scores)):
        raise NonFiniteValue("scores contain NaN or infinity")
    uniq = np.unique(labels)
    if not np.all(np.isin(uniq, (0, 1))):
        raise ValueError(f"labels must be 0 or 1, got values {uniq}")
    labels = labels.astype(np.int64)
    if uniq.size < 2:
        raise OneClassOnly("need at least one positive and one negative sample")
    return scores, labels


def _tie_groups(sorted_scores: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Start and end (inclusive) indices of equal-score runs."""
    change = np.nonzero(np.diff(sorted_scores))[0]
    starts = np.concatenate(([0], change + 1))
    ends = np.concatenate((change, [sorted_scores.size - 1]))
    return starts, ends


def auroc(scores, labels) -> float:
    """Area under the ROC curve with half credit for tied pairs.

    Equals the Mann-Whitney statistic: the probability that a random
    positive outscores a random negative, counting ties as 1/2.
    """
    scores, labels = _validate_labeled(scores, labels)
    order = np.argsort(scores, kind="stable")
    s = scores[order]
    y = labels[order]
    starts, ends = _tie_groups(s)
    pos_cum = np.concatenate(([0], np.cumsum(y)))
    pos_g = pos_cum[ends + 1] - pos_cum[starts]
    size_g = ends - starts + 1
    neg_g = size_g - pos_g
    neg_below = np.concatenate(([0], np.cumsum(neg_g)))[:-1]
    n_pos = pos_g.sum()
    n_neg = neg_g.sum()
    pairs = np.sum(pos_g * (neg_below + 0.5 * neg_g))
    return float(pairs / (n_pos * n_neg))


def average_precision(scores, labels) -> float:
    """Step-wise area under the precision-recall curve.

    Thresholds sweep tie-group boundaries from high score to low; each
    group contributes its positives at the precision reached after the
    whole group is admitted.
    """
    scores, labels = _validate_labeled(scores, labels)
    order = np.argsort(-scores, kind="stable")
    s = scores[order]
    y = labels[order]
    starts, ends = _tie_groups(s)
    pos_cum = np.concatenate(([0], np.cumsum(y)))
    tp_after = pos_cum[ends + 1]
    admitted = ends + 1
    pos_g = pos_cum[ends + 1] - pos_cum[starts]
    n_pos = pos_cum[-1]
    return float(np.sum(pos_g * (tp_after / admitted)) / n_pos)


def _pool_pixels(score_maps, masks) -> tuple[np.ndarray, np.ndarray]:
    if len(score_maps) != len(masks):
        raise ShapeMismatch(
            f"{len(score_maps)} score maps but {len(masks)} masks")
    if not score_maps:
        raise EmptyInput("no maps to pool")
    flat_scores = []
    flat_labels = []
    for sm, mk in zip(score_maps, masks):
        sm = np.asarray(sm, dtype=np.float64)
        mk = np.asarray(mk, dtype=bool)
        if sm.shape != mk.shape:
            raise ShapeMismatch(
                f"score map {sm.shape} does not match mask {mk.shape}")
        flat_scores.append(sm.ravel())
        flat_labels.append(mk.ravel())
    return np.concatenate(flat_scores), np.concatenate(flat_labels)


def pixel_auroc(score_maps, masks, method: str = "exact") -> float:
    """AUROC over all pixels of a test set pooled into one ranking.

    ``method="hist"`` buckets scores into ``HIST_BINS`` equal-width bins
    and ranks bins instead of pixels; within-bin pixels count as tied.
    """
    scores, labels = _pool_pixels(score_maps, masks)
    if method == "exact":
        return auroc(scores, labels.astype(np.int64))
    if method != "hist":
        raise ValueError(f"method must be 'exact' or 'hist', got {method!r}")
    if not np.all(np.isfinite(scores)):
        raise NonFiniteValue("scores contain NaN or infinity")
    n_pos = int(np.count_nonzero(labels))
    n_neg = scores.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise OneClassOnly("need both anomalous and normal pixels")
    lo = scores.min()
    hi = scores.max()
    if lo == hi:
        return 0.5
    edges = np.linspace(lo, hi, HIST_BINS + 1)
    pos_g, _ = np.histogram(scores[labels], bins=edges)
    neg_g, _ = np.histogram(scores[~labels], bins=edges)
    neg_below = np.concatenate(([0], np.cumsum(neg_g)))[:-1]
    pairs = np.sum(pos_g * (neg_below + 0.5 * neg_g))
    return float(pairs / (n_pos * n_neg))


def connected_components(pixels) -> list[np.ndarray]:
    """8-connected anomalous regions as arrays of flat pixel indices.

    Regions come back ordered by their first pixel in scanline order;
    indices within a region are ascending.
    """
    pixels = np.asarray(pixels, dtype=bool)
    if pixels.ndim != 2:
        raise ShapeMismatch(f"mask must be 2-D, got shape {pixels.shape}")
    structure = np.ones((3, 3), dtype=int)
    labeled, count = ndimage.label(pixels, structure=structure)
    flat = labeled.ravel()
    regions = []
    for lab in range(1, count + 1):
        regions.append(np.nonzero(flat == lab)[0])
    regions.sort(key=lambda idx: idx[0])
    return regions


def pro_score(score_maps, masks, fpr_limit: float = 0.3) -> float:
    """Per-region overlap averaged over the ROC sweep up to ``fpr_limit``.

    Every ground-truth region contributes equally regardless of size:
    a pixel in region R adds 1/(K*|R|) overlap when admitted, where K is
    the region count across the whole set.  Normal pixels drive the
    false positive rate.  The curve starts at (0, 0), tie groups enter
    as single segments, and the trapezoid integral is clipped at
    ``fpr_limit`` then divided by it.
    """
    if not 0.0 < fpr_limit <= 1.0:
        raise ValueError(f"fpr_limit must be in (0, 1], got {fpr_limit}")
    if len(score_maps) != len(masks):
        raise ShapeMismatch(
            f"{len(score_maps)} score maps but {len(masks)} masks")
    if not score_maps:
        raise EmptyInput("no maps to evaluate")

    region_scores = []
    normal_scores = []
    for sm, mk in zip(score_maps, masks):
        sm = np.asarray(sm, dtype=np.float64)
        mk = np.asarray(mk, dtype=bool)
        if sm.shape != mk.shape:
            raise ShapeMismatch(
                f"score map {sm.shape} does not match mask {mk.shape}")
        if not np.all(np.isfinite(sm)):
            raise NonFiniteValue("scores contain NaN or infinity")
        flat = sm.ravel()
        for region in connected_components(mk):
            region_scores.append(flat[region])
        normal_scores.append(flat[~mk.ravel()])
    if not region_scores:
        raise NoRegions("no anomalous regions in any mask")
    normal = np.concatenate(normal_scores)
    if normal.size == 0:
        raise OneClassOnly("no normal pixels to measure false positives")

    k = len(region_scores)
    anom = np.concatenate(region_scores)
    overlap_w = np.concatenate(
        [np.full(r.size, 1.0 / (k * r.size)) for r in region_scores])
    scores = np.concatenate((anom, normal))
    ov_w = np.concatenate((overlap_w, np.zeros(normal.size)))
    fp_w = np.concatenate((np.zeros(anom.size), np.full(normal.size, 1.0 / normal.size)))

    order = np.argsort(-scores, kind="stable")
    s = scores[order]
    cum_ov = np.cumsum(ov_w[order])
    cum_fp = np.cumsum(fp_w[order])
    _, ends = _tie_groups(s)
    xs = np.concatenate(([0.0], cum_fp[ends]))
    ys = np.concatenate(([0.0], cum_ov[ends]))
    # cumulative rounding can leave the endpoint marginally off 1.0
    if xs[-1] < 1.0:
        xs = np.concatenate((xs, [1.0]))
        ys = np.concatenate((ys, [ys[-1]]))

    j = np.searchsorted(xs, fpr_limit)
    if xs[j] > fpr_limit:
        t = (fpr_limit - xs[j - 1]) / (xs[j] - xs[j - 1])
        y_cut = ys[j - 1] + t * (ys[j] - ys[j - 1])
        xs = np.concatenate((xs[:j], [fpr_limit]))
        ys = np.concatenate((ys[:j], [y_cut]))
    else:
        xs = xs[:j + 1]
        ys = ys[:j + 1]
    area = float(np.sum((xs[1:] - xs[:-1]) * (ys[1:] + ys[:-1])) / 2.0)
    return area / fpr_limit


@dataclass
class EvalReport:
    """Per-sample and mean metrics for one category run."""

    category: str
    k: int
    samples: list[dict] = field(default_factory=list)
    mean: dict = field(default_factory=dict)
    config: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "category": self.category,
            "k": self.k,
            "samples": self.samples,
            "mean": self.mean,
            "config": self.config,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "EvalReport":
        raw = json.loads(text)
        return cls(category=raw["category"], k=raw["k"],
                   samples=raw["samples"], mean=raw["mean"],
                   config=raw["config"])

    def save(self, path) -> None:
        Path(path).write_text(self.to_json())


_METRIC_KEYS = ("i_auroc", "i_aupr", "p_auroc", "pro")


def mask_for_item(item, base_dir, height: int, width: int) -> np.ndarray:
    """Ground-truth pixels for a test item; normal items get all-False."""
    if item.mask_file is None:
        if item.image_label == 1:
            raise ManifestError(
                f"test item {item.image_id} is anomalous but has no mask")
        return np.zeros((height, width), dtype=bool)
    mask = read_mask_pgm(Path(base_dir) / item.mask_file)
    if (mask.height, mask.width) != (height, width):
        raise ShapeMismatch(
            f"mask for {item.image_id} is {mask.height}x{mask.width}, "
            f"expected {height}x{width}")
    return mask.pixels


def compute_sample_metrics(image_scores, image_labels, pixel_maps,
                           pixel_masks, config: RunConfig) -> dict:
    """All four metrics for one sample; undefined ones come back None."""
    out = {}
    try:
        out["i_auroc"] = auroc(image_scores, image_labels)
        out["i_aupr"] = average_precision(image_scores, image_labels)
    except OneClassOnly:
        out["i_auroc"] = None
        out["i_aupr"] = None
    try:
        out["p_auroc"] = pixel_auroc(pixel_maps, pixel_masks)
    except OneClassOnly:
        out["p_auroc"] = None
    try:
        out["pro"] = pro_score(pixel_maps, pixel_masks,
                               fpr_limit=config.pro_fpr_limit)
    except (NoRegions, OneClassOnly):
        out["pro"] = None
    return out


def mean_over_samples(samples: list[dict]) -> dict:
    mean = {}
    for key in _METRIC_KEYS:
        values = [s[key] for s in samples if s.get(key) is not None]
        mean[key] = float(np.mean(values)) if values else None
    return mean


def _score_sample(model: SubspaceModel, manifest: Manifest,
                  config: RunConfig) -> dict:
    image_scores = []
    image_labels = []
    pixel_maps = []
    pixel_masks = []
    for item in manifest.test_items:
        fmap = read_feature_map(manifest.resolve(item.feature_file))
        result = score_image_pipeline(
            model, fmap, item.original_height, item.original_width,
            rho=config.rho, sigma=config.sigma)
        image_scores.append(result.image_score.value)
        image_labels.append(item.image_label)
        if config.normalization == "per-image":
            pixel_maps.append(result.pixel_map.values)
        else:
            pixel_maps.append(result.raw_pixel_scores)
        pixel_masks.append(mask_for_item(
            item, manifest.base_dir,
            item.original_height, item.original_width))
    return compute_sample_metrics(
        image_scores, image_labels, pixel_maps, pixel_masks, config)


def evaluate_category(manifest: Manifest, models: list[SubspaceModel],
                      config: RunConfig) -> EvalReport:
    """Score every test item under each fitted sample and aggregate.

    ``models`` holds one subspace per sample (one per seed for few-shot
    runs).  Metrics that need both classes or at least one region come
    back as null for every sample when the test set cannot support them.
    """
    if not models:
        raise EmptyInput("no fitted models to evaluate")
    if not manifest.test_items:
        raise EmptyInput("manifest has no test items")
    config.validate()

    samples = []
    for i, model in enumerate(models):
        entry = {"seed": config.seeds[i] if i < len(config.seeds) else None}
        entry.update(_score_sample(model, manifest, config))
        samples.append(entry)

    mean = mean_over_samples(samples)
    return EvalReport(category=manifest.category, k=config.shots,
                      samples=samples, mean=mean, config=config.to_dict())
