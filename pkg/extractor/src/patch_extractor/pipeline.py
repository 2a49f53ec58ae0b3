"""End-to-end extraction for one dataset category.

Writes, under the output directory:

    features/...   one SFM file per manifest entry
    masks/...      ground-truth masks resampled to the processed frame
    manifest.json  the document from build_manifest

Every write goes through a temp file and an atomic rename, so an
interrupted run never leaves a truncated file behind.
"""

from __future__ import annotations

import logging
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError

from .backbone import resolve_backbone
from .config import ExtractConfig
from .dataset import (build_manifest, list_images, mask_source,
                      rotation_enabled, save_manifest)
from .errors import BadImage, DatasetLayout
from .extract import augment_and_extract, extract_features, write_grid, \
    write_mask_pgm
from .images import load_image, preprocess, preprocess_mask

log = logging.getLogger(__name__)


def _load_mask(path: Path) -> np.ndarray:
    try:
        with Image.open(path) as img:
            return np.asarray(img.convert("L")) > 0
    except FileNotFoundError as exc:
        raise DatasetLayout(f"missing ground-truth mask {path}") from exc
    except UnidentifiedImageError as exc:
        raise BadImage(f"cannot decode mask {path}") from exc


def _extract_train(root: Path, category: str, out_dir: Path,
                   config: ExtractConfig, backbone) -> int:
    images = list_images(root / category / "train" / "good")
    if not images:
        raise DatasetLayout(f"no train/good images under {root / category}")
    enabled = rotation_enabled(category, config)
    written = 0
    for index, path in enumerate(images):
        processed = preprocess(load_image(path), config.resolution)
        grids = augment_and_extract(
            processed, index, config, backbone,
            tag_prefix=f"{category}/train/good/{path.stem}",
            rotation_enabled=enabled)
        for view, grid in enumerate(grids):
            target = out_dir / "features" / "train" / "good" / \
                f"{path.stem}_v{view:02d}.sfm"
            write_grid(grid, target)
            written += 1
        log.info("train %s: %d views", path.stem, len(grids))
    return written


def _extract_test(root: Path, category: str, out_dir: Path,
                  config: ExtractConfig, backbone) -> int:
    test_dir = root / category / "test"
    if not test_dir.is_dir():
        raise DatasetLayout(f"missing test directory under {root / category}")
    written = 0
    for sub in sorted(p for p in test_dir.iterdir() if p.is_dir()):
        defect = sub.name
        for path in list_images(sub):
            processed = preprocess(load_image(path), config.resolution)
            grid = extract_features(
                processed, config, backbone,
                source_tag=f"{category}/test/{defect}/{path.stem}#a0")
            write_grid(grid,
                       out_dir / "features" / "test" / defect /
                       f"{path.stem}.sfm")
            written += 1
            if defect != "good":
                mask = _load_mask(mask_source(root, category, defect,
                                              path.stem))
                write_mask_pgm(preprocess_mask(mask, config.resolution),
                               out_dir / "masks" / defect /
                               f"{path.stem}.pgm")
        log.info("test %s: %d images", defect, len(list_images(sub)))
    return written


def extract_category(dataset_root, category: str, out_dir,
                     config: ExtractConfig, backbone=None,
                     split: str = "both") -> dict:
    """Run extraction and write the manifest; returns the manifest doc."""
    config.validate()
    if backbone is None:
        backbone = resolve_backbone(config.backbone)
    config.validate_for(backbone)
    root = Path(dataset_root)
    out = Path(out_dir)
    doc = build_manifest(root, category, config, split=split)
    written = 0
    if split in ("train", "both"):
        written += _extract_train(root, category, out, config, backbone)
    if split in ("test", "both"):
        written += _extract_test(root, category, out, config, backbone)
    save_manifest(doc, out / "manifest.json")
    log.info("category %s: wrote %d feature files", category, written)
    return doc
