"""Dataset tree walking and manifest construction.

Expected layout (one directory per category):

    <root>/<category>/train/good/*.png
    <root>/<category>/test/good/*.png
    <root>/<category>/test/<defect>/*.png
    <root>/<category>/ground_truth/<defect>/<stem>_mask.png

The manifest lists one train item per augmented view (the scoring side
fits on every train entry) and one test item per image.  All feature
files and masks live in the processed square frame, so original_height
and original_width record the working resolution, and the preprocess
policy is stored under the "preprocess" key.
"""

from __future__ import annotations

import json
from pathlib import Path

from .config import ExtractConfig
from .errors import DatasetLayout
from .extract import atomic_write

IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg", ".bmp", ".tif", ".tiff")


def list_images(directory: Path) -> list[Path]:
    if not directory.is_dir():
        return []
    return sorted(p for p in directory.iterdir()
                  if p.suffix.lower() in IMAGE_SUFFIXES)


def rotation_enabled(category: str, config: ExtractConfig) -> bool:
    return category not in config.rotation_disabled


def mask_source(root: Path, category: str, defect: str,
                stem: str) -> Path:
    return root / category / "ground_truth" / defect / f"{stem}_mask.png"


def _train_entries(root: Path, category: str,
                   config: ExtractConfig) -> list[dict]:
    images = list_images(root / category / "train" / "good")
    if not images:
        raise DatasetLayout(
            f"no train/good images under {root / category}")
    views = 1 + (config.augmentations
                 if rotation_enabled(category, config) else 0)
    items = []
    for path in images:
        for view in range(views):
            items.append({
                "role": "train",
                "image_id": f"train/good/{path.stem}#v{view}",
                "feature_file":
                    f"features/train/good/{path.stem}_v{view:02d}.sfm",
                "image_label": 0,
                "original_height": config.resolution,
                "original_width": config.resolution,
            })
    return items


def _test_entries(root: Path, category: str,
                  config: ExtractConfig) -> list[dict]:
    test_dir = root / category / "test"
    if not test_dir.is_dir():
        raise DatasetLayout(f"missing test directory under {root / category}")
    items = []
    for sub in sorted(p for p in test_dir.iterdir() if p.is_dir()):
        defect = sub.name
        label = 0 if defect == "good" else 1
        for path in list_images(sub):
            item = {
                "role": "test",
                "image_id": f"test/{defect}/{path.stem}",
                "feature_file": f"features/test/{defect}/{path.stem}.sfm",
                "image_label": label,
                "original_height": config.resolution,
                "original_width": config.resolution,
            }
            if label == 1:
                src = mask_source(root, category, defect, path.stem)
                if not src.exists():
                    raise DatasetLayout(f"missing ground-truth mask {src}")
                item["mask_file"] = f"masks/{defect}/{path.stem}.pgm"
            items.append(item)
    return items


def build_manifest(dataset_root, category: str, config: ExtractConfig,
                   split: str = "both") -> dict:
    """Manifest document for one category; feature files by convention."""
    if split not in ("train", "test", "both"):
        raise ValueError(f"split must be train, test or both, got {split!r}")
    config.validate()
    root = Path(dataset_root)
    if not (root / category).is_dir():
        raise DatasetLayout(f"no category directory {root / category}")
    items = []
    if split in ("train", "both"):
        items.extend(_train_entries(root, category, config))
    if split in ("test", "both"):
        items.extend(_test_entries(root, category, config))
    return {
        "category": category,
        "items": items,
        "extract": config.to_dict(),
        "preprocess": {
            "policy": "resize-shorter-side-then-center-crop",
            "resolution": config.resolution,
            "interpolation": "bilinear",
            "mask_interpolation": "nearest",
        },
    }


def save_manifest(doc: dict, path) -> None:
    atomic_write(path, (json.dumps(doc, indent=2, sort_keys=True)
                        + "\n").encode("utf-8"))
