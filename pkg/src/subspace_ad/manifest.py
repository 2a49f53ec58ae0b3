"""Per-category JSON manifest tying feature files, masks and labels together.

Schema:
    {
      "category": str,
      "items": [
        {"role": "train" | "test",
         "image_id": str,
         "feature_file": str,            relative to the manifest location
         "mask_file": str, optional,     relative, P5 PGM
         "image_label": 0 | 1,
         "original_height": int,
         "original_width": int},
        ...
      ]
    }

Extra top-level keys (e.g. extraction settings) are preserved but ignored.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ManifestError

_ROLES = ("train", "test")


@dataclass
class ManifestItem:
    role: str
    image_id: str
    feature_file: str
    image_label: int
    original_height: int
    original_width: int
    mask_file: str | None = None

    def to_dict(self) -> dict:
        d = {
            "role": self.role,
            "image_id": self.image_id,
            "feature_file": self.feature_file,
            "image_label": self.image_label,
            "original_height": self.original_height,
            "original_width": self.original_width,
        }
        if self.mask_file is not None:
            d["mask_file"] = self.mask_file
        return d


@dataclass
class Manifest:
    category: str
    items: list[ManifestItem]
    base_dir: Path = field(default_factory=Path)
    extra: dict = field(default_factory=dict)

    @property
    def train_items(self) -> list[ManifestItem]:
        return [it for it in self.items if it.role == "train"]

    @property
    def test_items(self) -> list[ManifestItem]:
        return [it for it in self.items if it.role == "test"]

    def resolve(self, relative: str) -> Path:
        return self.base_dir / relative


def _validate_item(raw: dict, index: int) -> ManifestItem:
    for key in ("role", "image_id", "feature_file", "image_label",
                "original_height", "original_width"):
        if key not in raw:
            raise ManifestError(f"item {index} missing key {key!r}")
    if raw["role"] not in _ROLES:
        raise ManifestError(f"item {index} has role {raw['role']!r}")
    if raw["image_label"] not in (0, 1):
        raise ManifestError(
            f"item {index} has image_label {raw['image_label']!r}, want 0 or 1")
    for key in ("original_height", "original_width"):
        if not isinstance(raw[key], int) or raw[key] < 1:
            raise ManifestError(f"item {index} has bad {key}: {raw[key]!r}")
    return ManifestItem(
        role=raw["role"],
        image_id=str(raw["image_id"]),
        feature_file=str(raw["feature_file"]),
        image_label=int(raw["image_label"]),
        original_height=raw["original_height"],
        original_width=raw["original_width"],
        mask_file=raw.get("mask_file"),
    )


def load_manifest(path) -> Manifest:
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
    except FileNotFoundError:
        raise ManifestError(f"manifest not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ManifestError(f"manifest is not valid JSON: {exc}") from None
    if not isinstance(raw, dict) or "items" not in raw:
        raise ManifestError("manifest must be an object with an 'items' list")
    items = [_validate_item(it, i) for i, it in enumerate(raw["items"])]
    extra = {k: v for k, v in raw.items() if k not in ("category", "items")}
    return Manifest(category=str(raw.get("category", "")), items=items,
                    base_dir=path.parent, extra=extra)


def save_manifest(manifest: Manifest, path) -> None:
    path = Path(path)
    doc = dict(manifest.extra)
    doc["category"] = manifest.category
    doc["items"] = [it.to_dict() for it in manifest.items]
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
