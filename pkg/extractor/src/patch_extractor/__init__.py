"""Patch feature extraction for subspace anomaly detection.

Images go in, dense grids of patch descriptors come out, written in the
SFM format that the scoring package reads.  The vision backbone sits
behind a one-method interface so tests can swap in cheap deterministic
stand-ins.
"""

from .backbone import (ConstantBackbone, StubBackbone, TorchHubBackbone,
                       resolve_backbone)
from .config import ExtractConfig
from .dataset import build_manifest, list_images, save_manifest
from .errors import (BackboneLoadFailure, BadImage, DatasetLayout,
                     ExtractorError, InvalidConfig, NonFiniteTokens)
from .extract import (PatchGrid, atomic_write, augment_and_extract,
                      augmentation_angles, extract_features, serialize_grid,
                      write_grid, write_mask_pgm)
from .images import load_image, preprocess, preprocess_mask, rotate_image
from .pipeline import extract_category

__version__ = "0.1.0"

__all__ = [
    "BackboneLoadFailure",
    "BadImage",
    "ConstantBackbone",
    "DatasetLayout",
    "ExtractConfig",
    "ExtractorError",
    "InvalidConfig",
    "NonFiniteTokens",
    "PatchGrid",
    "StubBackbone",
    "TorchHubBackbone",
    "atomic_write",
    "augment_and_extract",
    "augmentation_angles",
    "build_manifest",
    "extract_category",
    "extract_features",
    "list_images",
    "load_image",
    "preprocess",
    "preprocess_mask",
    "resolve_backbone",
    "rotate_image",
    "save_manifest",
    "serialize_grid",
    "write_grid",
    "write_mask_pgm",
]
