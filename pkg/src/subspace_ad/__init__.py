"""Training-free anomaly detection via PCA subspace modeling of patch features."""

from .config import RunConfig
from .errors import SubspaceADError
from .fileio import (
    FeatureMap,
    GroundTruthMask,
    read_feature_map,
    read_mask_pgm,
    read_raw_map,
    write_feature_map,
    write_map_pgm,
    write_mask_pgm,
    write_raw_map,
)
from .linalg import EigenDecomposition, covariance, mean_vector, sym_eig
from .manifest import Manifest, ManifestItem, load_manifest, save_manifest
from .metrics import (
    EvalReport,
    auroc,
    average_precision,
    connected_components,
    evaluate_category,
    pixel_auroc,
    pro_score,
)
from .model import SubspaceModel, deserialize, fit, fit_batched, serialize
from .scoring import (
    AnomalyMap,
    PipelineResult,
    PixelMap,
    image_score,
    patch_scores,
    score_image_pipeline,
)
from .synthgen import SynthDataset, SynthSpec, generate, write_dataset

__all__ = [
    "AnomalyMap",
    "EigenDecomposition",
    "EvalReport",
    "FeatureMap",
    "GroundTruthMask",
    "Manifest",
    "ManifestItem",
    "PipelineResult",
    "PixelMap",
    "RunConfig",
    "SubspaceADError",
    "SubspaceModel",
    "SynthDataset",
    "SynthSpec",
    "auroc",
    "average_precision",
    "connected_components",
    "covariance",
    "deserialize",
    "evaluate_category",
    "fit",
    "fit_batched",
    "generate",
    "image_score",
    "load_manifest",
    "mean_vector",
    "patch_scores",
    "pixel_auroc",
    "pro_score",
    "read_feature_map",
    "read_mask_pgm",
    "read_raw_map",
    "save_manifest",
    "score_image_pipeline",
    "serialize",
    "sym_eig",
    "write_dataset",
    "write_feature_map",
    "write_map_pgm",
    "write_mask_pgm",
    "write_raw_map",
]

__version__ = "0.1.0"
