"""Normality subspace fitting and model serialization.

The model is the closed-form PCA estimate of normal appearance: empirical
mean, the top-r eigenvectors of the patch covariance as an orthonormal
basis, and the retained rank chosen as the smallest r whose eigenvalues
cover at least a tau fraction of total variance.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from . import linalg
from .errors import (
    AllZeroSpectrum,
    BadMagic,
    DegenerateData,
    DimensionMismatch,
    EmptyInput,
    Truncated,
    UnsupportedVersion,
)
from .fileio import FeatureMap

SSM_MAGIC = b"SSM1"

# In the n < D Gram fallback, eigenvectors are recovered from Gram
# eigenvectors; directions with eigenvalues this far below the leading one
# are numerically null and cannot be mapped stably.
_GRAM_NULL_REL = 1e-12


@dataclass
class SubspaceModel:
    """Fitted normality model (mean, orthonormal basis, spectrum)."""

    dim: int
    mean: np.ndarray         # (dim,) float64
    basis: np.ndarray        # (dim, rank) float64, orthonormal columns
    eigenvalues: np.ndarray  # descending float64; full spectrum after fit,
                             # the retained top-rank entries after deserialize
    rank: int
    tau: float
    fit_row_count: int


def select_rank(eigenvalues: np.ndarray, tau: float) -> int:
    """Smallest r whose leading eigenvalues reach tau of total variance.

    Negative entries (numerical noise on a PSD spectrum) count as zero.
    """
    if not 0.0 < tau <= 1.0:
        raise ValueError(f"tau must be in (0, 1], got {tau}")
    lam = np.maximum(np.asarray(eigenvalues, dtype=np.float64), 0.0)
    if lam.size == 0 or lam.max() <= 0.0:
        raise AllZeroSpectrum("no positive eigenvalue in spectrum")
    cumulative = np.cumsum(lam)
    total = cumulative[-1]
    r = int(np.searchsorted(cumulative, tau * total, side="left")) + 1
    return max(1, min(r, lam.size))


def _stack_patches(features: list[FeatureMap]) -> np.ndarray:
    if len(features) == 0:
        raise EmptyInput("need at least one feature map to fit")
    dim = features[0].dim
    for i, fmap in enumerate(features):
        if fmap.dim != dim:
            raise DimensionMismatch(
                f"map {i} has dim {fmap.dim}, expected {dim}")
    return np.concatenate([fmap.patch_matrix() for fmap in features], axis=0)


def _orthonormalize(columns: np.ndarray) -> np.ndarray:
    """Modified Gram-Schmidt with one re-orthogonalization pass, in place."""
    d, r = columns.shape
    for j in range(r):
        v = columns[:, j]
        for _ in range(2):
            for i in range(j):
                v = v - (columns[:, i] @ v) * columns[:, i]
        norm = np.linalg.norm(v)
        if norm < 1e-10:
            raise DegenerateData(
                "numerically dependent basis directions in Gram fallback")
        columns[:, j] = v / norm
    return columns


def fit(features: list[FeatureMap], tau: float) -> SubspaceModel:
    """Fit the normality subspace on all patches of the given maps.

    When the stacked patch count n is below the feature dimension D the
    eigendecomposition runs on the n x n Gram matrix of centered rows and
    eigenvectors are mapped back, which is exact for the nonzero spectrum.
    """
    if not 0.0 < tau <= 1.0:
        raise ValueError(f"tau must be in (0, 1], got {tau}")
    x = _stack_patches(features)
    n, d = x.shape
    mean = linalg.mean_vector(x)
    centered = x - mean
    if not np.any(centered):
        raise DegenerateData("all patches identical: zero total variance")

    if n >= d:
        cov = linalg.covariance(x, mean)
        eig = linalg.sym_eig(cov)
        eigenvalues = eig.eigenvalues
        rank = select_rank(eigenvalues, tau)
        basis = eig.eigenvectors[:, :rank].copy()
    else:
        gram = centered @ centered.T / n
        gram = (gram + gram.T) / 2.0
        eig = linalg.sym_eig(gram)
        eigenvalues = np.concatenate([eig.eigenvalues, np.zeros(d - n)])
        rank = select_rank(eigenvalues, tau)
        lead = eigenvalues[0]
        basis = np.empty((d, rank))
        for j in range(rank):
            lam = eigenvalues[j]
            if lam <= lead * _GRAM_NULL_REL:
                raise DegenerateData(
                    f"retained rank {rank} reaches numerically null "
                    f"eigenvalue {lam:.3e} in Gram fallback")
            basis[:, j] = centered.T @ eig.eigenvectors[:, j] / np.sqrt(n * lam)
        _orthonormalize(basis)
        # sign convention must match the covariance-path output
        for j in range(rank):
            i = int(np.argmax(np.abs(basis[:, j])))
            if basis[i, j] < 0.0:
                basis[:, j] = -basis[:, j]

    return SubspaceModel(dim=d, mean=mean, basis=basis,
                         eigenvalues=eigenvalues, rank=rank, tau=float(tau),
                         fit_row_count=n)


def fit_batched(test_features: list[FeatureMap], tau: float) -> SubspaceModel:
    """Batched 0-shot fit: one subspace over the entire unlabeled test set.

    Identical computation to fit; anomalies that are rare and uncorrelated
    contribute too little variance to enter the retained basis, so they
    still reconstruct poorly.
    """
    return fit(test_features, tau)


def serialize(model: SubspaceModel, precision: str = "f64") -> bytes:
    """Pack a model into SSM1 bytes.

    Layout: "SSM1" | version u32 | dim u32 | rank u32 | tau f64 |
    fit_row_count u64 | mean | basis column-major | top-rank eigenvalues.
    version 1 stores the arrays as f64 (bitwise round-trip), version 2 as
    f32 (compact, lossy). All little-endian.
    """
    if precision == "f64":
        version, dtype = 1, "<f8"
    elif precision == "f32":
        version, dtype = 2, "<f4"
    else:
        raise ValueError(f"precision must be 'f64' or 'f32', got {precision!r}")
    header = SSM_MAGIC + struct.pack(
        "<3IdQ", version, model.dim, model.rank, model.tau,
        model.fit_row_count)
    mean = np.ascontiguousarray(model.mean, dtype=dtype)
    basis = np.asfortranarray(model.basis.astype(dtype))
    retained = np.ascontiguousarray(model.eigenvalues[:model.rank], dtype=dtype)
    return header + mean.tobytes() + basis.tobytes(order="F") + retained.tobytes()


def deserialize(blob: bytes) -> SubspaceModel:
    blob = bytes(blob)
    if len(blob) < 4:
        raise Truncated(f"only {len(blob)} bytes")
    if blob[:4] != SSM_MAGIC:
        raise BadMagic(f"expected {SSM_MAGIC!r}, got {blob[:4]!r}")
    header_len = 4 + struct.calcsize("<3IdQ")
    if len(blob) < header_len:
        raise Truncated(f"only {len(blob)} bytes, header needs {header_len}")
    version, dim, rank, tau, rows = struct.unpack(
        "<3IdQ", blob[4:header_len])
    if version == 1:
        dtype, itemsize = "<f8", 8
    elif version == 2:
        dtype, itemsize = "<f4", 4
    else:
        raise UnsupportedVersion(f"version {version}")
    count = dim + dim * rank + rank
    if len(blob) < header_len + count * itemsize:
        raise Truncated(
            f"need {header_len + count * itemsize} bytes, have {len(blob)}")
    flat = np.frombuffer(blob, dtype=dtype, count=count, offset=header_len)
    flat = flat.astype(np.float64)
    mean = flat[:dim].copy()
    basis = flat[dim:dim + dim * rank].reshape((dim, rank), order="F").copy()
    eigenvalues = flat[dim + dim * rank:].copy()
    return SubspaceModel(dim=dim, mean=mean, basis=basis,
                         eigenvalues=eigenvalues, rank=rank, tau=tau,
                         fit_row_count=rows)
