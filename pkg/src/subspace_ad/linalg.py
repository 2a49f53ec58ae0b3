"""Dense symmetric eigendecomposition and moment helpers.

Matrices are plain float64 numpy arrays, C-order. The eigensolver is a
cyclic Jacobi iteration: slower than LAPACK for large inputs but simple,
dependency-free and bitwise deterministic, which the downstream model
fitting relies on.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, EmptyInput, NoConvergence, NotSymmetric

# Jacobi convergence: off-diagonal Frobenius norm relative to the diagonal.
JACOBI_TOL = 1e-10
JACOBI_MAX_SWEEPS = 30

# Eigenvalues in [-EIG_CLAMP_REL * lambda_max, 0) are numerical noise on a
# PSD input and are clamped to exactly 0.
EIG_CLAMP_REL = 1e-9


@dataclass(frozen=True)
class EigenDecomposition:
    """Eigenvalues in descending order and the matching eigenvector columns."""

    eigenvalues: np.ndarray   # shape (d,)
    eigenvectors: np.ndarray  # shape (d, d), column i pairs with eigenvalue i


def mean_vector(rows: np.ndarray) -> np.ndarray:
    """Column-wise mean of a (n, d) row matrix."""
    rows = np.asarray(rows, dtype=np.float64)
    if rows.ndim != 2:
        raise DimensionMismatch(f"expected a 2-d row matrix, got ndim={rows.ndim}")
    if rows.shape[0] == 0:
        raise EmptyInput("mean of zero rows is undefined")
    return rows.mean(axis=0)


def covariance(rows: np.ndarray, mean: np.ndarray) -> np.ndarray:
    """Biased (1/n) covariance of rows about the supplied mean.

    Entry (i, j) is (1/n) * sum_k (rows[k,i] - mean[i]) * (rows[k,j] - mean[j]).
    The result is explicitly symmetrized so it satisfies the eigensolver's
    symmetry precondition regardless of BLAS rounding.
    """
    rows = np.asarray(rows, dtype=np.float64)
    mean = np.asarray(mean, dtype=np.float64)
    if rows.ndim != 2:
        raise DimensionMismatch(f"expected a 2-d row matrix, got ndim={rows.ndim}")
    n, d = rows.shape
    if n == 0:
        raise EmptyInput("covariance of zero rows is undefined")
    if mean.shape != (d,):
        raise DimensionMismatch(
            f"mean has shape {mean.shape}, expected ({d},)")
    centered = rows - mean
    cov = centered.T @ centered / n
    return (cov + cov.T) / 2.0


def _off_diagonal_norm(a: np.ndarray) -> float:
    d = a.shape[0]
    mask = ~np.eye(d, dtype=bool)
    return float(np.sqrt(np.sum(a[mask] ** 2)))


def sym_eig(matrix: np.ndarray, max_sweeps: int = JACOBI_MAX_SWEEPS) -> EigenDecomposition:
    """Full eigendecomposition of a symmetric matrix by cyclic Jacobi sweeps.

    Parameters
    ----------
    matrix : (d, d) symmetric float64 array. Asymmetry beyond
        1e-9 * max|entry| raises NotSymmetric.
    max_sweeps : rotation sweep budget before giving up with NoConvergence.

    Returns
    -------
    EigenDecomposition with eigenvalues sorted descending. Small negative
    eigenvalues within the clamp band are returned as exactly 0. Each
    eigenvector is sign-fixed so its largest-magnitude entry is positive.
    """
    a = np.array(matrix, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise DimensionMismatch(f"expected a square matrix, got shape {a.shape}")
    d = a.shape[0]
    if d == 0:
        raise EmptyInput("cannot decompose an empty matrix")
    scale = float(np.max(np.abs(a)))
    asym = float(np.max(np.abs(a - a.T)))
    if asym > 1e-9 * scale:
        raise NotSymmetric(
            f"asymmetry {asym:.3e} exceeds 1e-9 * max|entry| = {1e-9 * scale:.3e}")
    a = (a + a.T) / 2.0

    v = np.eye(d)
    converged = False
    for _ in range(max_sweeps + 1):
        off = _off_diagonal_norm(a)
        on = float(np.sqrt(np.sum(np.diag(a) ** 2)))
        if off <= JACOBI_TOL * on:
            converged = True
            break
        if _ == max_sweeps:
            break
        for p in range(d - 1):
            for q in range(p + 1, d):
                apq = a[p, q]
                if apq == 0.0:
                    continue
                theta = (a[q, q] - a[p, p]) / (2.0 * apq)
                if abs(theta) > 1e10:
                    t = 1.0 / (2.0 * theta)
                else:
                    t = np.sign(theta) / (abs(theta) + np.sqrt(theta * theta + 1.0))
                    if theta == 0.0:
                        t = 1.0
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                # two-sided rotation on rows/columns p and q
                col_p = a[:, p].copy()
                col_q = a[:, q].copy()
                a[:, p] = c * col_p - s * col_q
                a[:, q] = s * col_p + c * col_q
                row_p = a[p, :].copy()
                row_q = a[q, :].copy()
                a[p, :] = c * row_p - s * row_q
                a[q, :] = s * row_p + c * row_q
                a[p, q] = 0.0
                a[q, p] = 0.0
                vec_p = v[:, p].copy()
                vec_q = v[:, q].copy()
                v[:, p] = c * vec_p - s * vec_q
                v[:, q] = s * vec_p + c * vec_q
    if not converged:
        raise NoConvergence(
            f"off-diagonal norm still {_off_diagonal_norm(a):.3e} after "
            f"{max_sweeps} sweeps")

    eigenvalues = np.diag(a).copy()
    order = np.argsort(-eigenvalues, kind="stable")
    eigenvalues = eigenvalues[order]
    v = v[:, order]

    clamp_band = EIG_CLAMP_REL * max(float(eigenvalues[0]), 0.0)
    tiny_negative = (eigenvalues < 0.0) & (eigenvalues >= -clamp_band)
    eigenvalues[tiny_negative] = 0.0

    for j in range(d):
        i = int(np.argmax(np.abs(v[:, j])))
        if v[i, j] < 0.0:
            v[:, j] = -v[:, j]

    return EigenDecomposition(eigenvalues=eigenvalues, eigenvectors=v)
