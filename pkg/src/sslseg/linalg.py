"""Symmetric eigendecomposition by cyclic Jacobi rotations."""

import numpy as np

from . import kernels
from .errors import InvalidArgumentError, NumericError

EIG_TOL = 1e-15
MAX_SWEEPS = 100


def canonical_signs(vectors):
    """Flip each column so its largest-magnitude entry is positive (first on ties)."""
    vectors = np.array(vectors, dtype=np.float64, copy=True)
    if vectors.size == 0:
        return vectors
    idx = np.argmax(np.abs(vectors), axis=0)
    signs = np.sign(vectors[idx, np.arange(vectors.shape[1])])
    signs[signs == 0] = 1.0
    return vectors * signs


def symmetric_eigh(a, tol=EIG_TOL, max_sweeps=MAX_SWEEPS):
    """Eigenpairs of a symmetric matrix, eigenvalues descending.

    Ties keep the original diagonal order (stable sort), and eigenvector
    signs follow :func:`canonical_signs`, so the result is a deterministic
    function of ``a``.
    """
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise InvalidArgumentError(f"expected a square matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise NumericError("matrix contains NaN or Inf")
    scale = max(1.0, float(np.max(np.abs(a)))) if a.size else 1.0
    if np.max(np.abs(a - a.T), initial=0.0) > 1e-10 * scale:
        raise NumericError("matrix is not symmetric")
    a = 0.5 * (a + a.T)
    if a.shape[0] == 0:
        return np.empty(0), np.empty((0, 0))
    w, v, sweeps = kernels.jacobi_eigh(np.ascontiguousarray(a), tol, max_sweeps)
    if sweeps >= max_sweeps:
        raise NumericError(f"Jacobi iteration did not converge in {max_sweeps} sweeps")
    order = np.argsort(-w, kind="stable")
    return w[order], canonical_signs(v[:, order])
