"""Saab transform: one constant (DC) anchor, PCA (AC) anchors and a shared bias.

Fitting removes each patch's projection onto the DC direction, centres the
residuals, and keeps the leading eigenvectors of their covariance as AC
anchors.  The eigenproblem is solved in an orthonormal basis of the DC
complement, so AC anchors are orthogonal to the DC anchor by construction
even when the residual covariance is rank deficient.
"""

from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgumentError, NumericError
from .linalg import canonical_signs, symmetric_eigh
from .tensor import PatchMatrix

PSD_TOL = 1e-8


@dataclass(frozen=True)
class SaabKernelBank:
    dc_anchor: np.ndarray  # (D,)
    ac_anchors: np.ndarray  # (F-1, D)
    bias: np.ndarray  # (F,), every entry equal to bias_scale * sqrt(F)
    bias_scale: float
    mean_vector: np.ndarray  # (D,) mean of DC-removed training rows
    eigenvalues: np.ndarray  # (F-1,) residual variance captured by each AC anchor

    @property
    def input_dim(self):
        return self.dc_anchor.shape[0]

    @property
    def num_kernels(self):
        return self.ac_anchors.shape[0] + 1

    @property
    def anchors(self):
        """All F anchors as rows, DC first."""
        return np.vstack([self.dc_anchor[None, :], self.ac_anchors])


def dc_anchor(dim):
    return np.full(dim, 1.0 / np.sqrt(dim))


def _dc_complement_basis(dim):
    # Householder reflection mapping the DC anchor onto e_0; its remaining
    # columns span the orthogonal complement of the DC direction.
    u = dc_anchor(dim)
    u[0] -= 1.0
    norm2 = float(u @ u)
    reflector = np.eye(dim)
    if norm2 > 0.0:
        reflector -= 2.0 * np.outer(u, u) / norm2
    return reflector[:, 1:]


def _as_matrix(patches):
    data = patches.data if isinstance(patches, PatchMatrix) else patches
    data = np.asarray(data, dtype=np.float64)
    if data.ndim != 2:
        raise InvalidArgumentError(f"patch data must be 2-D, got shape {data.shape}")
    return data


def _raw_responses(data, dc, ac, mean):
    dc_resp = data @ dc
    residual = data - np.outer(dc_resp, dc) - mean
    return np.column_stack([dc_resp, residual @ ac.T])


def fit_saab(patches, num_kernels):
    """Fit a bank with ``num_kernels`` anchors (1 DC + ``num_kernels - 1`` AC)."""
    data = _as_matrix(patches)
    n, dim = data.shape
    if num_kernels < 2:
        raise InvalidArgumentError(f"num_kernels must be >= 2, got {num_kernels}")
    if num_kernels > dim:
        raise InvalidArgumentError(f"num_kernels={num_kernels} exceeds input dim {dim}")
    if n < num_kernels:
        raise InvalidArgumentError(f"need at least {num_kernels} patch rows, got {n}")
    if not np.all(np.isfinite(data)):
        raise NumericError("patches contain NaN or Inf")

    dc = dc_anchor(dim)
    residual = data - np.outer(data @ dc, dc)
    mean = residual.mean(axis=0)
    centred = residual - mean
    cov = centred.T @ centred / max(n - 1, 1)

    basis = _dc_complement_basis(dim)
    w, v = symmetric_eigh(basis.T @ cov @ basis)
    scale = max(1.0, float(np.max(np.abs(w))))
    if w[-1] < -PSD_TOL * scale:
        raise NumericError(f"residual covariance is not PSD (min eigenvalue {w[-1]:.3e})")
    ac = canonical_signs(basis @ v[:, : num_kernels - 1]).T
    eigenvalues = np.clip(w[: num_kernels - 1], 0.0, None)

    raw = _raw_responses(data, dc, ac, mean)
    max_abs = float(np.max(np.abs(raw)))
    bias_scale = max_abs / np.sqrt(num_kernels)
    bias = np.full(num_kernels, bias_scale * np.sqrt(num_kernels))
    # d * sqrt(F) can round just below max_abs; nudge so training responses stay >= 0
    while np.min(raw + bias) < 0.0:
        bias_scale = np.nextafter(bias_scale, np.inf)
        bias = np.full(num_kernels, bias_scale * np.sqrt(num_kernels))
    return SaabKernelBank(
        dc_anchor=dc,
        ac_anchors=np.ascontiguousarray(ac),
        bias=bias,
        bias_scale=float(bias_scale),
        mean_vector=mean,
        eigenvalues=eigenvalues,
    )


def saab_responses(bank, patches):
    """Affine responses as an (N, F) matrix."""
    data = _as_matrix(patches)
    if data.shape[1] != bank.input_dim:
        raise InvalidArgumentError(
            f"patch dim {data.shape[1]} does not match bank input dim {bank.input_dim}"
        )
    return _raw_responses(data, bank.dc_anchor, bank.ac_anchors, bank.mean_vector) + bank.bias


def apply_saab(bank, patches):
    """Transform a :class:`PatchMatrix` into an (H, W, F) feature map."""
    if not isinstance(patches, PatchMatrix):
        raise InvalidArgumentError("apply_saab expects a PatchMatrix")
    h, w, _ = patches.source_shape
    return saab_responses(bank, patches).reshape(h, w, bank.num_kernels)


def count_params(banks):
    """Anchor weights plus one bias per kernel, summed over banks."""
    return sum(b.num_kernels * b.input_dim + b.num_kernels for b in banks)
