"""Signal-subspace projection of MV weights (the EIBMV step)."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .covariance import CovarianceEstimate
from .mv import ApodizationWeights

HERMITIAN_TOL = 1e-12


class NoSignalError(ValueError):
    """Covariance has no positive eigenvalue, so no signal subspace exists."""


@dataclass(frozen=True)
class EigenDecomposition:
    """Eigenpairs sorted by descending eigenvalue; ``eigenvectors[:, i]`` pairs with ``eigenvalues[i]``."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray


@dataclass(frozen=True)
class SignalSubspace:
    basis: np.ndarray
    threshold: float

    @property
    def num(self) -> int:
        return self.basis.shape[1]


def eig_hermitian(r: CovarianceEstimate | np.ndarray) -> EigenDecomposition:
    """Full eigendecomposition of a Hermitian matrix, largest eigenvalue first."""
    mat = r.matrix if isinstance(r, CovarianceEstimate) else np.asarray(r)
    scale = max(np.abs(mat).max(), 1.0)
    if np.abs(mat - mat.conj().T).max() > HERMITIAN_TOL * scale:
        raise ValueError("matrix is not Hermitian")
    lam, vec = np.linalg.eigh(mat)
    return EigenDecomposition(eigenvalues=lam[::-1].copy(), eigenvectors=vec[:, ::-1].copy())


def subspace_size(eigenvalues: np.ndarray, threshold: float, fixed_num: int | None = None) -> np.ndarray:
    """Count eigenvalues with ``lambda_i >= threshold * lambda_1``.

    ``eigenvalues`` is sorted descending along its last axis; leading axes
    are batch axes. ``fixed_num`` overrides the count (clipped to ``L``).
    """
    if fixed_num is not None:
        size = eigenvalues.shape[-1]
        return np.full(eigenvalues.shape[:-1], min(fixed_num, size), dtype=int)
    return np.count_nonzero(eigenvalues >= threshold * eigenvalues[..., :1], axis=-1)


def select_signal_subspace(
    e: EigenDecomposition, threshold: float = 0.5, fixed_num: int | None = None
) -> SignalSubspace:
    """Keep the leading eigenvectors whose eigenvalue is at least ``threshold * lambda_1``.

    Raises:
        NoSignalError: If the largest eigenvalue is not positive.
    """
    if not 0 < threshold <= 1:
        raise ValueError(f"subspace threshold must be in (0, 1], got {threshold}")
    if fixed_num is not None and fixed_num < 1:
        raise ValueError(f"fixed subspace size must be >= 1, got {fixed_num}")
    if not e.eigenvalues[0] > 0:
        raise NoSignalError("largest eigenvalue is not positive; covariance carries no signal")
    num = int(subspace_size(e.eigenvalues, threshold, fixed_num))
    return SignalSubspace(basis=e.eigenvectors[:, :num], threshold=threshold)


def project_weight(s: SignalSubspace, w_mv: ApodizationWeights) -> ApodizationWeights:
    """Project an MV weight onto the signal subspace: ``E_s E_s^H w``."""
    if w_mv.kind == "uniform":
        raise ValueError("expected an MV (or already projected) weight, got a uniform one")
    if w_mv.w.shape != (s.basis.shape[0],):
        raise ValueError("weight length does not match subspace dimension")
    return ApodizationWeights(w=s.basis @ (s.basis.conj().T @ w_mv.w), kind="eibmv")
