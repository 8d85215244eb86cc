"""Minimum-variance (Capon) apodization weights."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .covariance import CovarianceEstimate

MAX_CONDITION = 1e12

KINDS = ("uniform", "mv", "eibmv")


class SingularCovarianceError(np.linalg.LinAlgError):
    """Covariance too ill-conditioned for a trustworthy MV solve."""


@dataclass(frozen=True)
class ApodizationWeights:
    w: np.ndarray
    kind: str

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown weight kind {self.kind!r}")

    def apply(self, x: np.ndarray) -> complex:
        """``w^H x`` for a vector, or row-wise for a stack of snapshots."""
        return x @ self.w.conj()


def steering_vector(size: int) -> np.ndarray:
    """All-ones steering vector: a phase-compensated on-target echo is flat in frequency."""
    return np.ones(size, dtype=complex)


def uniform_weight(size: int) -> ApodizationWeights:
    return ApodizationWeights(w=np.full(size, 1.0 / size, dtype=complex), kind="uniform")


def condition_number(eigenvalues: np.ndarray) -> np.ndarray:
    """``lambda_max / lambda_min`` along the last axis; ``inf`` for non-positive spectra."""
    lo = eigenvalues.min(axis=-1)
    hi = eigenvalues.max(axis=-1)
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(lo > 0, hi / np.where(lo > 0, lo, 1.0), np.inf)


def mv_weight(r: CovarianceEstimate, d: np.ndarray | None = None) -> ApodizationWeights:
    """Capon weight ``R^-1 d / (d^H R^-1 d)``.

    Solves ``R u = d`` through a Cholesky factorization of the loaded
    covariance; no explicit inverse is formed.

    Args:
        r: Covariance estimate, normally diagonally loaded.
        d: Steering vector; defaults to all ones.

    Raises:
        SingularCovarianceError: If the condition number of ``R`` exceeds
            ``MAX_CONDITION``. Increase the loading factor.
    """
    mat = r.matrix
    d = steering_vector(r.size) if d is None else np.asarray(d, dtype=complex)
    if d.shape != (r.size,) or not np.any(d):
        raise ValueError("steering vector must be nonzero with length L")
    cond = condition_number(np.linalg.eigvalsh(mat))
    if not cond <= MAX_CONDITION:
        raise SingularCovarianceError(
            f"covariance condition number {cond:.3g} exceeds {MAX_CONDITION:.0e}; raise the loading factor"
        )
    u = cho_solve(cho_factor(mat, lower=True), d)
    return ApodizationWeights(w=u / np.vdot(d, u), kind="mv")
