"""Covariance of a compensated spectrum by sliding-subband averaging."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .transforms import CompensatedSpectrum


class SingularCovarianceWarning(RuntimeWarning):
    """The estimate is the zero matrix; no MV weight exists for it."""


@dataclass(frozen=True)
class SnapshotSet:
    """``M = K - L + 1`` contiguous length-``L`` slices of a compensated spectrum.

    Attributes:
        snapshots: Array of shape ``(M, L)``; row ``m`` is ``entries[m:m+L]``.
    """

    snapshots: np.ndarray

    @property
    def subband_length(self) -> int:
        return self.snapshots.shape[1]

    @property
    def count(self) -> int:
        return self.snapshots.shape[0]


@dataclass(frozen=True)
class CovarianceEstimate:
    """Loaded covariance matrix.

    Attributes:
        matrix: ``L x L`` Hermitian positive semidefinite matrix.
        loading_factor: Diagonal loading factor applied.
        trace_before_loading: Real trace of the unloaded sample covariance.
    """

    matrix: np.ndarray
    loading_factor: float
    trace_before_loading: float

    @property
    def size(self) -> int:
        return self.matrix.shape[0]

    @property
    def is_zero(self) -> bool:
        return not np.any(self.matrix)


def default_subband_length(k: int) -> int:
    return max(2, k // 2)


def default_loading(subband_length: int) -> float:
    return 1.0 / (10.0 * subband_length)


def make_snapshots(x_comp: CompensatedSpectrum, subband_length: int) -> SnapshotSet:
    """Slice the compensated entries into overlapping subbands.

    Args:
        x_comp: Compensated spectrum with K entries.
        subband_length: Subband length L, ``2 <= L <= K``.

    Returns:
        The ``K - L + 1`` snapshots in frequency order.
    """
    k = x_comp.k
    if not 2 <= subband_length <= k:
        raise ValueError(f"subband length must be in [2, {k}], got {subband_length}")
    return SnapshotSet(snapshots=sliding_window_view(x_comp.entries, subband_length).copy())


def sample_covariance(snapshots: np.ndarray, forward_backward: bool = False) -> np.ndarray:
    """``(1/M) sum_m s_m s_m^H`` over the trailing two axes of ``snapshots``.

    ``snapshots`` has shape ``(..., M, L)``; leading axes are batch axes.
    """
    m = snapshots.shape[-2]
    r = np.einsum("...ml,...mk->...lk", snapshots, snapshots.conj()) / m
    if forward_backward:
        r = 0.5 * (r + np.flip(r, axis=(-2, -1)).conj())
    return r


def load_diagonal(r: np.ndarray, loading: float) -> tuple[np.ndarray, np.ndarray]:
    """Add ``loading * trace / L`` to the diagonal of each matrix in ``r``.

    Returns the loaded matrices and the real traces before loading.
    """
    size = r.shape[-1]
    trace = np.trace(r, axis1=-2, axis2=-1).real
    loaded = r + (loading * trace / size)[..., None, None] * np.eye(size)
    return loaded, trace


def estimate_covariance(
    s: SnapshotSet, loading: float, forward_backward: bool = False
) -> CovarianceEstimate:
    """Snapshot-averaged covariance with diagonal loading.

    An all-zero snapshot set yields the zero matrix (loading scales with the
    trace) and emits :class:`SingularCovarianceWarning`.
    """
    if loading < 0:
        raise ValueError(f"loading factor must be >= 0, got {loading}")
    r = sample_covariance(s.snapshots, forward_backward)
    loaded, trace = load_diagonal(r, loading)
    if trace == 0:
        warnings.warn("all snapshots are zero; covariance is singular", SingularCovarianceWarning)
    return CovarianceEstimate(matrix=loaded, loading_factor=loading, trace_before_loading=float(trace))
