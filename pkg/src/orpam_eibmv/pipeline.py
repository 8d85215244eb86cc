"""Per-sample adaptive reconstruction over A-scans and volumes.

For every output sample the passband is phase-compensated to that sample,
a covariance is estimated from subband snapshots and a weight is computed.
Done literally this costs ``O(N * (K L^2 + L^3))`` per A-scan
(:func:`reconstruct_sample`, or the batched ``per_sample=True`` path).

For a contiguous passband the compensation only rotates the snapshots:
``R(n) = D(n) R0 D(n)^H`` with ``D(n) = diag(exp(j 2 pi l n / N))`` and ``R0``
the uncompensated covariance, and the same holds after forward-backward
averaging and diagonal loading. The default path therefore factors ``R0``
once per A-scan and evaluates the n-dependent weights in the rotated frame,
which gives the same outputs at ``O(L^3 + N (K L))`` cost.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from . import covariance as cov
from .eigenspace import eig_hermitian, project_weight, select_signal_subspace, subspace_size
from .mv import MAX_CONDITION, condition_number, mv_weight
from .transforms import (
    AScan,
    PassbandSpectrum,
    forward_dft,
    full_passband,
    phase_compensate,
    select_passband,
    uniform_reconstruct,
)

log = logging.getLogger(__name__)

METHODS = ("uniform", "fmv", "feibmv")
OUTPUTS = ("rf", "envelope", "both")

# Passband 0.3*f0 .. 1.7*f0 around the 25 MHz transducer.
DEFAULT_F_LO = 7.5e6
DEFAULT_F_HI = 42.5e6

MAX_FAILED_FRACTION = 0.01
_BATCH = 512


class ReconstructionError(RuntimeError):
    """Too many samples of an A-scan could not be reconstructed."""

    def __init__(self, message: str, failed_samples=()):
        super().__init__(message)
        self.failed_samples = list(failed_samples)


@dataclass(frozen=True)
class ReconstructionConfig:
    """Free parameters of the reconstruction.

    ``subband_length`` and ``loading`` set to ``None`` resolve per passband to
    ``K // 2`` and ``1 / (10 L)``. ``upsample`` evaluates the output on a grid
    ``upsample`` times finer than the input (equivalent to zero-padding the
    spectrum).
    """

    method: str = "feibmv"
    f_lo: float = DEFAULT_F_LO
    f_hi: float = DEFAULT_F_HI
    full_band: bool = False
    subband_length: int | None = None
    loading: float | None = None
    threshold: float = 0.5
    fixed_num: int | None = None
    renormalize_eibmv: bool = False
    forward_backward: bool = False
    output: str = "both"
    sound_speed: float = 1500.0
    upsample: int = 1

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"method must be one of {METHODS}, got {self.method!r}")
        if self.output not in OUTPUTS:
            raise ValueError(f"output must be one of {OUTPUTS}, got {self.output!r}")
        if not self.full_band and not 0 < self.f_lo < self.f_hi:
            raise ValueError(f"need 0 < f_lo < f_hi, got {self.f_lo}, {self.f_hi}")
        if self.subband_length is not None and self.subband_length < 2:
            raise ValueError(f"subband_length must be >= 2, got {self.subband_length}")
        if self.loading is not None and self.loading < 0:
            raise ValueError(f"loading must be >= 0, got {self.loading}")
        if not 0 < self.threshold <= 1:
            raise ValueError(f"threshold must be in (0, 1], got {self.threshold}")
        if self.fixed_num is not None and self.fixed_num < 1:
            raise ValueError(f"fixed_num must be >= 1, got {self.fixed_num}")
        if not self.sound_speed > 0:
            raise ValueError(f"sound_speed must be positive, got {self.sound_speed}")
        if self.upsample < 1:
            raise ValueError(f"upsample must be >= 1, got {self.upsample}")

    def passband(self, a: AScan) -> PassbandSpectrum:
        s = forward_dft(a)
        return full_passband(s) if self.full_band else select_passband(s, self.f_lo, self.f_hi)

    def resolved_subband_length(self, k: int) -> int:
        length = cov.default_subband_length(k) if self.subband_length is None else self.subband_length
        if length > k:
            raise ValueError(f"subband_length {length} exceeds passband size {k}")
        return length

    def resolved_loading(self, subband_length: int) -> float:
        return cov.default_loading(subband_length) if self.loading is None else self.loading

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class Volume:
    """Stack of A-scans.

    Attributes:
        data: Array of shape ``(nx, ny, nt)``.
        fs: Sampling rate in Hz, shared by every A-scan.
        pitch: Lateral pitch in meters (metadata only).
    """

    data: np.ndarray
    fs: float
    pitch: float = 0.0

    def __post_init__(self):
        if self.data.ndim != 3:
            raise ValueError(f"volume data must be 3-D (nx, ny, nt), got shape {self.data.shape}")

    @property
    def dims(self) -> tuple[int, int, int]:
        return self.data.shape

    def ascan(self, x: int, y: int) -> AScan:
        return AScan(self.data[x, y], self.fs)


@dataclass
class ReconstructionResult:
    """Reconstructed A-scan.

    ``analytic`` holds the scaled complex outputs; ``rf`` is their real part
    and ``envelope`` their modulus, both on the (possibly upsampled) grid.
    """

    analytic: np.ndarray
    fs: float
    failed_samples: list = field(default_factory=list)

    @property
    def rf(self) -> AScan:
        return AScan(self.analytic.real, self.fs)

    @property
    def envelope(self) -> np.ndarray:
        return np.abs(self.analytic)


@dataclass
class VolumeReconstruction:
    rf: Volume
    envelope: Volume
    failures: list = field(default_factory=list)  # (x, y, message)


def reconstruct_sample(p: PassbandSpectrum, n: float, cfg: ReconstructionConfig) -> complex:
    """Reconstruct one output sample from the passband (unscaled).

    Uniform apodization averages the whole compensated vector. The adaptive
    methods average ``w^H s_m`` over the subband snapshots ``s_m``.

    Raises:
        SingularCovarianceError, NoSignalError: With the offending sample
            index appended to the message.
    """
    x_comp = phase_compensate(p, n)
    if cfg.method == "uniform":
        return uniform_reconstruct(x_comp)
    length = cfg.resolved_subband_length(p.k)
    snaps = cov.make_snapshots(x_comp, length)
    if not np.any(snaps.snapshots):
        return 0j
    r = cov.estimate_covariance(snaps, cfg.resolved_loading(length), cfg.forward_backward)
    try:
        w = mv_weight(r)
        if cfg.method == "feibmv":
            sub = select_signal_subspace(eig_hermitian(r), cfg.threshold, cfg.fixed_num)
            w = project_weight(sub, w)
            if cfg.renormalize_eibmv:
                w = type(w)(w=w.w / np.sum(w.w), kind=w.kind)
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise type(exc)(f"sample {n}: {exc}") from exc
    return complex(np.mean(w.apply(snaps.snapshots)))


def _adaptive_batch(xc: np.ndarray, cfg: ReconstructionConfig) -> tuple[np.ndarray, np.ndarray]:
    """Adaptive outputs for a batch of compensated vectors ``xc`` of shape (T, K)."""
    length = cfg.resolved_subband_length(xc.shape[1])
    snaps = sliding_window_view(xc, length, axis=1)  # (T, M, L)
    r, trace = cov.load_diagonal(
        cov.sample_covariance(snaps, cfg.forward_backward), cfg.resolved_loading(length)
    )
    zero = trace == 0
    lam, vec = np.linalg.eigh(r)  # ascending
    failed = ~zero & ~(condition_number(lam) <= MAX_CONDITION)
    bad = zero | failed
    lam = np.where(bad[:, None], 1.0, lam)
    # Hermitian spectral solve R u = d with d = ones
    u = np.einsum("tij,tj->ti", vec, vec.conj().sum(axis=1) / lam)
    w = u / u.sum(axis=1, keepdims=True)
    if cfg.method == "feibmv":
        lam_d, vec_d = lam[:, ::-1], vec[:, :, ::-1]
        num = subspace_size(lam_d, cfg.threshold, cfg.fixed_num)
        keep = np.arange(length)[None, :] < num[:, None]
        coef = np.einsum("tji,tj->ti", vec_d.conj(), w) * keep
        w = np.einsum("tij,tj->ti", vec_d, coef)
        if cfg.renormalize_eibmv:
            w = w / w.sum(axis=1, keepdims=True)
    out = np.einsum("tml,tl->t", snaps, w.conj()) / snaps.shape[1]
    out[bad] = 0
    return out, failed


def _adaptive_rotated(p: PassbandSpectrum, positions: np.ndarray, cfg: ReconstructionConfig):
    """Adaptive outputs at ``positions`` for a contiguous passband (see module notes)."""
    n_par = p.parent_length
    length = cfg.resolved_subband_length(p.k)
    base = sliding_window_view(p.bins, length)  # (M, L), uncompensated
    r0, trace = cov.load_diagonal(
        cov.sample_covariance(base, cfg.forward_backward), cfg.resolved_loading(length)
    )
    values = np.zeros(positions.size, dtype=complex)
    if trace == 0:
        return values, np.zeros(positions.size, dtype=bool)
    lam, vec = np.linalg.eigh(r0)
    if not condition_number(lam) <= MAX_CONDITION:
        return values, np.ones(positions.size, dtype=bool)
    lam, vec = lam[::-1], vec[:, ::-1]

    for start in range(0, positions.size, _BATCH):
        n = positions[start:start + _BATCH]
        # steering vector seen from the rotated frame: D(n)^H d
        d_rot = np.exp(-2j * np.pi * np.outer(n, np.arange(length)) / n_par)
        u = ((d_rot @ vec.conj()) / lam) @ vec.T
        w = u / np.einsum("tl,tl->t", d_rot.conj(), u)[:, None]
        if cfg.method == "feibmv":
            num = int(subspace_size(lam, cfg.threshold, cfg.fixed_num))
            es = vec[:, :num]
            w = (w @ es.conj()) @ es.T
            if cfg.renormalize_eibmv:
                w = w / np.einsum("tl,tl->t", w, d_rot.conj())[:, None]
        # snapshot average in the rotated frame: (1/M) sum_m exp(j 2 pi k_m n / N) base_m
        phi = np.exp(2j * np.pi * np.outer(n, p.bin_indices[: base.shape[0]]) / n_par)
        q = phi @ base / base.shape[0]
        values[start:start + _BATCH] = np.einsum("tl,tl->t", w.conj(), q)
    return values, np.zeros(positions.size, dtype=bool)


def reconstruct_passband(
    p: PassbandSpectrum, cfg: ReconstructionConfig, per_sample: bool = False
) -> tuple[np.ndarray, np.ndarray]:
    """Unscaled outputs at every grid position ``i / upsample``.

    Args:
        p: Passband of the A-scan.
        cfg: Reconstruction parameters.
        per_sample: Re-estimate and re-factor the covariance at every sample
            even when the passband is contiguous. Slower; same result.

    Returns:
        (values, failed): complex outputs and a boolean mask of samples whose
        covariance was too ill-conditioned (their value is set to zero).
    """
    positions = np.arange(p.parent_length * cfg.upsample) / cfg.upsample
    contiguous = bool(np.all(np.diff(p.bin_indices) == 1))
    if cfg.method != "uniform" and contiguous and not per_sample:
        return _adaptive_rotated(p, positions, cfg)
    values = np.empty(positions.size, dtype=complex)
    failed = np.zeros(positions.size, dtype=bool)
    phase = 2j * np.pi * p.bin_indices / p.parent_length
    for start in range(0, positions.size, _BATCH):
        sl = slice(start, start + _BATCH)
        xc = p.bins[None, :] * np.exp(positions[sl, None] * phase[None, :])
        if cfg.method == "uniform":
            values[sl] = xc.mean(axis=1)
        else:
            values[sl], failed[sl] = _adaptive_batch(xc, cfg)
    return values, failed


def reconstruct_ascan(a: AScan, cfg: ReconstructionConfig) -> ReconstructionResult:
    """Reconstruct every sample of an A-scan.

    The complex outputs are scaled by ``2 K / N`` so that the uniform method
    reproduces the band-limited inverse DFT (real part) and its analytic
    envelope (modulus).

    Raises:
        ReconstructionError: If more than 1% of the samples fail.
    """
    p = cfg.passband(a)
    values, failed = reconstruct_passband(p, cfg)
    bad = np.flatnonzero(failed) / cfg.upsample
    if bad.size > MAX_FAILED_FRACTION * values.size:
        raise ReconstructionError(
            f"{bad.size} of {values.size} samples failed (ill-conditioned covariance); raise the loading factor",
            bad,
        )
    if bad.size:
        log.warning("%d samples zeroed after failed weight solves", bad.size)
    scale = 2.0 * p.k / p.parent_length
    return ReconstructionResult(analytic=values * scale, fs=a.fs * cfg.upsample, failed_samples=list(bad))


def reconstruct_volume(v: Volume, cfg: ReconstructionConfig, workers: int = 1) -> VolumeReconstruction:
    """Reconstruct every A-scan of a volume.

    A-scans are independent work items merged by index, so the output does
    not depend on ``workers``. A failing A-scan is zero-filled and reported
    in ``failures`` as ``(x, y, message)``.
    """
    if workers < 1:
        raise ValueError(f"worker count must be >= 1, got {workers}")
    nx, ny, nt = v.dims
    nt_out = nt * cfg.upsample
    rf = np.zeros((nx, ny, nt_out))
    env = np.zeros((nx, ny, nt_out))
    failures = []

    def work(xy):
        x, y = xy
        try:
            return xy, reconstruct_ascan(v.ascan(x, y), cfg), None
        except (ReconstructionError, ValueError, np.linalg.LinAlgError) as exc:
            return xy, None, str(exc)

    jobs = [(x, y) for y in range(ny) for x in range(nx)]
    if workers == 1:
        results = map(work, jobs)
    else:
        pool = ThreadPoolExecutor(max_workers=workers)
        results = pool.map(work, jobs)
    try:
        for (x, y), res, err in results:
            if err is not None:
                failures.append((x, y, err))
                continue
            rf[x, y] = res.analytic.real
            env[x, y] = res.envelope
    finally:
        if workers > 1:
            pool.shutdown()
    fs_out = v.fs * cfg.upsample
    return VolumeReconstruction(
        rf=Volume(rf, fs_out, v.pitch), envelope=Volume(env, fs_out, v.pitch), failures=failures
    )
