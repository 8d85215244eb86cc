"""DFT plumbing: forward transform, passband selection, phase compensation.

Conventions: the forward DFT is unnormalized and the inverse carries 1/N.
Bin ``k`` maps to ``k * fs / N`` for ``k < N/2``. Only positive-frequency bins
strictly between DC and Nyquist are ever selected into a passband, so a real
RF trace is recovered from a passband reconstruction as ``2 * Re(.) * K / N``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.signal import hilbert

MIN_PASSBAND_BINS = 4


class BandTooNarrowError(ValueError):
    """Raised when a frequency band keeps fewer than ``MIN_PASSBAND_BINS`` bins."""


@dataclass(frozen=True)
class AScan:
    """One real axial time series.

    Attributes:
        samples: Real samples, arbitrary amplitude units.
        fs: Sampling rate in Hz.
    """

    samples: np.ndarray
    fs: float

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=float)
        if samples.ndim != 1:
            raise ValueError("A-scan samples must be one-dimensional")
        if samples.size < 8:
            raise ValueError(f"A-scan needs at least 8 samples, got {samples.size}")
        if not np.all(np.isfinite(samples)):
            raise ValueError("A-scan contains non-finite samples")
        if not self.fs > 0:
            raise ValueError(f"sampling rate must be positive, got {self.fs}")
        object.__setattr__(self, "samples", samples)

    @property
    def n(self) -> int:
        return self.samples.size


@dataclass(frozen=True)
class Spectrum:
    bins: np.ndarray
    fs: float

    @property
    def n(self) -> int:
        return self.bins.size

    @property
    def bin_frequencies(self) -> np.ndarray:
        """Signed bin frequencies in Hz (numpy ``fftfreq`` ordering)."""
        return np.fft.fftfreq(self.n, d=1.0 / self.fs)


@dataclass(frozen=True)
class PassbandSpectrum:
    """Positive-frequency subset of a :class:`Spectrum`.

    Attributes:
        bins: Complex values of the kept bins, length K.
        bin_indices: Indices of the kept bins into the parent spectrum,
            strictly increasing, all in ``[1, N/2)``.
        parent_length: Length N of the parent spectrum.
        fs: Sampling rate of the source A-scan in Hz.
    """

    bins: np.ndarray
    bin_indices: np.ndarray
    parent_length: int
    fs: float

    @property
    def k(self) -> int:
        return self.bins.size

    @property
    def frequencies(self) -> np.ndarray:
        return self.bin_indices * self.fs / self.parent_length


@dataclass(frozen=True)
class CompensatedSpectrum:
    """Passband bins rotated so that sample ``target_sample`` adds coherently."""

    entries: np.ndarray
    target_sample: float
    bin_indices: np.ndarray
    parent_length: int

    @property
    def k(self) -> int:
        return self.entries.size


def forward_dft(a: AScan) -> Spectrum:
    """Unnormalized forward DFT of an A-scan."""
    return Spectrum(bins=np.fft.fft(a.samples), fs=a.fs)


def inverse_dft(s: Spectrum) -> AScan:
    """Inverse DFT with the 1/N factor; returns the real part as an A-scan."""
    return AScan(samples=np.fft.ifft(s.bins).real, fs=s.fs)


def _positive_bins(n: int) -> np.ndarray:
    # 1 <= k < N/2: drops DC and, for even N, Nyquist
    return np.arange(1, (n + 1) // 2)


def select_passband(s: Spectrum, f_lo: float, f_hi: float) -> PassbandSpectrum:
    """Keep the bins whose frequency ``k * fs / N`` lies in ``[f_lo, f_hi]``.

    Raises:
        ValueError: If the band is not ordered inside ``(0, fs/2)``.
        BandTooNarrowError: If fewer than four bins survive.
    """
    if not 0 < f_lo < f_hi < s.fs / 2:
        raise ValueError(
            f"passband must satisfy 0 < f_lo < f_hi < fs/2, got f_lo={f_lo}, f_hi={f_hi}, fs={s.fs}"
        )
    k = _positive_bins(s.n)
    freqs = k * s.fs / s.n
    # relative slack so band edges that land exactly on a bin are kept
    tol = 1e-12 * s.fs
    keep = (freqs >= f_lo - tol) & (freqs <= f_hi + tol)
    return _passband(s, k[keep])


def full_passband(s: Spectrum) -> PassbandSpectrum:
    """Every positive-frequency bin strictly between DC and Nyquist."""
    return _passband(s, _positive_bins(s.n))


def _passband(s: Spectrum, idx: np.ndarray) -> PassbandSpectrum:
    if idx.size < MIN_PASSBAND_BINS:
        raise BandTooNarrowError(
            f"passband keeps {idx.size} bins, need at least {MIN_PASSBAND_BINS}"
        )
    return PassbandSpectrum(bins=s.bins[idx], bin_indices=idx, parent_length=s.n, fs=s.fs)


def phase_compensate(p: PassbandSpectrum, n: float) -> CompensatedSpectrum:
    """Rotate every passband bin by ``exp(+j 2 pi k n / N)``.

    ``n`` may be fractional, which evaluates the reconstruction on a finer
    (zero-padded) time grid.
    """
    if not 0 <= n < p.parent_length:
        raise ValueError(f"target sample {n} outside [0, {p.parent_length})")
    rot = np.exp(2j * np.pi * p.bin_indices * n / p.parent_length)
    return CompensatedSpectrum(
        entries=p.bins * rot,
        target_sample=n,
        bin_indices=p.bin_indices,
        parent_length=p.parent_length,
    )


def uniform_reconstruct(x_comp: CompensatedSpectrum) -> complex:
    """Uniform apodization ``(1/K) * ones`` applied to the compensated bins."""
    return complex(np.mean(x_comp.entries))


def envelope(a: AScan) -> np.ndarray:
    """Modulus of the analytic signal of ``a``."""
    return np.abs(hilbert(a.samples))
