"""Axial resolution and noise metrics for reconstructed envelopes.

Depth along an A-scan is one-way (photoacoustic): sample ``n`` sits at
``z = c * n / fs``.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .transforms import CompensatedSpectrum

# Noise is measured this far (in um) from the peak; clears the default
# interference taps at +60 ns / +120 ns (+90 / +180 um) and their tails.
DEFAULT_NOISE_GUARD_UM = 450.0


class UnboundedMainlobeError(ValueError):
    """The envelope never drops below half maximum on one side of the peak."""


class UndefinedMetricError(ValueError):
    pass


@dataclass(frozen=True)
class AxialProfileReport:
    """Resolution and noise summary of one envelope.

    ``noise_floor_db`` is ``-inf`` when the noise window is exactly zero; the
    JSON form reports that as ``null``.
    """

    fwhm_um: float
    peak_sample: int
    peak_value: float
    noise_floor_db: float
    max_sidelobe_db: float

    def to_dict(self) -> dict:
        d = asdict(self)
        for key in ("noise_floor_db", "max_sidelobe_db"):
            if not np.isfinite(d[key]):
                d[key] = None
        return d


def um_per_sample(fs: float, c: float) -> float:
    return c / fs * 1e6


def fwhm(envelope: np.ndarray, fs: float, c: float = 1500.0) -> float:
    """Full width at half maximum of the global envelope peak, in um.

    Walks outward from the peak (lowest index on ties) to the first samples
    below half maximum and interpolates the crossings linearly.

    Raises:
        UnboundedMainlobeError: If one side never falls below half maximum.
    """
    e = np.asarray(envelope, dtype=float)
    p = int(np.argmax(e))
    half = e[p] / 2.0
    if not half > 0:
        raise UndefinedMetricError("envelope peak is zero")

    below = np.flatnonzero(e[:p] < half)
    if below.size == 0:
        raise UnboundedMainlobeError("envelope stays above half maximum before the peak")
    i = below[-1]
    left = i + (half - e[i]) / (e[i + 1] - e[i])

    below = np.flatnonzero(e[p + 1:] < half)
    if below.size == 0:
        raise UnboundedMainlobeError("envelope stays above half maximum after the peak")
    j = p + 1 + below[0]
    right = j - 1 + (e[j - 1] - half) / (e[j - 1] - e[j])

    return (right - left) * um_per_sample(fs, c)


def _window(e: np.ndarray, w) -> np.ndarray:
    if isinstance(w, slice):
        return e[w]
    if isinstance(w, tuple) and len(w) == 2:
        return e[w[0]:w[1]]
    return e[np.asarray(w)]


def noise_floor(envelope: np.ndarray, signal_window, noise_window) -> float:
    """``20 log10(rms(noise) / peak(signal))`` in dB.

    Windows are ``(start, stop)`` pairs, slices, or index arrays. Returns
    ``-inf`` when the noise window is identically zero.

    Raises:
        UndefinedMetricError: If the signal peak is zero or a window is empty.
    """
    e = np.asarray(envelope, dtype=float)
    sig = _window(e, signal_window)
    noise = _window(e, noise_window)
    if sig.size == 0 or noise.size == 0:
        raise UndefinedMetricError("empty signal or noise window")
    peak = np.abs(sig).max()
    if peak == 0:
        raise UndefinedMetricError("signal window peak is zero")
    rms = np.sqrt(np.mean(noise**2))
    if rms == 0:
        return -np.inf
    return float(20.0 * np.log10(rms / peak))


def spectral_coherence(x_comp: CompensatedSpectrum | np.ndarray) -> float:
    """``|mean(entries)| / mean(|entries|)``: 1 for a flat compensated spectrum."""
    x = x_comp.entries if isinstance(x_comp, CompensatedSpectrum) else np.asarray(x_comp)
    if x.size < 2:
        raise ValueError("spectral coherence needs at least two bins")
    denom = np.mean(np.abs(x))
    if denom == 0:
        raise UndefinedMetricError("all-zero compensated spectrum")
    return float(min(np.abs(np.mean(x)) / denom, 1.0))


def noise_indices(n: int, peak: int, guard_samples: float) -> np.ndarray:
    idx = np.arange(n)
    return idx[np.abs(idx - peak) >= guard_samples]


def axial_profile(
    envelope: np.ndarray,
    fs: float,
    c: float = 1500.0,
    noise_guard_um: float = DEFAULT_NOISE_GUARD_UM,
) -> AxialProfileReport:
    """FWHM, noise floor and peak sidelobe of one envelope.

    The mainlobe region is the peak +/- 2 FWHM; the sidelobe level is the
    largest envelope value outside it. Noise is every sample at least
    ``noise_guard_um`` away from the peak.
    """
    e = np.asarray(envelope, dtype=float)
    p = int(np.argmax(e))
    width_um = fwhm(e, fs, c)
    step = um_per_sample(fs, c)
    half_region = 2.0 * width_um / step
    lo = max(0, int(np.floor(p - half_region)))
    hi = min(e.size, int(np.ceil(p + half_region)) + 1)
    outside = np.concatenate([e[:lo], e[hi:]])
    peak = e[p]
    with np.errstate(divide="ignore"):
        sidelobe = float(20.0 * np.log10(outside.max() / peak)) if outside.size else -np.inf
    noise = noise_indices(e.size, p, noise_guard_um / step)
    floor = noise_floor(e, (lo, hi), noise)
    return AxialProfileReport(
        fwhm_um=float(width_um),
        peak_sample=p,
        peak_value=float(peak),
        noise_floor_db=floor,
        max_sidelobe_db=sidelobe,
    )
