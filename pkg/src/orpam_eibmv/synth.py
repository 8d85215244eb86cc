"""Synthetic OR-PAM A-scans and thin-film volumes with known ground truth.

The transducer impulse response is a Gaussian-modulated cosine. Axial
sidelobe interference is modeled as delayed, scaled replicas of every
reflector's echo, and electronic noise as white Gaussian noise.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .pipeline import Volume
from .transforms import AScan

DEFAULT_FS = 200e6
DEFAULT_NT = 256
DEFAULT_SOUND_SPEED = 1500.0
DEFAULT_FILM_DEPTH = 750e-6  # sample 100 at the default fs and sound speed
DEFAULT_TAPS = ((60e-9, 0.3), (120e-9, 0.15))

# -6 dB fractional bandwidth calibrated with `calibrate_bandwidth()` so the
# uniform reconstruction of the noiseless default thin film has a 69.3 um
# envelope FWHM (upsample 4, default passband).
CALIBRATED_BANDWIDTH = 0.7978
# Noise RMS calibrated with `calibrate_noise_rms()` for a median 40 dB
# peak-to-noise-floor on the uniform reconstruction of the default phantom.
CALIBRATED_NOISE_RMS = 0.0109

_FWHM_PER_SIGMA = 2.0 * np.sqrt(2.0 * np.log(2.0))


@dataclass(frozen=True)
class TransducerModel:
    """Gaussian-modulated cosine impulse response.

    Attributes:
        center_frequency: Carrier frequency in Hz.
        fractional_bandwidth: -6 dB (half-amplitude) spectral width divided by
            the center frequency.
    """

    center_frequency: float = 25e6
    fractional_bandwidth: float = CALIBRATED_BANDWIDTH

    def __post_init__(self):
        if not self.center_frequency > 0:
            raise ValueError("center frequency must be positive")
        if not self.fractional_bandwidth > 0:
            raise ValueError("fractional bandwidth must be positive")

    @property
    def sigma_t(self) -> float:
        """Standard deviation of the Gaussian time envelope in seconds."""
        sigma_f = self.fractional_bandwidth * self.center_frequency / _FWHM_PER_SIGMA
        return 1.0 / (2.0 * np.pi * sigma_f)

    @property
    def envelope_fwhm(self) -> float:
        """Analytic envelope FWHM of the impulse in seconds."""
        return _FWHM_PER_SIGMA * self.sigma_t

    def impulse(self, t: np.ndarray) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        return np.exp(-(t**2) / (2.0 * self.sigma_t**2)) * np.cos(2.0 * np.pi * self.center_frequency * t)


@dataclass(frozen=True)
class Scene:
    """Reflectors, interference taps and noise for one A-scan.

    Attributes:
        reflectors: ``(depth_m, amplitude)`` pairs.
        interference_taps: ``(delay_s, amplitude)`` pairs; every reflector
            gets one delayed replica per tap.
        noise_rms: RMS of the additive white Gaussian noise.
        rng_seed: Seed of the noise generator.
        sound_speed: Speed of sound in m/s used to map depth to time.
    """

    reflectors: tuple = ()
    interference_taps: tuple = DEFAULT_TAPS
    noise_rms: float = 0.0
    rng_seed: int = 0
    sound_speed: float = DEFAULT_SOUND_SPEED

    def to_dict(self) -> dict:
        d = asdict(self)
        d["reflectors"] = [list(r) for r in self.reflectors]
        d["interference_taps"] = [list(t) for t in self.interference_taps]
        return d


def synth_ascan(t: TransducerModel, s: Scene, fs: float = DEFAULT_FS, nt: int = DEFAULT_NT) -> AScan:
    """Render one A-scan.

    Each reflector contributes ``amplitude * impulse(t - depth / c)`` plus one
    replica per interference tap. Noise is drawn from
    ``numpy.random.default_rng(rng_seed)``.

    Raises:
        ValueError: If a reflector lies outside the recorded time window.
    """
    if t.center_frequency >= fs / 2:
        raise ValueError("center frequency must be below the Nyquist frequency")
    if s.noise_rms < 0:
        raise ValueError("noise RMS must be nonnegative")
    depth_max = nt / fs * s.sound_speed
    time = np.arange(nt) / fs
    x = np.zeros(nt)
    for depth, amp in s.reflectors:
        if not 0 <= depth < depth_max:
            raise ValueError(f"reflector depth {depth} m outside [0, {depth_max}) m")
        if not np.isfinite(amp):
            raise ValueError("reflector amplitude must be finite")
        t0 = depth / s.sound_speed
        x += amp * t.impulse(time - t0)
        for delay, tap_amp in s.interference_taps:
            x += amp * tap_amp * t.impulse(time - t0 - delay)
    if s.noise_rms > 0:
        x += s.noise_rms * np.random.default_rng(s.rng_seed).standard_normal(nt)
    return AScan(x, fs)


def thin_film_scene(film_depth: float = DEFAULT_FILM_DEPTH, noise_rms: float = 0.0, seed: int = 0,
                    taps=DEFAULT_TAPS, sound_speed: float = DEFAULT_SOUND_SPEED) -> Scene:
    return Scene(reflectors=((film_depth, 1.0),), interference_taps=tuple(taps),
                 noise_rms=noise_rms, rng_seed=seed, sound_speed=sound_speed)


def synth_thin_film_volume(
    t: TransducerModel | None = None,
    film_depth: float = DEFAULT_FILM_DEPTH,
    dims: tuple[int, int, int] = (1, 1, DEFAULT_NT),
    fs: float = DEFAULT_FS,
    noise_rms: float = CALIBRATED_NOISE_RMS,
    seed: int = 0,
    taps=DEFAULT_TAPS,
    sound_speed: float = DEFAULT_SOUND_SPEED,
    pitch: float = 0.0,
) -> Volume:
    """Thin film at ``film_depth`` under every lateral position.

    A-scan ``(x, y)`` gets its own noise stream, seeded from ``(seed, x, y)``
    through :class:`numpy.random.SeedSequence`.
    """
    t = TransducerModel() if t is None else t
    nx, ny, nt = dims
    if nx < 1 or ny < 1:
        raise ValueError(f"lateral dims must be >= 1, got {nx}x{ny}")
    clean = synth_ascan(t, thin_film_scene(film_depth, 0.0, seed, taps, sound_speed), fs, nt).samples
    data = np.empty((nx, ny, nt))
    for x in range(nx):
        for y in range(ny):
            data[x, y] = clean
            if noise_rms > 0:
                rng = np.random.default_rng(np.random.SeedSequence([seed, x, y]))
                data[x, y] += noise_rms * rng.standard_normal(nt)
    return Volume(data, fs, pitch)


def calibrate_bandwidth(target_um: float = 69.3, upsample: int = 4, lo: float = 0.3, hi: float = 2.0) -> float:
    """Fractional bandwidth whose noiseless thin-film uniform FWHM hits ``target_um``.

    Uses the default phantom, passband and sound speed; solved by Brent's
    method on the measured FWHM.
    """
    from scipy.optimize import brentq

    from .metrics import fwhm
    from .pipeline import ReconstructionConfig, reconstruct_ascan

    cfg = ReconstructionConfig(method="uniform", upsample=upsample)

    def excess(b):
        a = synth_ascan(TransducerModel(fractional_bandwidth=b), thin_film_scene())
        res = reconstruct_ascan(a, cfg)
        return fwhm(res.envelope, res.fs, cfg.sound_speed) - target_um

    return brentq(excess, lo, hi, xtol=1e-6)


def calibrate_noise_rms(target_db: float = -40.0, realizations: int = 16, upsample: int = 4,
                        start: float = 0.01, rounds: int = 3) -> float:
    """Noise RMS giving a median uniform-reconstruction noise floor of ``target_db``.

    The floor is nearly linear in the noise RMS, so a few rescaling rounds
    converge.
    """
    from .metrics import axial_profile
    from .pipeline import ReconstructionConfig, reconstruct_volume

    cfg = ReconstructionConfig(method="uniform", upsample=upsample)
    rms = start
    for _ in range(rounds):
        vol = synth_thin_film_volume(dims=(realizations, 1, DEFAULT_NT), noise_rms=rms)
        env = reconstruct_volume(vol, cfg).envelope
        floors = [axial_profile(env.data[x, 0], env.fs).noise_floor_db for x in range(realizations)]
        rms *= 10 ** ((target_db - np.median(floors)) / 20.0)
    return float(rms)
