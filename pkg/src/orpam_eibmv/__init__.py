"""Adaptive frequency-domain reconstruction of OR-PAM axial signals.

Implements uniform (plain inverse DFT), minimum-variance (F-MV) and
eigenspace-based minimum-variance (F-EIBMV) apodization of the inverse DFT,
together with a synthetic thin-film phantom generator, resolution/noise
metrics, a flat binary volume format and a command-line interface.
"""

from .transforms import (
    AScan,
    CompensatedSpectrum,
    PassbandSpectrum,
    Spectrum,
    envelope,
    forward_dft,
    inverse_dft,
    phase_compensate,
    select_passband,
    uniform_reconstruct,
)
from .covariance import CovarianceEstimate, SnapshotSet, estimate_covariance, make_snapshots
from .mv import ApodizationWeights, SingularCovarianceError, mv_weight, steering_vector
from .eigenspace import (
    EigenDecomposition,
    NoSignalError,
    SignalSubspace,
    eig_hermitian,
    project_weight,
    select_signal_subspace,
)
from .pipeline import (
    ReconstructionConfig,
    ReconstructionError,
    ReconstructionResult,
    Volume,
    reconstruct_ascan,
    reconstruct_sample,
    reconstruct_volume,
)
from .synth import Scene, TransducerModel, synth_ascan, synth_thin_film_volume
from .metrics import AxialProfileReport, axial_profile, fwhm, noise_floor, spectral_coherence

__version__ = "0.1.0"
