"""irfield - Neural impulse-response fields with noise-robust training."""

from irfield.types import Signal, ImpulseResponse, Spectrum, GridMetadata, MeasuredIrSet
from irfield.config import (
    EncoderConfig,
    FilterFieldSpec,
    MlpConfig,
    NoiseSpec,
    SpectralLossConfig,
    TrainConfig,
)
from irfield.exceptions import (
    IRFieldError,
    ValidationError,
    InvalidSignalError,
    DimensionMismatchError,
    ConfigError,
    FrequencyRangeError,
    GridError,
    TrajectoryError,
    ModelFormatError,
    BadMagicError,
    UnsupportedVersionError,
    SizeMismatchError,
    NumericalError,
    NonFiniteGradientError,
    TrainingDivergedError,
    NlmsDivergenceError,
    IllConditionedError,
)
from irfield.dsp import convolve, log_sine_sweep, sdr_db
from irfield.neural_field import FieldModel, init_params, count_parameters
from irfield.losses import noise_robust_loss, l2_loss
from irfield.baselines import wiener_estimate, nlms_estimate, nearest_neighbor_ir, bilinear_ir
from irfield.synthetic import make_filter_field, make_target
from irfield.trainer import train, eval_sdr
from irfield.studies import noise_sweep_study, interpolation_study
from irfield.model_io import save_model, load_model, compression_report
from irfield.renderer import StreamingRenderer, render

__version__ = "1.0.0"
__all__ = [
    "Signal",
    "ImpulseResponse",
    "Spectrum",
    "GridMetadata",
    "MeasuredIrSet",
    "EncoderConfig",
    "FilterFieldSpec",
    "MlpConfig",
    "NoiseSpec",
    "SpectralLossConfig",
    "TrainConfig",
    "IRFieldError",
    "ValidationError",
    "InvalidSignalError",
    "DimensionMismatchError",
    "ConfigError",
    "FrequencyRangeError",
    "GridError",
    "TrajectoryError",
    "ModelFormatError",
    "BadMagicError",
    "UnsupportedVersionError",
    "SizeMismatchError",
    "NumericalError",
    "NonFiniteGradientError",
    "TrainingDivergedError",
    "NlmsDivergenceError",
    "IllConditionedError",
    "convolve",
    "log_sine_sweep",
    "sdr_db",
    "FieldModel",
    "init_params",
    "count_parameters",
    "noise_robust_loss",
    "l2_loss",
    "wiener_estimate",
    "nlms_estimate",
    "nearest_neighbor_ir",
    "bilinear_ir",
    "make_filter_field",
    "make_target",
    "train",
    "eval_sdr",
    "noise_sweep_study",
    "interpolation_study",
    "save_model",
    "load_model",
    "compression_report",
    "StreamingRenderer",
    "render",
]
