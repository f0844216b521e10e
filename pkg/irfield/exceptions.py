"""Custom exceptions for irfield."""

from typing import Optional


class IRFieldError(Exception):
    """Base exception for all irfield errors."""

    pass


# ==================== Validation (exit code 1) ====================


class ValidationError(IRFieldError):
    """Raised when an input violates a documented precondition."""

    pass


class InvalidSignalError(ValidationError):
    """Raised when a signal is empty, non-finite, or has a bad sample rate."""

    pass


class DimensionMismatchError(ValidationError):
    """Raised when array shapes or lengths are inconsistent."""

    def __init__(self, message: str, expected: Optional[object] = None, actual: Optional[object] = None):
        super().__init__(message)
        self.expected = expected
        self.actual = actual


class ConfigError(ValidationError):
    """Raised when a configuration is internally inconsistent."""

    pass


class FrequencyRangeError(ValidationError):
    """Raised when a frequency or band lies outside (0, sample_rate/2)."""

    pass


class GridError(ValidationError):
    """Raised for empty IR sets, missing grid metadata or out-of-grid queries."""

    pass


class TrajectoryError(ValidationError):
    """Raised when a position trajectory is malformed."""

    pass


# ==================== Model files (exit code 2) ====================


class ModelFormatError(IRFieldError):
    """Base exception for model file problems."""

    pass


class BadMagicError(ModelFormatError):
    """Raised when a model file does not start with the expected magic."""

    pass


class UnsupportedVersionError(ModelFormatError):
    """Raised when a model file declares an unknown format version."""

    def __init__(self, message: str, version: int = 0):
        super().__init__(message)
        self.version = version


class SizeMismatchError(ModelFormatError):
    """Raised when declared sizes disagree with the payload length."""

    def __init__(self, message: str, expected: int = 0, actual: int = 0):
        super().__init__(message)
        self.expected = expected
        self.actual = actual


# ==================== Numerical failures (exit code 2) ====================


class NumericalError(IRFieldError):
    """Base exception for runtime numerical failures."""

    pass


class NonFiniteGradientError(NumericalError):
    """Raised when an optimizer step receives NaN or Inf gradients."""

    pass


class TrainingDivergedError(NumericalError):
    """Raised when the training loss becomes non-finite."""

    def __init__(self, message: str, step: int = 0):
        super().__init__(message)
        self.step = step


class NlmsDivergenceError(NumericalError):
    """Raised when NLMS weights grow past the divergence bound."""

    def __init__(self, message: str, step: int = 0):
        super().__init__(message)
        self.step = step


class IllConditionedError(NumericalError):
    """Raised when too many excitation bins fall below the spectral floor."""

    def __init__(self, message: str, fraction: float = 0.0):
        super().__init__(message)
        self.fraction = fraction
