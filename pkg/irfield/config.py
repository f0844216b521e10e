"""Configuration models and loading for irfield."""

import logging
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple, Type, TypeVar, Union

from dotenv import load_dotenv
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator
from pydantic import ValidationError as PydanticValidationError

from irfield.exceptions import ConfigError
from irfield.utils import get_env_or_default

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover
    import tomli as tomllib

logger = logging.getLogger(__name__)

ModelT = TypeVar("ModelT", bound="BaseConfig")

NOISE_METHODS = ("wiener", "nlms", "mlp_l2", "mlp_noise_robust")
INTERP_METHODS = ("mlp", "nn", "bilinear")


class BaseConfig(BaseModel):
    """Common behaviour for config models."""

    model_config = ConfigDict(extra="forbid", validate_assignment=True)

    def to_dict(self) -> Dict[str, Any]:
        """Convert to dictionary."""
        return self.model_dump(mode="json")


# ==================== Signal processing ====================


class SweepConfig(BaseConfig):
    """Logarithmic sine sweep used as the excitation."""

    f0_hz: float = 20.0
    f1_hz: float = 20000.0
    duration_s: float = Field(1.0, gt=0)
    sample_rate_hz: int = Field(48000, gt=0)


class SpectralLossConfig(BaseConfig):
    """Framing of the noise-robust magnitude loss."""

    fft_len: int = 2048
    frame_len: int = 2048
    hop: int = 2048
    window: str = "rectangular"

    @field_validator("window")
    @classmethod
    def _check_window(cls, value: str) -> str:
        if value not in ("rectangular", "hann"):
            raise ValueError(f"window must be 'rectangular' or 'hann', got {value!r}")
        return value

    @model_validator(mode="after")
    def _check_framing(self) -> "SpectralLossConfig":
        if self.fft_len <= 0 or self.fft_len % 2:
            raise ValueError(f"fft_len must be positive and even, got {self.fft_len}")
        if not 1 <= self.frame_len <= self.fft_len:
            raise ValueError("frame_len must lie in [1, fft_len]")
        if not 1 <= self.hop <= self.frame_len:
            raise ValueError("hop must lie in [1, frame_len]")
        return self

    @property
    def num_bins(self) -> int:
        """Get K = fft_len/2 + 1."""
        return self.fft_len // 2 + 1


# ==================== Networks ====================


class EncoderConfig(BaseConfig):
    """Fourier-feature encoder."""

    num_octaves: int = Field(10, ge=1, le=255)
    input_dim: int = Field(4, ge=1, le=255)

    @property
    def output_dim(self) -> int:
        """Get encoded feature width."""
        return self.input_dim * 2 * self.num_octaves


class MlpConfig(BaseConfig):
    """Architecture of a coordinate MLP; num_layers counts weight matrices."""

    num_layers: int = Field(6, ge=1, le=255)
    hidden: int = Field(128, ge=1)
    slope: float = Field(0.01, ge=0.0, lt=1.0)

    def layer_dims(self, d_in: int, d_out: int) -> List[int]:
        """Get [d_in, h, ..., h, d_out]."""
        return [d_in] + [self.hidden] * (self.num_layers - 1) + [d_out]


# ==================== Baselines ====================


class NlmsConfig(BaseConfig):
    """Normalized LMS adaptive filter."""

    filter_len: int = Field(64, ge=1)
    step_size: float = 0.5
    regularization: float = Field(1e-6, gt=0)
    divergence_bound: float = Field(1e6, gt=0)

    @field_validator("step_size")
    @classmethod
    def _check_step(cls, value: float) -> float:
        if not 0.0 < value < 2.0:
            raise ValueError(f"step_size must lie in (0, 2), got {value}")
        return value


class WienerConfig(BaseConfig):
    """Wiener deconvolution with tail-based noise estimation."""

    floor_rel: float = Field(1e-4, gt=0)
    noise_fraction: float = Field(0.1, gt=0, lt=1)
    max_floored_fraction: float = Field(0.5, gt=0, le=1)


# ==================== Data ====================


class FilterFieldSpec(BaseConfig):
    """Synthetic spatial filter field on a sphere grid."""

    n_azimuth: int = 24
    n_elevation: int = 12
    elevation_range_deg: Tuple[float, float] = (-75.0, 75.0)
    num_taps: int = Field(400, ge=32)
    channels: int = Field(2, ge=1)
    delay_range_ms: Tuple[float, float] = (0.5, 0.7)
    num_echoes: int = Field(8, ge=0)
    echo_gain: float = Field(0.5, ge=0)
    decay_ms: float = Field(2.0, gt=0)
    pulse_width: float = Field(2.0, gt=0)
    sample_rate_hz: int = Field(48000, gt=0)
    seed: int = 0

    @model_validator(mode="after")
    def _check_grid(self) -> "FilterFieldSpec":
        if self.n_azimuth < 2 or self.n_elevation < 2:
            raise ValueError("grid must be at least 2x2")
        lo, hi = self.elevation_range_deg
        if not -90.0 < lo < hi < 90.0:
            raise ValueError("elevation range must satisfy -90 < lo < hi < 90")
        d_lo, d_hi = self.delay_range_ms
        if not 0.0 <= d_lo <= d_hi:
            raise ValueError("delay range must satisfy 0 <= lo <= hi")
        return self

    @property
    def num_nodes(self) -> int:
        """Get grid node count."""
        return self.n_azimuth * self.n_elevation


class NoiseSpec(BaseConfig):
    """Additive stationary noise injected into targets."""

    kind: str = "independent"
    target_snr_db: float = 0.0
    band_width_hz: float = Field(3000.0, gt=0)
    fft_len: int = 2048
    sample_rate_hz: int = Field(48000, gt=0)
    seed: int = 0

    @field_validator("kind")
    @classmethod
    def _check_kind(cls, value: str) -> str:
        if value not in ("independent", "dependent"):
            raise ValueError(f"kind must be 'independent' or 'dependent', got {value!r}")
        return value


# ==================== Training ====================


class TrainConfig(BaseConfig):
    """Training loop settings."""

    steps: int = Field(2000, ge=0)
    positions_per_batch: int = Field(4, ge=1)
    learning_rate: float = Field(1e-4, gt=0)
    lr_schedule: str = "constant"
    lr_final_ratio: float = Field(0.1, gt=0, le=1)
    loss_kind: str = "l2"
    noise_model_kind: str = "none"
    noise_learning_rate: float = Field(1e-2, gt=0)
    encoder: EncoderConfig = Field(default_factory=EncoderConfig)
    network: MlpConfig = Field(default_factory=MlpConfig)
    noise_network: MlpConfig = Field(default_factory=lambda: MlpConfig(num_layers=4, hidden=128))
    loss: SpectralLossConfig = Field(default_factory=SpectralLossConfig)
    seed: int = 0
    eval_every: int = Field(0, ge=0)
    workers: int = Field(1, ge=1)

    @field_validator("lr_schedule")
    @classmethod
    def _check_schedule(cls, value: str) -> str:
        if value not in ("constant", "exponential"):
            raise ValueError(f"lr_schedule must be 'constant' or 'exponential', got {value!r}")
        return value

    @field_validator("loss_kind")
    @classmethod
    def _check_loss(cls, value: str) -> str:
        if value not in ("l2", "noise_robust"):
            raise ValueError(f"loss_kind must be 'l2' or 'noise_robust', got {value!r}")
        return value

    @field_validator("noise_model_kind")
    @classmethod
    def _check_noise_kind(cls, value: str) -> str:
        if value not in ("none", "static", "positional"):
            raise ValueError(f"noise_model_kind must be none/static/positional, got {value!r}")
        return value

    @model_validator(mode="after")
    def _check_loss_needs_noise(self) -> "TrainConfig":
        if self.loss_kind == "noise_robust" and self.noise_model_kind == "none":
            raise ValueError("noise_robust loss requires a noise model kind other than 'none'")
        return self

    def learning_rate_at(self, step: int) -> float:
        """Get the learning rate for a given step."""
        if self.lr_schedule == "constant" or self.steps <= 1:
            return self.learning_rate
        return self.learning_rate * self.lr_final_ratio ** (step / (self.steps - 1))


# ==================== Studies and rendering ====================


class NoiseStudyConfig(BaseConfig):
    """Noise sweep comparison of estimators."""

    snr_list: List[float] = Field(default_factory=lambda: [0.0, -10.0, -20.0, -30.0])
    methods: List[str] = Field(default_factory=lambda: list(NOISE_METHODS))
    noise_kind: str = "independent"
    field_spec: FilterFieldSpec = Field(
        default_factory=lambda: FilterFieldSpec(n_azimuth=4, n_elevation=4)
    )
    sweep: SweepConfig = Field(default_factory=SweepConfig)
    train: TrainConfig = Field(default_factory=TrainConfig)
    nlms: NlmsConfig = Field(default_factory=NlmsConfig)
    wiener: WienerConfig = Field(default_factory=WienerConfig)
    seed: int = 0

    @model_validator(mode="after")
    def _check_lists(self) -> "NoiseStudyConfig":
        if not self.snr_list:
            raise ValueError("snr_list must not be empty")
        unknown = [m for m in self.methods if m not in NOISE_METHODS]
        if unknown or not self.methods:
            raise ValueError(f"methods must be a non-empty subset of {NOISE_METHODS}")
        if self.noise_kind not in ("independent", "dependent"):
            raise ValueError("noise_kind must be 'independent' or 'dependent'")
        return self


class InterpStudyConfig(BaseConfig):
    """Interpolation comparison over training-set sizes."""

    train_counts: List[int] = Field(default_factory=lambda: [36, 72, 144, 216])
    methods: List[str] = Field(default_factory=lambda: list(INTERP_METHODS))
    field_spec: FilterFieldSpec = Field(default_factory=FilterFieldSpec)
    sweep: SweepConfig = Field(default_factory=SweepConfig)
    train: TrainConfig = Field(default_factory=TrainConfig)
    seed: int = 0

    @model_validator(mode="after")
    def _check_lists(self) -> "InterpStudyConfig":
        if not self.train_counts:
            raise ValueError("train_counts must not be empty")
        unknown = [m for m in self.methods if m not in INTERP_METHODS]
        if unknown or not self.methods:
            raise ValueError(f"methods must be a non-empty subset of {INTERP_METHODS}")
        return self


class RenderConfig(BaseConfig):
    """Streaming renderer settings."""

    frame_size: int = Field(512, ge=1)
    crossfade: int = Field(64, ge=0)


class Settings(BaseConfig):
    """Process-wide settings from the environment."""

    seed: int = 0
    workers: int = Field(1, ge=1)
    log_level: str = "INFO"
    out_dir: str = "."

    @classmethod
    def from_env(cls, dotenv_path: Optional[Union[str, Path]] = None) -> "Settings":
        """
        Build settings from IRFIELD_* environment variables.

        Args:
            dotenv_path: Optional .env file loaded before reading the environment

        Returns:
            Settings instance
        """
        load_dotenv(dotenv_path=dotenv_path, override=False)
        return cls(
            seed=int(get_env_or_default("IRFIELD_SEED", "0") or 0),
            workers=int(get_env_or_default("IRFIELD_WORKERS", "1") or 1),
            log_level=(get_env_or_default("IRFIELD_LOG_LEVEL", "INFO") or "INFO").upper(),
            out_dir=get_env_or_default("IRFIELD_OUT_DIR", ".") or ".",
        )


# ==================== Loading ====================


def load_config(path: Optional[Union[str, Path]]) -> Dict[str, Dict[str, Any]]:
    """
    Read a TOML config file into per-section tables.

    Args:
        path: TOML file path, or None for no file

    Returns:
        Mapping of section name to table

    Raises:
        ConfigError: If the file is missing or not valid TOML
    """
    if path is None:
        return {}
    p = Path(path)
    if not p.exists():
        raise ConfigError(f"Config file not found: {p}")
    try:
        with p.open("rb") as fh:
            data = tomllib.load(fh)
    except tomllib.TOMLDecodeError as e:
        raise ConfigError(f"Invalid TOML in {p}: {e}") from e
    logger.debug(f"Loaded config sections {sorted(data)} from {p}")
    return {k: v for k, v in data.items() if isinstance(v, dict)}


def build_config(
    model: Type[ModelT],
    table: Optional[Dict[str, Any]] = None,
    overrides: Optional[Dict[str, Any]] = None,
) -> ModelT:
    """
    Build a config model from a file table plus CLI overrides.

    Args:
        model: Config model class
        table: Values from the config file
        overrides: Values from flags; None entries are ignored

    Returns:
        Validated config instance

    Raises:
        ConfigError: If validation fails
    """
    values: Dict[str, Any] = dict(table or {})
    for key, value in (overrides or {}).items():
        if value is not None:
            values[key] = value
    try:
        return model(**values)
    except PydanticValidationError as e:
        raise ConfigError(f"Invalid {model.__name__}: {e}") from e
