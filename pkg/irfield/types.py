"""Type definitions for irfield."""

from dataclasses import dataclass, field
from typing import Optional, Dict, Any, List, Sequence, Tuple

import numpy as np

from irfield.exceptions import InvalidSignalError, DimensionMismatchError, GridError

DEFAULT_SAMPLE_RATE = 48000


@dataclass
class Signal:
    """Sample-rate-tagged sequence of real samples."""

    samples: np.ndarray
    sample_rate_hz: int = DEFAULT_SAMPLE_RATE

    def __post_init__(self) -> None:
        self.samples = np.asarray(self.samples, dtype=np.float64).reshape(-1)
        if self.samples.size < 1:
            raise InvalidSignalError("Signal must contain at least one sample")
        if not np.all(np.isfinite(self.samples)):
            raise InvalidSignalError("Signal contains non-finite samples")
        if int(self.sample_rate_hz) <= 0:
            raise InvalidSignalError(f"Sample rate must be positive, got {self.sample_rate_hz}")
        self.sample_rate_hz = int(self.sample_rate_hz)

    def __len__(self) -> int:
        return int(self.samples.size)

    @property
    def duration_s(self) -> float:
        """Get duration in seconds."""
        return len(self) / self.sample_rate_hz

    @property
    def energy(self) -> float:
        """Get total energy sum(x^2)."""
        return float(np.dot(self.samples, self.samples))

    def to_dict(self) -> Dict[str, Any]:
        """Convert to dictionary (metadata only)."""
        return {
            "sample_rate_hz": self.sample_rate_hz,
            "num_samples": len(self),
            "duration_s": self.duration_s,
        }


@dataclass
class ImpulseResponse:
    """Multi-channel FIR filter attached to a 3-D position."""

    taps: np.ndarray  # shape (channels, num_taps)
    position: Tuple[float, float, float] = (0.0, 0.0, 0.0)

    def __post_init__(self) -> None:
        taps = np.asarray(self.taps, dtype=np.float64)
        if taps.ndim == 1:
            taps = taps[np.newaxis, :]
        if taps.ndim != 2 or taps.shape[0] < 1 or taps.shape[1] < 1:
            raise DimensionMismatchError(
                f"Impulse response taps must have shape (channels, taps), got {taps.shape}"
            )
        if not np.all(np.isfinite(taps)):
            raise InvalidSignalError("Impulse response contains non-finite taps")
        self.taps = taps
        self.position = tuple(float(v) for v in self.position)  # type: ignore[assignment]
        if len(self.position) != 3:
            raise DimensionMismatchError("Position must have three coordinates")

    @property
    def channels(self) -> int:
        """Get number of channels."""
        return int(self.taps.shape[0])

    @property
    def num_taps(self) -> int:
        """Get taps per channel."""
        return int(self.taps.shape[1])

    def channel(self, index: int) -> np.ndarray:
        """Get taps of one channel."""
        return self.taps[index]

    def to_dict(self) -> Dict[str, Any]:
        """Convert to dictionary."""
        return {
            "position": list(self.position),
            "channels": self.channels,
            "num_taps": self.num_taps,
        }


@dataclass
class Spectrum:
    """One-sided spectrum of a real sequence."""

    bins: np.ndarray
    fft_len: int
    is_magnitude: bool = False

    def __post_init__(self) -> None:
        expected = self.fft_len // 2 + 1
        if self.bins.shape[-1] != expected:
            raise DimensionMismatchError(
                f"Spectrum of fft_len={self.fft_len} needs {expected} bins, got {self.bins.shape[-1]}",
                expected=expected,
                actual=self.bins.shape[-1],
            )

    @property
    def num_bins(self) -> int:
        """Get number of one-sided bins."""
        return int(self.bins.shape[-1])

    def magnitude(self) -> np.ndarray:
        """Get magnitude per bin."""
        return np.abs(self.bins)

    def energy(self) -> float:
        """Get time-domain energy through the one-sided Parseval identity."""
        power = self.magnitude() ** 2
        weights = np.full(power.shape[-1], 2.0)
        weights[0] = 1.0
        weights[-1] = 1.0
        return float(np.sum(weights * power) / self.fft_len)


@dataclass
class GridMetadata:
    """Azimuth/elevation indexing for IR sets sampled on a sphere grid."""

    azimuths_deg: np.ndarray  # ascending, in [0, 360)
    elevations_deg: np.ndarray  # ascending
    node_index: np.ndarray  # shape (n_el, n_az) -> entry index

    def __post_init__(self) -> None:
        self.azimuths_deg = np.asarray(self.azimuths_deg, dtype=np.float64)
        self.elevations_deg = np.asarray(self.elevations_deg, dtype=np.float64)
        self.node_index = np.asarray(self.node_index, dtype=np.int64)
        if self.node_index.shape != (self.elevations_deg.size, self.azimuths_deg.size):
            raise DimensionMismatchError("Grid node index shape must be (n_elevations, n_azimuths)")

    @property
    def shape(self) -> Tuple[int, int]:
        """Get (n_elevations, n_azimuths)."""
        return (int(self.elevations_deg.size), int(self.azimuths_deg.size))


@dataclass
class MeasuredIrSet:
    """Collection of impulse responses at distinct positions."""

    entries: List[ImpulseResponse]
    grid: Optional[GridMetadata] = None
    sample_rate_hz: int = DEFAULT_SAMPLE_RATE
    metadata: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.entries:
            shape = self.entries[0].taps.shape
            for ir in self.entries:
                if ir.taps.shape != shape:
                    raise DimensionMismatchError(
                        "All impulse responses in a set must share channels and taps"
                    )
            positions = self.positions
            if len(np.unique(positions, axis=0)) != len(positions):
                raise GridError("Impulse response positions must be pairwise distinct")

    def __len__(self) -> int:
        return len(self.entries)

    def __getitem__(self, index: int) -> ImpulseResponse:
        return self.entries[index]

    @property
    def positions(self) -> np.ndarray:
        """Get (n, 3) array of positions."""
        return np.array([ir.position for ir in self.entries], dtype=np.float64).reshape(-1, 3)

    @property
    def channels(self) -> int:
        """Get channels per IR."""
        return self.entries[0].channels if self.entries else 0

    @property
    def num_taps(self) -> int:
        """Get taps per channel."""
        return self.entries[0].num_taps if self.entries else 0

    @property
    def raw_float_count(self) -> int:
        """Get number of floats needed to store every filter directly."""
        return len(self) * self.channels * self.num_taps

    def subset(self, indices: Sequence[int], grid: Optional[GridMetadata] = None) -> "MeasuredIrSet":
        """Build a new set from selected entries."""
        return MeasuredIrSet(
            entries=[self.entries[i] for i in indices],
            grid=grid,
            sample_rate_hz=self.sample_rate_hz,
            metadata=dict(self.metadata),
        )

    def to_dict(self) -> Dict[str, Any]:
        """Convert to dictionary (metadata only)."""
        return {
            "num_positions": len(self),
            "channels": self.channels,
            "num_taps": self.num_taps,
            "sample_rate_hz": self.sample_rate_hz,
            "grid_shape": list(self.grid.shape) if self.grid is not None else None,
        }
