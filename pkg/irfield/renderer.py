"""Streaming convolution of a source with position-dependent filters."""

import csv
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import fft as sfft

from irfield.config import RenderConfig
from irfield.dsp import read_wav, write_wav
from irfield.exceptions import ConfigError, InvalidSignalError, TrajectoryError
from irfield.neural_field import FieldModel
from irfield.utils import timing_stats

logger = logging.getLogger(__name__)

TRAJECTORY_COLUMNS = ("time_s", "x", "y", "z")


# ==================== Trajectories ====================


def load_trajectory(path: Union[str, Path]) -> Tuple[np.ndarray, np.ndarray]:
    """
    Read a trajectory CSV with columns time_s, x, y, z.

    Returns:
        (times of shape (n,), positions of shape (n, 3))

    Raises:
        TrajectoryError: If the file is missing, malformed, empty or not time-ordered
    """
    p = Path(path)
    if not p.exists():
        raise TrajectoryError(f"Trajectory file not found: {p}")
    with p.open(newline="") as fh:
        reader = csv.DictReader(fh)
        missing = [c for c in TRAJECTORY_COLUMNS if c not in (reader.fieldnames or [])]
        if missing:
            raise TrajectoryError(f"Trajectory CSV lacks columns {missing}")
        rows = []
        for line, row in enumerate(reader, start=2):
            try:
                rows.append([float(row[c]) for c in TRAJECTORY_COLUMNS])
            except (TypeError, ValueError) as e:
                raise TrajectoryError(f"Trajectory line {line} is not numeric: {e}") from e
    if not rows:
        raise TrajectoryError("Trajectory has no points")
    data = np.asarray(rows, dtype=np.float64)
    return validate_trajectory(data[:, 0], data[:, 1:])


def validate_trajectory(times: Sequence[float], positions: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Check shapes, finiteness and time order of a trajectory."""
    t = np.asarray(times, dtype=np.float64).reshape(-1)
    pos = np.asarray(positions, dtype=np.float64)
    if t.size == 0 or pos.shape != (t.size, 3):
        raise TrajectoryError(f"Trajectory needs n times and (n, 3) positions, got {t.shape} and {pos.shape}")
    if not (np.all(np.isfinite(t)) and np.all(np.isfinite(pos))):
        raise TrajectoryError("Trajectory contains non-finite values")
    if np.any(np.diff(t) < 0):
        raise TrajectoryError("Trajectory timestamps must be non-decreasing")
    if t[0] < 0:
        raise TrajectoryError("Trajectory timestamps must be non-negative")
    return t, pos


def position_at(times: np.ndarray, positions: np.ndarray, t: float) -> np.ndarray:
    """Linear interpolation of the trajectory at t; endpoints are held outside its span."""
    return np.array([np.interp(t, times, positions[:, k]) for k in range(3)])


# ==================== Renderer ====================


class StreamingRenderer:
    """
    Overlap-save convolution, one filter per frame.

    The renderer keeps the last T - 1 input samples. Each frame is convolved
    with the filter predicted at the frame's position; when that filter
    differs from the previous frame's, the first `crossfade` output samples
    fade from the previous filter's output to the new one.
    """

    def __init__(self, model: FieldModel, frame_size: int = 512, crossfade: int = 64):
        if frame_size < 1:
            raise ConfigError(f"frame_size must be at least 1, got {frame_size}")
        if crossfade < 0:
            raise ConfigError(f"crossfade must be non-negative, got {crossfade}")
        self.model = model
        self.frame_size = int(frame_size)
        self.crossfade = int(crossfade)
        self.num_taps = model.num_taps
        self.channels = model.channels
        self.fft_len = sfft.next_fast_len(self.num_taps - 1 + self.frame_size, real=True)
        self._history = np.zeros(self.num_taps - 1)
        self._position: Optional[np.ndarray] = None
        self._taps: Optional[np.ndarray] = None
        self._spectrum: Optional[np.ndarray] = None
        self.frame_times_s: List[float] = []

    def reset(self) -> None:
        """Clear input history and the current filter."""
        self._history = np.zeros(self.num_taps - 1)
        self._position = None
        self._taps = None
        self._spectrum = None
        self.frame_times_s = []

    def _filter_block(self, block: np.ndarray, spectrum: np.ndarray, n: int) -> np.ndarray:
        out = sfft.irfft(sfft.rfft(block, n=self.fft_len)[None, :] * spectrum, n=self.fft_len, axis=-1)
        return out[:, self.num_taps - 1 : self.num_taps - 1 + n]

    def process_frame(self, frame: np.ndarray, position: Sequence[float]) -> np.ndarray:
        """
        Render one frame of mono input.

        Args:
            frame: Up to frame_size samples
            position: Position used for this frame's filter

        Returns:
            Output of shape (channels, len(frame))
        """
        x = np.asarray(frame, dtype=np.float64).reshape(-1)
        if x.size > self.frame_size:
            raise InvalidSignalError(f"Frame of {x.size} samples exceeds frame_size {self.frame_size}")
        if not np.all(np.isfinite(x)):
            raise InvalidSignalError("Frame contains non-finite samples")
        start = time.perf_counter()

        pos = np.asarray(position, dtype=np.float64).reshape(3)
        previous = self._spectrum
        changed = False
        if self._position is None or not np.array_equal(pos, self._position):
            taps = self.model.predict_ir(pos).taps
            if self._taps is None or not np.array_equal(taps, self._taps):
                self._taps = taps
                self._spectrum = sfft.rfft(taps, n=self.fft_len, axis=-1)
                changed = previous is not None
            self._position = pos
        assert self._spectrum is not None

        block = np.concatenate([self._history, x])
        out = self._filter_block(block, self._spectrum, x.size)
        fade = min(self.crossfade, x.size)
        if changed and fade > 0:
            old = self._filter_block(block, previous, fade)
            ramp = (np.arange(fade) + 1.0) / (fade + 1.0)
            out[:, :fade] = (1.0 - ramp) * old + ramp * out[:, :fade]
        if self.num_taps > 1:
            self._history = block[-(self.num_taps - 1) :]
        self.frame_times_s.append(time.perf_counter() - start)
        return out

    def flush(self, position: Optional[Sequence[float]] = None) -> np.ndarray:
        """Emit the remaining T - 1 output samples by feeding silence."""
        tail_len = self.num_taps - 1
        if tail_len == 0:
            return np.zeros((self.channels, 0))
        pos = position if position is not None else self._position
        if pos is None:
            return np.zeros((self.channels, tail_len))
        pieces = []
        remaining = tail_len
        while remaining > 0:
            n = min(self.frame_size, remaining)
            pieces.append(self.process_frame(np.zeros(n), pos))
            remaining -= n
        return np.concatenate(pieces, axis=1)


@dataclass
class RenderResult:
    """Rendered output with per-frame compute times."""

    output: np.ndarray
    sample_rate_hz: int
    frame_size: int
    frame_times_s: List[float] = field(default_factory=list)

    @property
    def frame_budget_ms(self) -> float:
        """Get real-time budget per frame."""
        return 1e3 * self.frame_size / self.sample_rate_hz

    def to_dict(self) -> Dict[str, Any]:
        """Convert to dictionary (timing kept separate)."""
        return {
            "num_samples": int(self.output.shape[1]),
            "channels": int(self.output.shape[0]),
            "sample_rate_hz": self.sample_rate_hz,
            "frame_size": self.frame_size,
            "frame_budget_ms": self.frame_budget_ms,
            "timing": timing_stats(self.frame_times_s),
        }


def render_array(
    model: FieldModel,
    source: np.ndarray,
    times: np.ndarray,
    positions: np.ndarray,
    sample_rate_hz: int,
    cfg: Optional[RenderConfig] = None,
) -> RenderResult:
    """
    Render a mono source along a trajectory.

    Each frame takes the trajectory position at its start time.

    Returns:
        RenderResult whose output has shape (channels, len(source) + T - 1)
    """
    cfg = cfg or RenderConfig()
    x = np.asarray(source, dtype=np.float64).reshape(-1)
    if x.size == 0:
        raise InvalidSignalError("Source must be non-empty")
    times, positions = validate_trajectory(times, positions)
    duration = x.size / sample_rate_hz
    if times[-1] > duration:
        raise TrajectoryError(f"Trajectory ends at {times[-1]} s, after the {duration:.3f} s source")

    renderer = StreamingRenderer(model, cfg.frame_size, cfg.crossfade)
    pieces = []
    for start in range(0, x.size, cfg.frame_size):
        pos = position_at(times, positions, start / sample_rate_hz)
        pieces.append(renderer.process_frame(x[start : start + cfg.frame_size], pos))
    pieces.append(renderer.flush())
    output = np.concatenate(pieces, axis=1)
    result = RenderResult(output, int(sample_rate_hz), cfg.frame_size, list(renderer.frame_times_s))
    stats = timing_stats(result.frame_times_s)
    logger.info(
        f"Rendered {x.size} samples in {len(result.frame_times_s)} frames, "
        f"median {stats['median_ms']:.3f} ms per frame (budget {result.frame_budget_ms:.3f} ms)"
    )
    return result


def render(
    model: FieldModel,
    source_wav: Union[str, Path],
    trajectory_csv: Union[str, Path],
    out_wav: Union[str, Path],
    cfg: Optional[RenderConfig] = None,
) -> RenderResult:
    """
    Render a WAV file along a trajectory CSV and write a float WAV.

    Multi-channel sources are averaged to mono first.
    """
    data, rate = read_wav(source_wav)
    times, positions = load_trajectory(trajectory_csv)
    result = render_array(model, data.mean(axis=1), times, positions, rate, cfg)
    write_wav(out_wav, result.output.T, rate)
    return result
