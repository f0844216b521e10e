"""Training objectives: waveform l2 and the noise-robust magnitude-spectrum loss.

The spectral loss of one frame with transform length M is

    (1/M) * sum_k c_k * (|R_k| - sqrt(M) * A_k)^2

where R is the frame spectrum, c_k the one-sided Parseval weights and A the
noise amplitude in per-sample RMS units. With A = 0 and one rectangular frame
covering the residual this is exactly sum_t r(t)^2.
"""

import logging
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Tuple, Union

import numpy as np
from scipy import fft as sfft
from scipy.signal import get_window

from irfield.config import SpectralLossConfig
from irfield.dsp import SourceConvolver, parseval_weights
from irfield.exceptions import DimensionMismatchError, InvalidSignalError
from irfield.types import Signal
from irfield.utils import make_rng, relative_errors

logger = logging.getLogger(__name__)

ZERO_MAGNITUDE_REL = 1e-10

SignalLike = Union[Signal, np.ndarray]


def _samples(x: SignalLike) -> np.ndarray:
    if isinstance(x, Signal):
        return x.samples
    return np.asarray(x, dtype=np.float64)


# ==================== l2 ====================


def l2_loss(y_hat: SignalLike, y: SignalLike) -> Tuple[float, np.ndarray]:
    """
    Waveform loss sum((y_hat - y)^2).

    Args:
        y_hat: Observed target
        y: Model output

    Returns:
        (loss, gradient wrt y = 2 * (y - y_hat))

    Raises:
        DimensionMismatchError: If lengths differ
    """
    target = _samples(y_hat)
    output = _samples(y)
    if target.shape != output.shape:
        raise DimensionMismatchError(
            "l2 loss needs equal-length signals", expected=target.shape, actual=output.shape
        )
    diff = output - target
    return float(np.sum(diff * diff)), 2.0 * diff


# ==================== Spectral loss ====================


def frame_window(cfg: SpectralLossConfig) -> np.ndarray:
    """Analysis window of frame_len samples."""
    if cfg.window == "hann":
        return get_window("hann", cfg.frame_len)
    return np.ones(cfg.frame_len)


def frame_count(length: int, cfg: SpectralLossConfig) -> int:
    """Frames needed to cover a residual; the tail frame is zero-padded."""
    if length <= cfg.frame_len:
        return 1
    return int(np.ceil((length - cfg.frame_len) / cfg.hop)) + 1


def residual_spectral_loss(
    residual: np.ndarray, noise_amp: np.ndarray, cfg: SpectralLossConfig
) -> Tuple[float, np.ndarray, np.ndarray]:
    """
    Noise-robust loss of a residual, averaged over frames and summed over channels.

    Args:
        residual: Shape (L,) or (C, L)
        noise_amp: K non-negative amplitudes shared by all channels
        cfg: Framing config

    Returns:
        (loss, gradient wrt residual shaped like it, gradient wrt noise_amp)

    Raises:
        InvalidSignalError: If the residual is empty or non-finite
        DimensionMismatchError: If noise_amp does not have K bins
    """
    r = np.asarray(residual, dtype=np.float64)
    single = r.ndim == 1
    r = np.atleast_2d(r)
    length = r.shape[-1]
    if length == 0:
        raise InvalidSignalError("Residual must not be empty")
    if not np.all(np.isfinite(r)):
        raise InvalidSignalError("Residual contains non-finite values")
    amp = np.asarray(noise_amp, dtype=np.float64).reshape(-1)
    if amp.size != cfg.num_bins:
        raise DimensionMismatchError(
            "Noise spectrum must have fft_len/2 + 1 bins", expected=cfg.num_bins, actual=amp.size
        )

    m = cfg.fft_len
    sqrt_m = np.sqrt(m)
    n_frames = frame_count(length, cfg)
    padded_len = (n_frames - 1) * cfg.hop + cfg.frame_len
    padded = np.zeros((r.shape[0], padded_len))
    padded[:, :length] = r
    index = np.arange(n_frames)[:, None] * cfg.hop + np.arange(cfg.frame_len)[None, :]
    window = frame_window(cfg)

    frames = padded[:, index] * window  # (C, F, frame_len)
    spec = sfft.rfft(frames, n=m, axis=-1)  # (C, F, K)
    mag = np.abs(spec)
    diff = mag - sqrt_m * amp
    weights = parseval_weights(cfg.num_bins)
    loss = float(np.sum(weights * diff * diff) / (m * n_frames))

    peak = mag.max(axis=-1, keepdims=True)
    live = mag > ZERO_MAGNITUDE_REL * peak
    unit = np.where(live, spec / np.where(live, mag, 1.0), 0.0)
    grad_frames = 2.0 * sfft.irfft(diff * unit, n=m, axis=-1)[..., : cfg.frame_len] * window
    grad_padded = np.zeros_like(padded)
    for f in range(n_frames):
        grad_padded[:, index[f]] += grad_frames[:, f, :]
    grad_r = grad_padded[:, :length] / n_frames

    grad_amp = -2.0 * weights * np.sum(mag / sqrt_m - amp, axis=(0, 1)) / n_frames
    return loss, (grad_r[0] if single else grad_r), grad_amp


def noise_robust_loss(
    y_hat: SignalLike,
    s: SignalLike,
    h: np.ndarray,
    noise_amp: np.ndarray,
    cfg: Optional[SpectralLossConfig] = None,
    convolver: Optional[SourceConvolver] = None,
) -> Tuple[float, np.ndarray, np.ndarray]:
    """
    Magnitude-spectrum loss of the residual y_hat - s*h against a noise spectrum.

    Args:
        y_hat: Noisy target, length len(s) + T - 1 (shape (L,) or (C, L))
        s: Source signal
        h: Filter taps, (T,) or (C, T)
        noise_amp: K amplitudes
        cfg: Framing config
        convolver: Optional precomputed SourceConvolver for s

    Returns:
        (loss, gradient wrt h taps, gradient wrt noise_amp)

    Raises:
        DimensionMismatchError: If y_hat has the wrong length
    """
    cfg = cfg or SpectralLossConfig()
    taps = np.asarray(h, dtype=np.float64)
    conv = convolver or SourceConvolver(_samples(s), taps.shape[-1])
    target = _samples(y_hat)
    if target.shape[-1] != conv.out_len:
        raise DimensionMismatchError(
            "Target length must be len(s) + T - 1", expected=conv.out_len, actual=target.shape[-1]
        )
    residual = target - conv.apply(taps)
    loss, grad_r, grad_amp = residual_spectral_loss(residual, noise_amp, cfg)
    return loss, -conv.adjoint(grad_r), grad_amp


def convolution_l2_loss(
    y_hat: SignalLike,
    s: SignalLike,
    h: np.ndarray,
    convolver: Optional[SourceConvolver] = None,
) -> Tuple[float, np.ndarray]:
    """Waveform loss of s*h against y_hat; returns (loss, gradient wrt h taps)."""
    taps = np.asarray(h, dtype=np.float64)
    conv = convolver or SourceConvolver(_samples(s), taps.shape[-1])
    loss, grad_y = l2_loss(_samples(y_hat), conv.apply(taps))
    return loss, conv.adjoint(grad_y)


# ==================== Gradient check ====================


@dataclass
class GradCheckReport:
    """Outcome of comparing analytic gradients with central differences."""

    max_rel_error: float
    h_max_rel_error: float
    noise_max_rel_error: float
    checked: int
    flagged_bins: List[int] = field(default_factory=list)

    def passed(self, tolerance: float = 1e-4) -> bool:
        """Check the worst error is within tolerance."""
        return self.max_rel_error <= tolerance

    def to_dict(self) -> Dict[str, Any]:
        """Convert to dictionary."""
        return {
            "max_rel_error": self.max_rel_error,
            "h_max_rel_error": self.h_max_rel_error,
            "noise_max_rel_error": self.noise_max_rel_error,
            "checked": self.checked,
            "flagged_bins": list(self.flagged_bins),
        }


def _zero_bin_residual(residual: np.ndarray, fft_len: int, k: int) -> np.ndarray:
    t = np.arange(residual.size)
    basis = np.column_stack(
        [np.cos(2 * np.pi * k * t / fft_len), np.sin(2 * np.pi * k * t / fft_len)]
    )
    coef, *_ = np.linalg.lstsq(basis, residual, rcond=None)
    return residual - basis @ coef


def loss_grad_check(
    cfg: Optional[SpectralLossConfig] = None,
    num_taps: int = 8,
    signal_len: int = 32,
    seed: int = 0,
    step: float = 1e-6,
    zero_noise: bool = False,
    zero_bin: Optional[int] = None,
) -> GradCheckReport:
    """
    Compare analytic gradients of noise_robust_loss with central differences.

    Args:
        cfg: Framing config (a small framed config by default)
        num_taps: Filter length T (<= 16)
        signal_len: Source length (<= 64)
        seed: Random seed for the instance
        step: Finite-difference step
        zero_noise: Use noise_amp = 0
        zero_bin: Construct a single-frame residual with an exactly zero bin at this index

    Returns:
        GradCheckReport; bins with a zero-magnitude frame are flagged and
        their noise-amplitude comparisons skipped
    """
    rng = make_rng(seed)
    if zero_bin is not None:
        length = signal_len + num_taps - 1
        fft_len = length + (length % 2)
        cfg = SpectralLossConfig(fft_len=fft_len, frame_len=fft_len, hop=fft_len)
    cfg = cfg or SpectralLossConfig(fft_len=32, frame_len=16, hop=8)
    s = rng.standard_normal(signal_len)
    h = rng.standard_normal(num_taps)
    conv = SourceConvolver(s, num_taps)
    residual = rng.standard_normal(conv.out_len)
    if zero_bin is not None:
        residual = _zero_bin_residual(residual, cfg.fft_len, zero_bin)
    y_hat = conv.apply(h) + residual
    amp = np.zeros(cfg.num_bins) if zero_noise else rng.uniform(0.1, 1.0, cfg.num_bins)

    _, grad_h, grad_amp = noise_robust_loss(y_hat, s, h, amp, cfg, conv)

    def loss_at(taps: np.ndarray, a: np.ndarray) -> float:
        return noise_robust_loss(y_hat, s, taps, a, cfg, conv)[0]

    num_h = np.zeros_like(h)
    for i in range(h.size):
        e = np.zeros_like(h)
        e[i] = step
        num_h[i] = (loss_at(h + e, amp) - loss_at(h - e, amp)) / (2 * step)

    residual_now = y_hat - conv.apply(h)
    n_frames = frame_count(residual_now.size, cfg)
    flagged: List[int] = []
    for f in range(n_frames):
        seg = np.zeros(cfg.frame_len)
        chunk = residual_now[f * cfg.hop : f * cfg.hop + cfg.frame_len]
        seg[: chunk.size] = chunk
        mag = np.abs(sfft.rfft(seg * frame_window(cfg), n=cfg.fft_len))
        flagged.extend(np.flatnonzero(mag <= ZERO_MAGNITUDE_REL * mag.max()).tolist())
    flagged = sorted(set(flagged))
    if flagged:
        logger.warning(f"Gradient check: zero-magnitude bins {flagged} skipped for noise amplitudes")

    keep = np.setdiff1d(np.arange(cfg.num_bins), flagged)
    num_amp = np.zeros(keep.size)
    for j, k in enumerate(keep):
        e = np.zeros_like(amp)
        e[k] = step
        num_amp[j] = (loss_at(h, amp + e) - loss_at(h, amp - e)) / (2 * step)

    h_err = float(np.max(relative_errors(grad_h, num_h)))
    amp_err = float(np.max(relative_errors(grad_amp[keep], num_amp))) if keep.size else 0.0
    report = GradCheckReport(
        max_rel_error=max(h_err, amp_err),
        h_max_rel_error=h_err,
        noise_max_rel_error=amp_err,
        checked=int(h.size + keep.size),
        flagged_bins=flagged,
    )
    logger.debug(f"Loss gradient check: {report.to_dict()}")
    return report
