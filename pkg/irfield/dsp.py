"""Signal-processing primitives: FFT contract, convolution, sweeps, SDR and WAV I/O.

FFT convention: unnormalized forward transform, 1/N inverse. For a real
sequence x zero-padded to N samples the one-sided spectrum X satisfies

    sum_t x(t)^2 = (1/N) * (|X_0|^2 + 2 * sum_{k=1}^{K-2} |X_k|^2 + |X_{K-1}|^2)

with K = N/2 + 1. Every energy identity in the package is written against it.
"""

import logging
from pathlib import Path
from typing import Tuple, Union

import numpy as np
import soundfile as sf
from scipy import fft as sfft

from irfield.exceptions import (
    DimensionMismatchError,
    FrequencyRangeError,
    InvalidSignalError,
)
from irfield.types import Signal, Spectrum, DEFAULT_SAMPLE_RATE

logger = logging.getLogger(__name__)

SDR_CAP_DB = 200.0

ArrayLike = Union[np.ndarray, list, tuple]


def _as_finite(x: ArrayLike, name: str) -> np.ndarray:
    arr = np.asarray(x, dtype=np.float64)
    if not np.all(np.isfinite(arr)):
        raise InvalidSignalError(f"{name} contains non-finite values")
    return arr


# ==================== FFT ====================


def fft_real(x: ArrayLike, fft_len: int) -> Spectrum:
    """
    One-sided spectrum of a real sequence.

    Args:
        x: Real samples, zero-padded to fft_len
        fft_len: Transform length (even, >= len(x))

    Returns:
        Spectrum with fft_len/2 + 1 complex bins

    Raises:
        InvalidSignalError: If x is non-finite or fft_len is odd, zero or too short
    """
    arr = _as_finite(x, "FFT input").reshape(-1)
    if fft_len <= 0 or fft_len % 2:
        raise InvalidSignalError(f"fft_len must be positive and even, got {fft_len}")
    if arr.size > fft_len:
        raise InvalidSignalError(f"fft_len={fft_len} is shorter than the input ({arr.size})")
    return Spectrum(bins=sfft.rfft(arr, n=fft_len), fft_len=fft_len)


def ifft_real(spectrum: Spectrum) -> np.ndarray:
    """Inverse of fft_real (1/N normalized)."""
    return sfft.irfft(spectrum.bins, n=spectrum.fft_len)


def parseval_weights(num_bins: int) -> np.ndarray:
    """Get one-sided bin weights (1 at DC and Nyquist, 2 elsewhere)."""
    weights = np.full(num_bins, 2.0)
    weights[0] = 1.0
    weights[-1] = 1.0
    return weights


# ==================== Convolution ====================


def fft_convolve(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Full linear convolution of two real arrays with a single FFT."""
    out_len = a.size + b.size - 1
    n = sfft.next_fast_len(out_len, real=True)
    return sfft.irfft(sfft.rfft(a, n=n) * sfft.rfft(b, n=n), n=n)[:out_len]


def convolve(s: Signal, h: Union[Signal, ArrayLike], sample_rate_hz: int = 0) -> Signal:
    """
    Full linear convolution y = s * h.

    Args:
        s: Source signal
        h: One filter channel (array of taps, or a Signal carrying its rate)
        sample_rate_hz: Rate of h when given as an array (0 means "same as s")

    Returns:
        Signal of length len(s) + len(h) - 1 at the source rate

    Raises:
        InvalidSignalError: If h is empty or non-finite, or the sample rates differ
    """
    if isinstance(h, Signal):
        h_rate = h.sample_rate_hz
        taps = h.samples
    else:
        h_rate = sample_rate_hz or s.sample_rate_hz
        taps = _as_finite(h, "Filter taps").reshape(-1)
    if taps.size < 1:
        raise InvalidSignalError("Filter must contain at least one tap")
    if h_rate != s.sample_rate_hz:
        raise InvalidSignalError(
            f"Sample-rate mismatch: source {s.sample_rate_hz} Hz, filter {h_rate} Hz"
        )
    return Signal(fft_convolve(s.samples, taps), s.sample_rate_hz)


class SourceConvolver:
    """
    Convolution with a fixed source, plus its adjoint.

    The source spectrum is computed once; apply() and adjoint() are then one
    forward and one inverse FFT each. Used by the training loop.
    """

    def __init__(self, source: np.ndarray, num_taps: int):
        """
        Initialize convolver.

        Args:
            source: Source samples s
            num_taps: Filter length T
        """
        self.source = np.asarray(source, dtype=np.float64).reshape(-1)
        self.num_taps = int(num_taps)
        self.out_len = self.source.size + self.num_taps - 1
        self.fft_len = sfft.next_fast_len(self.out_len, real=True)
        self._spectrum = sfft.rfft(self.source, n=self.fft_len)

    def apply(self, taps: np.ndarray) -> np.ndarray:
        """Get s * h for taps of shape (T,) or (C, T)."""
        h_spec = sfft.rfft(taps, n=self.fft_len, axis=-1)
        return sfft.irfft(h_spec * self._spectrum, n=self.fft_len, axis=-1)[..., : self.out_len]

    def adjoint(self, grad_out: np.ndarray) -> np.ndarray:
        """Get the gradient wrt taps given the gradient wrt s * h (cross-correlation with s)."""
        g_spec = sfft.rfft(grad_out, n=self.fft_len, axis=-1)
        return sfft.irfft(g_spec * np.conj(self._spectrum), n=self.fft_len, axis=-1)[
            ..., : self.num_taps
        ]


# ==================== Excitation ====================


def sweep_phase(t: np.ndarray, f0_hz: float, f1_hz: float, duration_s: float) -> np.ndarray:
    """Phase argument of the exponential sweep at times t (seconds)."""
    rate = np.log(f1_hz / f0_hz)
    return 2.0 * np.pi * f0_hz * duration_s / rate * (np.exp(t * rate / duration_s) - 1.0)


def log_sine_sweep(
    f0_hz: float = 20.0,
    f1_hz: float = 20000.0,
    duration_s: float = 1.0,
    sample_rate_hz: int = DEFAULT_SAMPLE_RATE,
) -> Signal:
    """
    Exponential sine sweep from f0 to f1 with unit peak amplitude.

    Args:
        f0_hz: Start frequency
        f1_hz: End frequency
        duration_s: Sweep length in seconds
        sample_rate_hz: Sample rate

    Returns:
        Signal of round(duration * rate) samples

    Raises:
        FrequencyRangeError: Unless 0 < f0 < f1 < rate/2
        InvalidSignalError: If duration is not positive
    """
    if not 0.0 < f0_hz < f1_hz < sample_rate_hz / 2.0:
        raise FrequencyRangeError(
            f"Sweep needs 0 < f0 < f1 < {sample_rate_hz / 2.0} Hz, got f0={f0_hz}, f1={f1_hz}"
        )
    if duration_s <= 0:
        raise InvalidSignalError(f"Sweep duration must be positive, got {duration_s}")
    n = max(1, int(round(duration_s * sample_rate_hz)))
    t = np.arange(n, dtype=np.float64) / sample_rate_hz
    return Signal(np.sin(sweep_phase(t, f0_hz, f1_hz, duration_s)), sample_rate_hz)


def white_noise(num_samples: int, rng: np.random.Generator, sample_rate_hz: int = DEFAULT_SAMPLE_RATE) -> Signal:
    """Unit-variance Gaussian white noise excitation."""
    return Signal(rng.standard_normal(num_samples), sample_rate_hz)


# ==================== Metrics ====================


def sdr_db(h_true: ArrayLike, h_est: ArrayLike) -> float:
    """
    Signal-to-distortion ratio 10*log10(||h_true||^2 / ||h_true - h_est||^2).

    Args:
        h_true: Reference filter
        h_est: Estimated filter, same length

    Returns:
        SDR in dB, capped at SDR_CAP_DB (also returned for zero distortion)

    Raises:
        DimensionMismatchError: If lengths differ
        InvalidSignalError: If h_true is all zeros
    """
    ref = _as_finite(h_true, "Reference filter").reshape(-1)
    est = _as_finite(h_est, "Estimated filter").reshape(-1)
    if ref.size != est.size:
        raise DimensionMismatchError(
            "SDR needs equal-length filters", expected=ref.size, actual=est.size
        )
    signal_energy = float(np.dot(ref, ref))
    if signal_energy == 0.0:
        raise InvalidSignalError("SDR reference filter is all zeros")
    err = ref - est
    distortion = float(np.dot(err, err))
    if distortion == 0.0:
        return SDR_CAP_DB
    return float(min(SDR_CAP_DB, 10.0 * np.log10(signal_energy / distortion)))


def snr_db(clean: Signal, noise: Signal) -> float:
    """Measured energy ratio of clean to noise in dB."""
    return float(10.0 * np.log10(clean.energy / noise.energy))


def scale_to_snr(clean: Signal, noise: Signal, target_snr_db: float) -> Signal:
    """
    Scale noise so that 10*log10(E_clean / E_noise) equals the target.

    Args:
        clean: Clean signal
        noise: Noise signal of equal length
        target_snr_db: Desired SNR in dB

    Returns:
        Scaled noise signal

    Raises:
        DimensionMismatchError: If lengths differ
        InvalidSignalError: If either signal has zero energy
    """
    if len(clean) != len(noise):
        raise DimensionMismatchError(
            "SNR scaling needs equal lengths", expected=len(clean), actual=len(noise)
        )
    e_clean = clean.energy
    e_noise = noise.energy
    if e_clean == 0.0:
        raise InvalidSignalError("Clean signal has zero energy")
    if e_noise == 0.0:
        raise InvalidSignalError("Noise signal has zero energy")
    gain = np.sqrt(e_clean / (e_noise * 10.0 ** (target_snr_db / 10.0)))
    return Signal(noise.samples * gain, noise.sample_rate_hz)


# ==================== WAV I/O ====================


def write_wav(path: Union[str, Path], data: np.ndarray, sample_rate_hz: int) -> None:
    """
    Write 32-bit float WAV.

    Args:
        path: Output file
        data: Samples, shape (n,) or (n, channels)
        sample_rate_hz: Sample rate
    """
    arr = _as_finite(data, "WAV data")
    sf.write(str(path), arr.astype(np.float32), int(sample_rate_hz), subtype="FLOAT")
    logger.debug(f"Wrote {arr.shape} samples to {path}")


def read_wav(path: Union[str, Path]) -> Tuple[np.ndarray, int]:
    """
    Read a WAV file.

    Args:
        path: Input file

    Returns:
        (samples with shape (n, channels) as float64, sample rate)
    """
    data, rate = sf.read(str(path), dtype="float64", always_2d=True)
    return data, int(rate)
