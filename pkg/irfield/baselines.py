"""Classical estimators: Wiener deconvolution, NLMS, nearest-neighbor and bilinear interpolation."""

import logging
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy import fft as sfft

from irfield.config import NlmsConfig, WienerConfig
from irfield.exceptions import (
    DimensionMismatchError,
    GridError,
    IllConditionedError,
    InvalidSignalError,
    NlmsDivergenceError,
)
from irfield.geometry import chord_distance, spherical_to_cartesian
from irfield.types import GridMetadata, ImpulseResponse, MeasuredIrSet, Signal

logger = logging.getLogger(__name__)

SignalLike = Union[Signal, np.ndarray]


def _samples(x: SignalLike, name: str) -> np.ndarray:
    arr = x.samples if isinstance(x, Signal) else np.asarray(x, dtype=np.float64).reshape(-1)
    if arr.size < 1 or not np.all(np.isfinite(arr)):
        raise InvalidSignalError(f"{name} must be non-empty and finite")
    return arr


# ==================== Wiener ====================


def wiener_estimate(
    s: SignalLike,
    y_hat: SignalLike,
    num_taps: int,
    fft_len: Optional[int] = None,
    cfg: Optional[WienerConfig] = None,
) -> np.ndarray:
    """
    Deconvolve y_hat by s and suppress noise with a Wiener gain.

    The raw estimate Y/S (|S| floored at floor_rel * max|S|, phase kept) is
    inverse transformed; its last noise_fraction of samples is taken as
    noise only. That segment's spectrum, zero-padded to fft_len and power
    scaled by fft_len/segment_len, estimates |N/S|. The gain
    |Hn|^2 / (|Hn|^2 + |N/S|^2) is applied to Hn and the first T taps kept.

    Args:
        s: Excitation
        y_hat: Observation, at least as long as s
        num_taps: T
        fft_len: Transform length (next fast length of y_hat by default)
        cfg: Floor and segment settings

    Returns:
        Estimated taps of length T

    Raises:
        DimensionMismatchError: If y_hat is shorter than s or fft_len is too short
        IllConditionedError: If too many bins of |S| fall below the floor
    """
    cfg = cfg or WienerConfig()
    raw, _, n = _raw_deconvolution(s, y_hat, num_taps, fft_len, cfg)
    noise_power = _tail_noise_magnitude(sfft.irfft(raw, n=n), cfg) ** 2

    raw_power = np.abs(raw) ** 2
    denom = raw_power + noise_power
    gain = np.where(denom > 0, raw_power / np.where(denom > 0, denom, 1.0), 0.0)
    logger.debug(f"Wiener: n={n}, mean gain {gain.mean():.3f}")
    return sfft.irfft(gain * raw, n=n)[:num_taps]


def _raw_deconvolution(
    s: SignalLike, y_hat: SignalLike, num_taps: int, fft_len: Optional[int], cfg: WienerConfig
) -> Tuple[np.ndarray, np.ndarray, int]:
    src = _samples(s, "Excitation")
    obs = _samples(y_hat, "Observation")
    if obs.size < src.size:
        raise DimensionMismatchError("Observation must be at least as long as the excitation", src.size, obs.size)
    n = fft_len or sfft.next_fast_len(obs.size, real=True)
    if n < obs.size or n < num_taps:
        raise DimensionMismatchError("fft_len shorter than the observation", obs.size, n)

    src_spec = sfft.rfft(src, n=n)
    src_mag = np.abs(src_spec)
    floor = cfg.floor_rel * src_mag.max()
    floored = src_mag < floor
    fraction = float(np.mean(floored))
    if fraction > cfg.max_floored_fraction:
        logger.error(f"Wiener: {fraction:.1%} of excitation bins below the spectral floor")
        raise IllConditionedError(
            f"{fraction:.1%} of excitation bins are below the spectral floor", fraction=fraction
        )
    if floored.any():
        logger.warning(f"Wiener: {int(floored.sum())} excitation bins floored")
    phase = np.where(src_mag > 0, src_spec / np.where(src_mag > 0, src_mag, 1.0), 1.0)
    src_reg = np.where(floored, floor * phase, src_spec)
    return sfft.rfft(obs, n=n) / src_reg, src_mag, n


def _tail_noise_magnitude(raw_ir: np.ndarray, cfg: WienerConfig) -> np.ndarray:
    n = raw_ir.size
    seg_len = max(1, int(round(cfg.noise_fraction * n)))
    return np.abs(sfft.rfft(raw_ir[n - seg_len :], n=n)) * np.sqrt(n / seg_len)


def wiener_noise_spectrum(
    s: SignalLike,
    y_hat: SignalLike,
    fft_len: Optional[int] = None,
    cfg: Optional[WienerConfig] = None,
) -> np.ndarray:
    """Estimated |N| in the observation domain: tail-segment spectrum times |S|."""
    cfg = cfg or WienerConfig()
    raw, src_mag, n = _raw_deconvolution(s, y_hat, 1, fft_len, cfg)
    return _tail_noise_magnitude(sfft.irfft(raw, n=n), cfg) * src_mag


# ==================== NLMS ====================


def nlms_filter(s: SignalLike, y_hat: SignalLike, cfg: Optional[NlmsConfig] = None) -> Tuple[np.ndarray, np.ndarray]:
    """
    Run the NLMS recursion w <- w + mu * e * x / (delta + ||x||^2).

    Args:
        s: Excitation (white noise)
        y_hat: Observation aligned with s
        cfg: Filter length, step size, regularization, divergence bound

    Returns:
        (final weights, a-priori error per sample)

    Raises:
        NlmsDivergenceError: If the weight norm exceeds the bound
    """
    cfg = cfg or NlmsConfig()
    src = _samples(s, "Excitation")
    obs = _samples(y_hat, "Observation")
    steps = min(src.size, obs.size)
    taps = cfg.filter_len
    padded = np.concatenate([np.zeros(taps - 1), src])
    regressors = sliding_window_view(padded, taps)[:, ::-1]
    weights = np.zeros(taps)
    errors = np.zeros(steps)
    power = 0.0
    bound_sq = cfg.divergence_bound ** 2
    for t in range(steps):
        x = regressors[t]
        power += src[t] * src[t]
        if t >= taps:
            power -= src[t - taps] * src[t - taps]
        e = obs[t] - float(np.dot(weights, x))
        errors[t] = e
        weights += (cfg.step_size * e / (cfg.regularization + max(power, 0.0))) * x
        norm_sq = float(np.dot(weights, weights))
        if not np.isfinite(norm_sq) or norm_sq > bound_sq:
            logger.error(f"NLMS diverged at step {t}")
            raise NlmsDivergenceError(f"NLMS weight norm exceeded {cfg.divergence_bound} at step {t}", step=t)
    return weights, errors


def nlms_estimate(s: SignalLike, y_hat: SignalLike, cfg: Optional[NlmsConfig] = None) -> np.ndarray:
    """Final NLMS weights as the filter estimate."""
    weights, _ = nlms_filter(s, y_hat, cfg)
    return weights


# ==================== Interpolation ====================


def nearest_neighbor_ir(ir_set: MeasuredIrSet, query: Sequence[float]) -> ImpulseResponse:
    """
    Stored IR closest to the query; ties go to the lowest index.

    Raises:
        GridError: If the set is empty
    """
    if len(ir_set) == 0:
        raise GridError("Nearest-neighbor lookup in an empty IR set")
    q = np.asarray(query, dtype=np.float64).reshape(-1)
    dist = chord_distance(ir_set.positions, q)
    return ir_set[int(np.argmin(dist))]


def bilinear_weights(grid: GridMetadata, azimuth_deg: float, elevation_deg: float) -> Tuple[List[int], List[float]]:
    """
    Corner entry indices and cell weights for an (azimuth, elevation) query.

    Azimuth wraps around 360 degrees; elevation must lie within the grid rows.

    Returns:
        (four entry indices, four weights summing to 1)

    Raises:
        GridError: If the elevation lies outside the grid
    """
    azs = grid.azimuths_deg
    els = grid.elevations_deg
    if not els[0] <= elevation_deg <= els[-1]:
        raise GridError(f"Elevation {elevation_deg} outside grid range [{els[0]}, {els[-1]}]")
    j = int(np.clip(np.searchsorted(els, elevation_deg, side="right") - 1, 0, els.size - 2))
    u = (elevation_deg - els[j]) / (els[j + 1] - els[j])

    az = float(azimuth_deg) % 360.0
    if az < azs[0]:
        az += 360.0
    i = int(np.clip(np.searchsorted(azs, az, side="right") - 1, 0, azs.size - 1))
    nxt = (i + 1) % azs.size
    az_next = azs[nxt] + (360.0 if nxt == 0 else 0.0)
    v = (az - azs[i]) / (az_next - azs[i])

    idx = grid.node_index
    indices = [int(idx[j, i]), int(idx[j, nxt]), int(idx[j + 1, i]), int(idx[j + 1, nxt])]
    weights = [(1 - u) * (1 - v), (1 - u) * v, u * (1 - v), u * v]
    return indices, [float(w) for w in weights]


def bilinear_ir(ir_set: MeasuredIrSet, azimuth_deg: float, elevation_deg: float) -> ImpulseResponse:
    """
    Tap-wise bilinear blend of the four grid IRs around the query.

    Raises:
        GridError: If the set has no grid or the query elevation is outside it
    """
    if ir_set.grid is None:
        raise GridError("Bilinear interpolation needs grid metadata")
    indices, weights = bilinear_weights(ir_set.grid, azimuth_deg, elevation_deg)
    taps = sum(w * ir_set[k].taps for k, w in zip(indices, weights))
    return ImpulseResponse(taps=taps, position=spherical_to_cartesian(azimuth_deg, elevation_deg))
