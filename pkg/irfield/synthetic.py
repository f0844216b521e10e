"""Synthetic ground-truth filter fields, noise synthesis and dataset export.

Every channel of a synthetic filter is a sum of Gaussian pulses of width
sigma samples: one direct pulse whose delay and gain are affine in y
(interaural-style), followed by exponentially decaying echoes whose delays
and gains vary smoothly with (x, y, z). Each filter is scaled so that its
largest absolute tap over all channels is 1.
"""

import csv
import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import fft as sfft

from irfield.config import FilterFieldSpec, NoiseSpec
from irfield.dsp import convolve, scale_to_snr
from irfield.exceptions import DimensionMismatchError, FrequencyRangeError, GridError
from irfield.geometry import cartesian_to_spherical, spherical_to_cartesian
from irfield.types import GridMetadata, ImpulseResponse, MeasuredIrSet, Signal
from irfield.utils import make_rng

logger = logging.getLogger(__name__)

DIRECT_GAIN_SWING = 0.25
ECHO_DELAY_SLOPE = 2.0
ECHO_GAIN_SLOPE = 1.0 / 6.0
ECHO_GUARD_SIGMAS = 6.0
MANIFEST_NAME = "positions.csv"
METADATA_NAME = "metadata.json"


# ==================== Filter field ====================


def grid_angles(spec: FilterFieldSpec) -> Tuple[np.ndarray, np.ndarray]:
    """Get (azimuths_deg, elevations_deg) of the node grid."""
    azimuths = np.arange(spec.n_azimuth) * 360.0 / spec.n_azimuth
    elevations = np.linspace(spec.elevation_range_deg[0], spec.elevation_range_deg[1], spec.n_elevation)
    return azimuths, elevations


def _channel_sides(channels: int) -> np.ndarray:
    if channels == 1:
        return np.zeros(1)
    if channels == 2:
        return np.array([1.0, -1.0])
    return np.linspace(1.0, -1.0, channels)


@dataclass
class FieldParameters:
    """Seeded pulse parameters of a synthetic field (all delays in samples)."""

    sides: np.ndarray  # (C,)
    direct_delay: float
    delay_swing: float
    echo_delay: np.ndarray  # (C, E)
    echo_delay_grad: np.ndarray  # (C, E, 3)
    echo_amp: np.ndarray  # (C, E)
    echo_gain_grad: np.ndarray  # (C, E, 3)
    decay: float
    sigma: float
    num_taps: int

    @classmethod
    def from_spec(cls, spec: FilterFieldSpec) -> "FieldParameters":
        """Draw the echo parameters for a spec."""
        per_ms = spec.sample_rate_hz / 1000.0
        lo, hi = spec.delay_range_ms
        direct = 0.5 * (lo + hi) * per_ms
        swing = 0.5 * (hi - lo) * per_ms
        sigma = spec.pulse_width
        channels, echoes = spec.channels, spec.num_echoes
        earliest = hi * per_ms + ECHO_GUARD_SIGMAS * sigma + 3.0 * ECHO_DELAY_SLOPE
        latest = max(0.6 * spec.num_taps, earliest)
        rng = make_rng(spec.seed, 7)
        return cls(
            sides=_channel_sides(channels),
            direct_delay=direct,
            delay_swing=swing,
            echo_delay=rng.uniform(earliest, latest, (channels, echoes)),
            echo_delay_grad=rng.uniform(-ECHO_DELAY_SLOPE, ECHO_DELAY_SLOPE, (channels, echoes, 3)),
            echo_amp=spec.echo_gain
            * rng.choice([-1.0, 1.0], (channels, echoes))
            * rng.uniform(0.5, 1.0, (channels, echoes)),
            echo_gain_grad=rng.uniform(-ECHO_GAIN_SLOPE, ECHO_GAIN_SLOPE, (channels, echoes, 3)),
            decay=spec.decay_ms * per_ms,
            sigma=sigma,
            num_taps=spec.num_taps,
        )

    def raw_taps(self, position: Sequence[float]) -> np.ndarray:
        """Unnormalized (C, T) filter at a position inside [-1, 1]^3."""
        p = np.asarray(position, dtype=np.float64).reshape(3)
        t = np.arange(self.num_taps, dtype=np.float64)
        direct_delay = self.direct_delay + self.sides * self.delay_swing * p[1]
        direct_gain = 1.0 + DIRECT_GAIN_SWING * self.sides * p[1]
        echo_delay = self.echo_delay + self.echo_delay_grad @ p
        echo_gain = self.echo_amp * (1.0 + self.echo_gain_grad @ p) * np.exp(-echo_delay / self.decay)

        delays = np.concatenate([direct_delay[:, None], echo_delay], axis=1)  # (C, 1+E)
        gains = np.concatenate([direct_gain[:, None], echo_gain], axis=1)
        pulses = np.exp(-((t[None, None, :] - delays[:, :, None]) ** 2) / (2.0 * self.sigma ** 2))
        return np.sum(gains[:, :, None] * pulses, axis=1)


def synthetic_ir(spec: FilterFieldSpec, position: Sequence[float], params: Optional[FieldParameters] = None) -> ImpulseResponse:
    """Ground-truth filter at an arbitrary position (not only grid nodes)."""
    params = params or FieldParameters.from_spec(spec)
    taps = params.raw_taps(position)
    return ImpulseResponse(taps=taps / np.max(np.abs(taps)), position=tuple(position))  # type: ignore[arg-type]


def make_filter_field(spec: FilterFieldSpec) -> MeasuredIrSet:
    """
    Build the synthetic field on its azimuth x elevation grid.

    Nodes are ordered elevation-major (index = j * n_azimuth + i).

    Args:
        spec: Field spec (grid at least 2x2)

    Returns:
        MeasuredIrSet with grid metadata; deterministic under spec.seed
    """
    params = FieldParameters.from_spec(spec)
    azimuths, elevations = grid_angles(spec)
    entries: List[ImpulseResponse] = []
    node_index = np.zeros((elevations.size, azimuths.size), dtype=np.int64)
    for j, el in enumerate(elevations):
        for i, az in enumerate(azimuths):
            node_index[j, i] = len(entries)
            entries.append(synthetic_ir(spec, spherical_to_cartesian(az, el), params))
    logger.info(
        f"Built synthetic field: {len(entries)} nodes, {spec.channels} channels, {spec.num_taps} taps"
    )
    return MeasuredIrSet(
        entries=entries,
        grid=GridMetadata(azimuths_deg=azimuths, elevations_deg=elevations, node_index=node_index),
        sample_rate_hz=spec.sample_rate_hz,
        metadata={"field_spec": spec.to_dict()},
    )


def smoothness_constant(spec: FilterFieldSpec, params: Optional[FieldParameters] = None) -> float:
    """
    Lipschitz constant K with ||h(a) - h(b)|| <= K * ||a - b|| for normalized filters.

    Derived from the pulse construction on [-1, 1]^3: per-pulse bounds on the
    gain and delay gradients, the L2 norms of a Gaussian pulse and of its
    delay derivative, and the peak normalization step.
    """
    params = params or FieldParameters.from_spec(spec)
    sigma = params.sigma
    pulse_norm = np.sqrt(sigma * np.sqrt(np.pi)) * 1.01
    pulse_slope = np.sqrt(np.sqrt(np.pi) / (2.0 * sigma)) * 1.01

    direct_gain_max = 1.0 + DIRECT_GAIN_SWING * np.abs(params.sides)
    direct_lip = DIRECT_GAIN_SWING * np.abs(params.sides) * pulse_norm + direct_gain_max * params.delay_swing * np.abs(
        params.sides
    ) * pulse_slope

    earliest = params.echo_delay - np.abs(params.echo_delay_grad).sum(axis=-1)
    decay_max = np.exp(-earliest / params.decay)
    gain_max = np.abs(params.echo_amp) * (1.0 + np.abs(params.echo_gain_grad).sum(axis=-1)) * decay_max
    gain_grad = np.abs(params.echo_amp) * decay_max * (
        np.linalg.norm(params.echo_gain_grad, axis=-1)
        + (1.0 + np.abs(params.echo_gain_grad).sum(axis=-1)) * np.linalg.norm(params.echo_delay_grad, axis=-1) / params.decay
    )
    echo_lip = gain_grad * pulse_norm + gain_max * np.linalg.norm(params.echo_delay_grad, axis=-1) * pulse_slope

    lip = direct_lip + echo_lip.sum(axis=-1)
    raw_norm_max = np.sqrt(np.sum((direct_gain_max * pulse_norm + gain_max.sum(axis=-1) * pulse_norm) ** 2))
    gap = ECHO_GUARD_SIGMAS * sigma - 0.5
    peak_min = float(
        np.max(
            (1.0 - DIRECT_GAIN_SWING * np.abs(params.sides)) * np.exp(-1.0 / (8.0 * sigma ** 2))
            - gain_max.sum(axis=-1) * np.exp(-(gap ** 2) / (2.0 * sigma ** 2))
        )
    )
    if peak_min <= 0:
        raise GridError("Synthetic field parameters give no positive peak bound")
    raw_lip = float(np.sqrt(np.sum(lip ** 2)))
    return raw_lip * (1.0 + raw_norm_max / peak_min) / peak_min


def neighbor_bound(spec: FilterFieldSpec, pos_a: Sequence[float], pos_b: Sequence[float]) -> float:
    """Upper bound on the tap-wise L2 distance between the filters at two positions."""
    dist = float(np.linalg.norm(np.asarray(pos_a, dtype=np.float64) - np.asarray(pos_b, dtype=np.float64)))
    return smoothness_constant(spec) * dist


def grid_neighbors(grid: GridMetadata) -> List[Tuple[int, int]]:
    """Entry index pairs of azimuth-adjacent (wrapping) and elevation-adjacent nodes."""
    n_el, n_az = grid.shape
    idx = grid.node_index
    pairs = []
    for j in range(n_el):
        for i in range(n_az):
            pairs.append((int(idx[j, i]), int(idx[j, (i + 1) % n_az])))
            if j + 1 < n_el:
                pairs.append((int(idx[j, i]), int(idx[j + 1, i])))
    return pairs


# ==================== Noise ====================


def band_centers(
    azimuth_norm: float,
    elevation_norm: float,
    band_width_hz: float = 3000.0,
    sample_rate_hz: int = 48000,
) -> Tuple[float, float]:
    """
    Affine band centers 3000 + az*15000 and 6000 + el*12000 Hz, clamped into the band.

    Raises:
        FrequencyRangeError: If a band of this width cannot fit below Nyquist
    """
    nyquist = sample_rate_hz / 2.0
    half = band_width_hz / 2.0
    if band_width_hz >= nyquist:
        raise FrequencyRangeError(f"Band width {band_width_hz} Hz does not fit below {nyquist} Hz")
    lo, hi = half, nyquist - half
    c1 = float(np.clip(3000.0 + azimuth_norm * 15000.0, lo, hi))
    c2 = float(np.clip(6000.0 + elevation_norm * 12000.0, lo, hi))
    return c1, c2


def band_mapping(position: Sequence[float], band_width_hz: float = 3000.0, sample_rate_hz: int = 48000) -> Tuple[float, float]:
    """Band centers for a position on the unit sphere (azimuth/360, (elevation+90)/180)."""
    az, el = cartesian_to_spherical(position)
    return band_centers(az / 360.0, (el + 90.0) / 180.0, band_width_hz, sample_rate_hz)


def noise_bands(spec: NoiseSpec, position: Sequence[float]) -> List[Tuple[float, float]]:
    """(low, high) edges in Hz of the two bands at a position."""
    half = spec.band_width_hz / 2.0
    return [(c - half, c + half) for c in band_mapping(position, spec.band_width_hz, spec.sample_rate_hz)]


def noise_profile(
    spec: NoiseSpec,
    freqs_hz: np.ndarray,
    channel: int = 0,
    position: Optional[Sequence[float]] = None,
) -> np.ndarray:
    """
    Amplitude per frequency before SNR scaling.

    Independent kind: uniform [0, 1] values on the fft_len/2 + 1 loss bins,
    linearly interpolated. Dependent kind: uniform [0.5, 1] inside the two
    position-dependent bands, zero elsewhere.
    """
    num_bins = spec.fft_len // 2 + 1
    coarse = np.arange(num_bins) * spec.sample_rate_hz / spec.fft_len
    rng = make_rng(spec.seed, 1, channel)
    if spec.kind == "independent":
        return np.interp(freqs_hz, coarse, rng.uniform(0.0, 1.0, num_bins))
    if position is None:
        raise GridError("Position-dependent noise needs a position")
    values = np.interp(freqs_hz, coarse, rng.uniform(0.5, 1.0, num_bins))
    mask = np.zeros(freqs_hz.shape, dtype=bool)
    for lo, hi in noise_bands(spec, position):
        mask |= (freqs_hz >= lo) & (freqs_hz <= hi)
    return np.where(mask, values, 0.0)


def make_noise(
    spec: NoiseSpec,
    num_samples: int,
    channel: int = 0,
    position: Optional[Sequence[float]] = None,
) -> np.ndarray:
    """Unscaled noise: profile amplitudes with seeded random phase, inverse transformed."""
    n = num_samples + (num_samples % 2)
    freqs = np.arange(n // 2 + 1) * spec.sample_rate_hz / n
    amp = noise_profile(spec, freqs, channel, position)
    phase = make_rng(spec.seed, 2, channel).uniform(0.0, 2.0 * np.pi, freqs.size)
    return sfft.irfft(amp * np.exp(1j * phase), n=n)[:num_samples]


def make_target(
    s: Signal,
    h: ImpulseResponse,
    noise: Optional[NoiseSpec] = None,
    position: Optional[Sequence[float]] = None,
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Noisy observation y = s*h + n.

    The SNR is the energy ratio over the whole multi-channel target.

    Args:
        s: Excitation
        h: Filter (C channels)
        noise: Noise spec, or None for a clean target
        position: Query position (defaults to h.position)

    Returns:
        (target of shape (C, len(s)+T-1), scaled noise of the same shape)
    """
    clean = np.stack([convolve(s, h.channel(c)).samples for c in range(h.channels)])
    if noise is None:
        return clean, np.zeros_like(clean)
    if noise.sample_rate_hz != s.sample_rate_hz:
        raise DimensionMismatchError("Noise and excitation sample rates differ", s.sample_rate_hz, noise.sample_rate_hz)
    pos = h.position if position is None else position
    raw = np.stack([make_noise(noise, clean.shape[1], c, pos) for c in range(h.channels)])
    scaled = scale_to_snr(
        Signal(clean.reshape(-1), s.sample_rate_hz),
        Signal(raw.reshape(-1), s.sample_rate_hz),
        noise.target_snr_db,
    ).samples.reshape(clean.shape)
    return clean + scaled, scaled


def true_noise_amplitude(spec: NoiseSpec, position: Optional[Sequence[float]] = None, channels: int = 1) -> np.ndarray:
    """Channel-averaged noise amplitude profile on the fft_len/2 + 1 loss bins (unscaled)."""
    freqs = np.arange(spec.fft_len // 2 + 1) * spec.sample_rate_hz / spec.fft_len
    return np.mean([noise_profile(spec, freqs, c, position) for c in range(channels)], axis=0)


# ==================== Export ====================


def export_dataset(ir_set: MeasuredIrSet, out_dir: Union[str, Path]) -> Path:
    """
    Write one raw little-endian f32 file per IR plus a positions manifest.

    Args:
        ir_set: Filters to export
        out_dir: Output directory (created if needed)

    Returns:
        Path of the manifest
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    manifest = out / MANIFEST_NAME
    with manifest.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["index", "x", "y", "z", "az", "el", "channels", "taps"])
        for k, ir in enumerate(ir_set.entries):
            ir.taps.astype("<f4").tofile(out / f"ir_{k:05d}.f32")
            az, el = cartesian_to_spherical(ir.position)
            writer.writerow([k, *(repr(float(v)) for v in ir.position), repr(az), repr(el), ir.channels, ir.num_taps])
    meta: Dict[str, Any] = {"sample_rate_hz": ir_set.sample_rate_hz, "metadata": ir_set.metadata}
    if ir_set.grid is not None:
        meta["grid"] = {
            "azimuths_deg": ir_set.grid.azimuths_deg.tolist(),
            "elevations_deg": ir_set.grid.elevations_deg.tolist(),
            "node_index": ir_set.grid.node_index.tolist(),
        }
    (out / METADATA_NAME).write_text(json.dumps(meta, indent=2, sort_keys=True))
    logger.info(f"Exported {len(ir_set)} filters to {out}")
    return manifest


def load_dataset(out_dir: Union[str, Path]) -> MeasuredIrSet:
    """
    Read a directory written by export_dataset.

    Raises:
        GridError: If the manifest is missing
        DimensionMismatchError: If a tap file has the wrong size
    """
    out = Path(out_dir)
    manifest = out / MANIFEST_NAME
    if not manifest.exists():
        raise GridError(f"No dataset manifest at {manifest}")
    entries = []
    with manifest.open(newline="") as fh:
        for row in csv.DictReader(fh):
            channels, taps = int(row["channels"]), int(row["taps"])
            data = np.fromfile(out / f"ir_{int(row['index']):05d}.f32", dtype="<f4")
            if data.size != channels * taps:
                raise DimensionMismatchError("Tap file size disagrees with manifest", channels * taps, data.size)
            position = (float(row["x"]), float(row["y"]), float(row["z"]))
            entries.append(ImpulseResponse(taps=data.astype(np.float64).reshape(channels, taps), position=position))
    grid = None
    sample_rate = 48000
    metadata: Dict[str, Any] = {}
    meta_path = out / METADATA_NAME
    if meta_path.exists():
        meta = json.loads(meta_path.read_text())
        sample_rate = int(meta.get("sample_rate_hz", sample_rate))
        metadata = meta.get("metadata", {})
        if "grid" in meta:
            grid = GridMetadata(**meta["grid"])
    return MeasuredIrSet(entries=entries, grid=grid, sample_rate_hz=sample_rate, metadata=metadata)
