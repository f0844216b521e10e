"""Model files and compression reporting.

File layout (all little-endian):

    magic "IRML" | version u16 | input_dim u8 | num_octaves u8
    | layer_count u8 | layer_dims u32 x (layer_count + 1) | activation u8
    | noise kind u8 | noise payload | IR-MLP parameters | [trailer]

Activation ids: 1 leaky rectifier (slope 0.01), 2 rectifier, 3 leaky
rectifier whose slope is stored in the trailer. Noise kinds: 0 none;
1 static (u32 K, then K f32 log-amplitudes); 2 positional (num_octaves u8,
layer_count u8, layer_dims u32 x (layer_count + 1), activation, then the
network parameters). Parameters are f32, layer by layer, weights row-major
then biases.

The optional trailer carries what the fixed header has no field for:

    marker "IRMT" | trailer version u16 | num_taps u32 | position box f64 x 6
    | IR-MLP slope f32 | noise network slope f32

Files without a trailer use the caller's tap count (400 by default) and the
unit position box.
"""

import logging
import os
import struct
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from irfield.config import EncoderConfig
from irfield.exceptions import (
    BadMagicError,
    GridError,
    SizeMismatchError,
    UnsupportedVersionError,
    ValidationError,
)
from irfield.neural_field import UNIT_BOX, FieldModel, MlpParams, count_parameters, init_params
from irfield.noise_model import NoiseMlp, NoiseModel, StaticNoiseSpectrum
from irfield.trainer import eval_sdr
from irfield.types import MeasuredIrSet
from irfield.utils import time_calls, timing_stats

logger = logging.getLogger(__name__)

MAGIC = b"IRML"
FORMAT_VERSION = 1
TRAILER_MAGIC = b"IRMT"
TRAILER_VERSION = 1
TRAILER_FORMAT = "<4sHI6dff"
TRAILER_SIZE = struct.calcsize(TRAILER_FORMAT)
DEFAULT_NUM_TAPS = 400
ACTIVATION_LEAKY = 1
ACTIVATION_RELU = 2
ACTIVATION_LEAKY_CUSTOM = 3
NOISE_NONE = 0
NOISE_STATIC = 1
NOISE_POSITIONAL = 2
F32 = np.dtype("<f4")


# ==================== Encoding ====================


def _activation_id(slope: float) -> int:
    if np.float32(slope) == np.float32(0.01):
        return ACTIVATION_LEAKY
    if slope == 0.0:
        return ACTIVATION_RELU
    return ACTIVATION_LEAKY_CUSTOM


def _network_header(params: MlpParams) -> bytes:
    dims = params.layer_dims
    if params.num_layers > 255:
        raise ValidationError("Model files support at most 255 layers")
    return struct.pack(f"<B{len(dims)}IB", params.num_layers, *dims, _activation_id(params.slope))


def _network_payload(params: MlpParams) -> bytes:
    return b"".join(a.astype(F32).tobytes(order="C") for a in params.arrays())


def encode_model(model: FieldModel) -> bytes:
    """Serialize a FieldModel to bytes, trailer included."""
    enc = model.encoder
    parts = [
        MAGIC,
        struct.pack("<HBB", FORMAT_VERSION, enc.input_dim, enc.num_octaves),
        _network_header(model.params),
    ]
    noise = model.noise_model
    noise_slope = 0.0
    if noise is None:
        parts.append(struct.pack("<B", NOISE_NONE))
    elif isinstance(noise, StaticNoiseSpectrum):
        parts.append(struct.pack("<BI", NOISE_STATIC, noise.num_bins))
        parts.append(noise.log_amplitudes.astype(F32).tobytes())
    else:
        noise_slope = noise.params.slope
        parts.append(struct.pack("<BB", NOISE_POSITIONAL, noise.encoder.num_octaves))
        parts.append(_network_header(noise.params))
        parts.append(_network_payload(noise.params))
    parts.append(_network_payload(model.params))
    parts.append(
        struct.pack(
            TRAILER_FORMAT,
            TRAILER_MAGIC,
            TRAILER_VERSION,
            model.num_taps,
            *model.position_box,
            model.params.slope,
            noise_slope,
        )
    )
    return b"".join(parts)


# ==================== Decoding ====================


class _Reader:
    """Cursor over a byte buffer that reports truncation as a size mismatch."""

    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise SizeMismatchError(
                f"Model file truncated: needs at least {self.pos + n} bytes, has {len(self.data)}",
                expected=self.pos + n,
                actual=len(self.data),
            )
        chunk = self.data[self.pos : self.pos + n]
        self.pos += n
        return chunk

    def unpack(self, fmt: str) -> Tuple[Any, ...]:
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))

    def floats(self, count: int) -> np.ndarray:
        return np.frombuffer(self.take(4 * count), dtype=F32).astype(np.float64)


def _read_network_header(reader: _Reader) -> Tuple[List[int], int]:
    (count,) = reader.unpack("<B")
    if count < 1:
        raise SizeMismatchError("Model file declares a network without layers", expected=1, actual=0)
    dims = list(reader.unpack(f"<{count + 1}I"))
    (activation,) = reader.unpack("<B")
    if activation not in (ACTIVATION_LEAKY, ACTIVATION_RELU, ACTIVATION_LEAKY_CUSTOM):
        raise UnsupportedVersionError(f"Unknown activation id {activation}", version=activation)
    return dims, activation


def _slope(activation: int, stored: Optional[float]) -> float:
    if activation == ACTIVATION_LEAKY:
        return 0.01
    if activation == ACTIVATION_RELU:
        return 0.0
    if stored is None:
        raise SizeMismatchError("Activation id 3 needs the trailer that stores its slope")
    return stored


def _payload_floats(dims: Sequence[int]) -> int:
    return int(sum(i * o + o for i, o in zip(dims[:-1], dims[1:])))


def _read_network(reader: _Reader, dims: Sequence[int], slope: float) -> MlpParams:
    arrays: List[np.ndarray] = []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        arrays.append(reader.floats(fan_in * fan_out).reshape(fan_out, fan_in))
        arrays.append(reader.floats(fan_out))
    return MlpParams.from_arrays(arrays, slope=slope)


def decode_model(data: bytes, num_taps: int = DEFAULT_NUM_TAPS) -> FieldModel:
    """
    Parse model bytes.

    Args:
        data: File contents
        num_taps: Tap count for files without a trailer

    Raises:
        BadMagicError: If the magic or the trailer marker is wrong
        UnsupportedVersionError: If a version or an id is unknown
        SizeMismatchError: If the payload length disagrees with the declared sizes
    """
    if data[:4] != MAGIC:
        raise BadMagicError(f"Not a model file (magic {data[:4]!r})")
    reader = _Reader(data)
    reader.take(4)
    version, input_dim, num_octaves = reader.unpack("<HBB")
    if version != FORMAT_VERSION:
        raise UnsupportedVersionError(f"Unsupported model format version {version}", version=version)
    dims, activation = _read_network_header(reader)
    (noise_kind,) = reader.unpack("<B")

    body_tail = 4 * _payload_floats(dims)
    noise_reader: Optional[Tuple[str, Any]] = None
    if noise_kind == NOISE_STATIC:
        (num_bins,) = reader.unpack("<I")
        noise_reader = ("static", num_bins)
        body_tail += 4 * num_bins
    elif noise_kind == NOISE_POSITIONAL:
        (noise_octaves,) = reader.unpack("<B")
        noise_dims, noise_activation = _read_network_header(reader)
        noise_reader = ("positional", (noise_octaves, noise_dims, noise_activation))
        body_tail += 4 * _payload_floats(noise_dims)
    elif noise_kind != NOISE_NONE:
        raise UnsupportedVersionError(f"Unknown noise model kind {noise_kind}", version=noise_kind)

    body_end = reader.pos + body_tail
    if len(data) not in (body_end, body_end + TRAILER_SIZE):
        raise SizeMismatchError(
            f"Model file is {len(data)} bytes, declared sizes need {body_end} "
            f"or {body_end + TRAILER_SIZE} with the trailer",
            expected=body_end + TRAILER_SIZE,
            actual=len(data),
        )

    box: Sequence[float] = UNIT_BOX
    slope: Optional[float] = None
    noise_slope: Optional[float] = None
    if len(data) > body_end:
        marker, trailer_version, num_taps, *rest = struct.unpack(TRAILER_FORMAT, data[body_end:])
        if marker != TRAILER_MAGIC:
            raise BadMagicError(f"Bad trailer marker {marker!r}")
        if trailer_version != TRAILER_VERSION:
            raise UnsupportedVersionError(
                f"Unsupported trailer version {trailer_version}", version=trailer_version
            )
        box = rest[:6]
        slope, noise_slope = float(rest[6]), float(rest[7])

    noise_model: Optional[NoiseModel] = None
    if noise_reader is not None and noise_reader[0] == "static":
        noise_model = StaticNoiseSpectrum(reader.floats(noise_reader[1]))
    elif noise_reader is not None:
        noise_octaves, noise_dims, noise_activation = noise_reader[1]
        noise_model = NoiseMlp(
            _read_network(reader, noise_dims, _slope(noise_activation, noise_slope)),
            EncoderConfig(num_octaves=noise_octaves, input_dim=3),
        )
    params = _read_network(reader, dims, _slope(activation, slope))
    return FieldModel(
        params,
        EncoderConfig(num_octaves=num_octaves, input_dim=input_dim),
        num_taps,
        tuple(float(v) for v in box),
        noise_model,
    )


def save_model(model: FieldModel, path: Union[str, Path]) -> None:
    """
    Write a model file atomically (temp file in the target directory, then rename).

    Args:
        model: Model to save
        path: Destination
    """
    target = Path(path)
    data = encode_model(model)
    directory = target.parent if str(target.parent) else Path(".")
    directory.mkdir(parents=True, exist_ok=True)
    fd, tmp_name = tempfile.mkstemp(prefix=".irml-", dir=str(directory))
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp_name, target)
    except BaseException:
        if os.path.exists(tmp_name):
            os.unlink(tmp_name)
        raise
    logger.info(f"Saved model ({len(data)} bytes, {count_parameters(model.params)} parameters) to {target}")


def load_model(path: Union[str, Path], num_taps: int = DEFAULT_NUM_TAPS) -> FieldModel:
    """Read a model file; see decode_model for errors."""
    return decode_model(Path(path).read_bytes(), num_taps)


# ==================== Compression ====================


@dataclass
class CompressionReport:
    """Storage and speed of a field model against raw filters."""

    param_count: int
    raw_float_count: int
    probe_sdr_db: Dict[str, float] = field(default_factory=dict)
    timing: Dict[str, Any] = field(default_factory=dict)

    @property
    def compression_ratio(self) -> float:
        """Get 1 - params / raw floats."""
        return 1.0 - self.param_count / self.raw_float_count

    @property
    def compression_percent(self) -> str:
        """Get ratio as a percentage with two decimals."""
        return f"{100.0 * self.compression_ratio:.2f}%"

    def to_dict(self) -> Dict[str, Any]:
        """Convert to dictionary (timing kept separate)."""
        return {
            "param_count": self.param_count,
            "raw_float_count": self.raw_float_count,
            "compression_ratio": self.compression_ratio,
            "compression_percent": self.compression_percent,
            "probe_sdr_db": dict(self.probe_sdr_db),
            "timing": dict(self.timing),
        }


def raw_float_count(positions: int, channels: int, taps: int) -> int:
    """Floats needed to store every filter directly."""
    return int(positions) * int(channels) * int(taps)


def compression_report(
    model: FieldModel,
    field_dims: Tuple[int, int, int],
    probes: MeasuredIrSet,
    calls: int = 100,
    warmup: int = 10,
) -> CompressionReport:
    """
    Parameter count, compression ratio, probe SDR and predict_ir latency.

    Args:
        model: Field model
        field_dims: (positions, channels, taps) of the field it replaces
        probes: Stored filters to compare against
        calls: Timed predict_ir calls
        warmup: Untimed calls before timing

    Raises:
        GridError: If the probe set is empty
    """
    if len(probes) == 0:
        raise GridError("Compression report needs at least one probe filter")
    report = eval_sdr(model, probes)
    position = probes[0].position
    durations, _ = time_calls(lambda: model.predict_ir(position), calls=calls, warmup=warmup)
    result = CompressionReport(
        param_count=count_parameters(model.params),
        raw_float_count=raw_float_count(*field_dims),
        probe_sdr_db={
            "mean": report.mean_sdr_db,
            "median": report.median_sdr_db,
            "std": report.std_sdr_db,
        },
        timing=timing_stats(durations),
    )
    logger.info(
        f"Compression: {result.param_count} parameters vs {result.raw_float_count} floats "
        f"({result.compression_percent}), probe SDR {report.mean_sdr_db:.2f} dB"
    )
    return result


def efficiency_table(
    widths: Sequence[int] = (32, 64, 128, 256, 512),
    num_layers: int = 6,
    field_dims: Tuple[int, int, int] = (9720, 2, 400),
    encoder: Optional[EncoderConfig] = None,
    calls: int = 20,
    warmup: int = 3,
    seed: int = 0,
) -> List[Dict[str, Any]]:
    """
    Parameter count, compression and IR generation latency per hidden width.

    Returns:
        One row per width: width, param_count, compression_ratio, mean_ms, std_ms, median_ms
    """
    encoder = encoder or EncoderConfig()
    positions, channels, taps = field_dims
    raw = raw_float_count(positions, channels, taps)
    rows = []
    for width in widths:
        dims = [encoder.output_dim] + [int(width)] * (num_layers - 1) + [channels]
        model = FieldModel(init_params(dims, seed), encoder, taps)
        durations, _ = time_calls(lambda: model.predict_ir((0.0, 0.0, 1.0)), calls=calls, warmup=warmup)
        stats = timing_stats(durations)
        params = count_parameters(model.params)
        rows.append(
            {
                "width": int(width),
                "param_count": params,
                "compression_ratio": 1.0 - params / raw,
                "mean_ms": stats["mean_ms"],
                "std_ms": stats["std_ms"],
                "median_ms": stats["median_ms"],
            }
        )
    return rows
