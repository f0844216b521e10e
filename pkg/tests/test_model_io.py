"""Tests for model files and compression reports."""

import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from irfield.config import EncoderConfig, MlpConfig
from irfield.exceptions import BadMagicError, GridError, SizeMismatchError, UnsupportedVersionError
from irfield.model_io import (
    MAGIC,
    TRAILER_SIZE,
    compression_report,
    decode_model,
    efficiency_table,
    encode_model,
    load_model,
    raw_float_count,
    save_model,
)
from irfield.neural_field import UNIT_BOX, FieldModel, count_parameters, init_params
from irfield.noise_model import NoiseMlp, StaticNoiseSpectrum

HEADER_BYTES = 4 + 4 + 1 + 4 * 7 + 1 + 1


def _model(hidden=8, layers=3, octaves=2, slope=0.01, taps=16, channels=2, noise=None, seed=0):
    encoder = EncoderConfig(num_octaves=octaves)
    dims = MlpConfig(num_layers=layers, hidden=hidden, slope=slope).layer_dims(encoder.output_dim, channels)
    return FieldModel(
        init_params(dims, seed, slope),
        encoder,
        taps,
        (-1.0, -1.0, -0.5, 1.0, 1.0, 0.75),
        noise,
    )


@pytest.fixture
def default_model():
    """Provide the default 6-layer, 128-wide stereo model."""
    encoder = EncoderConfig()
    return FieldModel(init_params(MlpConfig().layer_dims(encoder.output_dim, 2), 0), encoder, 400)


def test_default_model_file_size(default_model):
    """Test the file is the header plus four bytes per parameter."""
    data = encode_model(default_model)
    assert data[:4] == MAGIC
    assert count_parameters(default_model.params) == 76674
    assert len(data) == HEADER_BYTES + 4 * 76674 + TRAILER_SIZE
    assert data[8] == 6
    assert list(struct.unpack_from("<7I", data, 9)) == default_model.params.layer_dims


def test_decoded_model_predicts_same_filter(default_model):
    """Test single-precision storage barely changes predictions."""
    restored = decode_model(encode_model(default_model))
    assert restored.num_taps == 400
    assert restored.encoder == default_model.encoder
    a = default_model.predict_ir((0.3, -0.2, 0.9)).taps
    b = restored.predict_ir((0.3, -0.2, 0.9)).taps
    np.testing.assert_allclose(b, a, rtol=1e-4, atol=1e-6)


@settings(max_examples=30, deadline=None)
@given(
    hidden=st.integers(min_value=1, max_value=8),
    layers=st.integers(min_value=1, max_value=4),
    octaves=st.integers(min_value=1, max_value=3),
    slope=st.sampled_from([0.01, 0.0, 0.2]),
    taps=st.integers(min_value=1, max_value=64),
    channels=st.integers(min_value=1, max_value=3),
    noise_kind=st.sampled_from(["none", "static", "positional"]),
    seed=st.integers(min_value=0, max_value=1000),
)
def test_file_bytes_stable_across_decode(hidden, layers, octaves, slope, taps, channels, noise_kind, seed):
    """Test any architecture decodes to a model that encodes to identical bytes."""
    noise = None
    if noise_kind == "static":
        noise = StaticNoiseSpectrum(np.linspace(-3.0, 1.0, 9))
    elif noise_kind == "positional":
        noise = NoiseMlp.init(9, network=MlpConfig(num_layers=2, hidden=4, slope=slope), num_octaves=2, seed=seed)
    model = _model(hidden, layers, octaves, slope, taps, channels, noise, seed)
    data = encode_model(model)
    restored = decode_model(data)
    assert encode_model(restored) == data
    assert restored.params.layer_dims == model.params.layer_dims
    assert restored.params.slope == pytest.approx(slope)
    assert type(restored.noise_model) is type(model.noise_model)


def test_bad_magic():
    """Test files that do not start with the magic."""
    data = bytearray(encode_model(_model()))
    data[:4] = b"IRMX"
    with pytest.raises(BadMagicError):
        decode_model(bytes(data))


def test_unsupported_version():
    """Test a version other than 1."""
    data = bytearray(encode_model(_model()))
    data[4:6] = struct.pack("<H", 2)
    with pytest.raises(UnsupportedVersionError) as info:
        decode_model(bytes(data))
    assert info.value.version == 2


@pytest.mark.parametrize("cut", [1, 4, 100])
def test_truncated_file(cut):
    """Test short files report expected and actual sizes."""
    data = encode_model(_model())
    with pytest.raises(SizeMismatchError) as info:
        decode_model(data[:-cut])
    assert info.value.actual == len(data) - cut
    assert info.value.expected > info.value.actual


def test_header_only_truncation():
    """Test a file cut inside the header."""
    with pytest.raises(SizeMismatchError):
        decode_model(encode_model(_model())[:10])


def test_trailing_bytes():
    """Test extra bytes after the parameters."""
    data = encode_model(_model())
    with pytest.raises(SizeMismatchError) as info:
        decode_model(data + b"\x00\x00\x00\x00")
    assert info.value.expected == len(data)


def test_unknown_noise_kind():
    """Test an unknown noise model id."""
    model = _model()
    data = bytearray(encode_model(model))
    offset = 4 + 4 + 1 + 4 * 4 + 1
    assert data[offset] == 0
    data[offset] = 9
    with pytest.raises(UnsupportedVersionError):
        decode_model(bytes(data))


def _packed_header_file(activation=2):
    """Hand-pack a trailer-less file: 4 -> 8 features, a 3-wide hidden layer, 2 outputs."""
    values = (np.arange(35, dtype="<f4") / 10.0).astype("<f4")
    header = MAGIC + struct.pack("<HBBB3IBB", 1, 4, 1, 2, 8, 3, 2, activation, 0)
    return header + values.tobytes(), values


def test_decode_file_without_trailer():
    """Test a file holding only the fixed header and parameters."""
    data, values = _packed_header_file()
    model = decode_model(data, num_taps=32)
    assert model.params.layer_dims == [8, 3, 2]
    assert model.params.slope == 0.0
    assert model.encoder == EncoderConfig(num_octaves=1, input_dim=4)
    assert model.num_taps == 32
    assert model.position_box == UNIT_BOX
    assert model.noise_model is None
    np.testing.assert_array_equal(model.params.weights[0], values[:24].reshape(3, 8))
    np.testing.assert_array_equal(model.params.biases[0], values[24:27])
    np.testing.assert_array_equal(model.params.weights[1], values[27:33].reshape(2, 3))
    np.testing.assert_array_equal(model.params.biases[1], values[33:])
    assert decode_model(data).num_taps == 400


def test_encoded_file_starts_with_fixed_layout():
    """Test re-encoding keeps the hand-packed bytes as a prefix and appends the trailer."""
    data, _ = _packed_header_file()
    encoded = encode_model(decode_model(data, num_taps=32))
    assert encoded[: len(data)] == data
    assert len(encoded) == len(data) + TRAILER_SIZE
    assert encoded[len(data) : len(data) + 4] == b"IRMT"


def test_custom_slope_needs_trailer():
    """Test activation id 3 without the trailer that stores its slope."""
    data, _ = _packed_header_file(activation=3)
    with pytest.raises(SizeMismatchError):
        decode_model(data)


def test_bad_trailer_marker():
    """Test a trailer that does not start with its marker."""
    data = bytearray(encode_model(_model()))
    data[-TRAILER_SIZE] = ord("X")
    with pytest.raises(BadMagicError):
        decode_model(bytes(data))


def test_position_box_kept_exactly():
    """Test a metre-scale box survives the file without rounding."""
    encoder = EncoderConfig(num_octaves=2)
    dims = MlpConfig(num_layers=2, hidden=4).layer_dims(encoder.output_dim, 1)
    box = (-1.3, -0.7, 0.1, 2.9, 1.7, 1.9)
    model = FieldModel(init_params(dims, 3), encoder, 24, box)
    restored = decode_model(encode_model(model))
    assert restored.position_box == box
    assert restored.num_taps == 24
    position = (0.37, 0.21, 1.11)
    np.testing.assert_array_equal(restored.normalize_position(position), model.normalize_position(position))


def test_save_and_load(tmp_path):
    """Test the file lands at the target path with no temp files left behind."""
    model = _model(noise=StaticNoiseSpectrum(np.zeros(5)))
    path = tmp_path / "models" / "field.irml"
    save_model(model, path)
    assert sorted(p.name for p in path.parent.iterdir()) == ["field.irml"]
    restored = load_model(path)
    np.testing.assert_allclose(restored.noise_model.amplitude(), np.ones(5))
    save_model(restored, path)
    assert path.read_bytes() == encode_model(restored)


def test_raw_float_count_reference_field():
    """Test raw storage of the reference field."""
    assert raw_float_count(9720, 2, 400) == 7_776_000


def test_default_compression_ratio(default_model, tiny_field):
    """Test the default network stores under 1% of the reference field."""
    probes = tiny_field.subset([0])
    model = FieldModel(default_model.params, default_model.encoder, tiny_field.num_taps)
    report = compression_report(model, (9720, 2, 400), probes, calls=2, warmup=0)
    assert report.param_count == 76674
    assert report.compression_ratio > 0.97
    assert report.compression_percent == "99.01%"
    data = report.to_dict()
    assert set(data["probe_sdr_db"]) == {"mean", "median", "std"}
    assert data["timing"]["count"] == 2


def test_compression_report_needs_probes(tiny_field):
    """Test an empty probe set."""
    with pytest.raises(GridError):
        compression_report(_model(taps=48), (12, 2, 48), tiny_field.subset([]))


def test_efficiency_table_rows():
    """Test parameter counts grow with width and compression shrinks."""
    rows = efficiency_table(widths=(8, 16), num_layers=3, field_dims=(100, 2, 64), calls=2, warmup=0)
    assert [r["width"] for r in rows] == [8, 16]
    assert rows[0]["param_count"] < rows[1]["param_count"]
    assert rows[0]["compression_ratio"] > rows[1]["compression_ratio"]
    assert set(rows[0]) == {"width", "param_count", "compression_ratio", "mean_ms", "std_ms", "median_ms"}
