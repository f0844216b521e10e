"""Tests for the synthetic field, noise synthesis, geometry and dataset export."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import fft as sfft

from irfield.exceptions import DimensionMismatchError, FrequencyRangeError, GridError
from irfield.geometry import cartesian_to_spherical, chord_distance, spherical_to_cartesian
from irfield.synthetic import (
    band_centers,
    export_dataset,
    grid_neighbors,
    load_dataset,
    make_filter_field,
    make_noise,
    make_target,
    neighbor_bound,
    noise_bands,
    synthetic_ir,
)
from irfield.testing import tiny_field_spec, tiny_noise_spec


@given(
    az=st.floats(min_value=0.0, max_value=359.9),
    el=st.floats(min_value=-89.0, max_value=89.0),
)
def test_spherical_cartesian_inverse(az, el):
    """Test angles survive a trip through Cartesian coordinates."""
    pos = spherical_to_cartesian(az, el)
    assert np.linalg.norm(pos) == pytest.approx(1.0)
    az2, el2 = cartesian_to_spherical(pos)
    assert el2 == pytest.approx(el, abs=1e-9)
    assert min(abs(az2 - az), 360.0 - abs(az2 - az)) == pytest.approx(0.0, abs=1e-7)


def test_chord_distance_of_antipodes():
    """Test opposite points are two units apart."""
    assert chord_distance(spherical_to_cartesian(0, 0), spherical_to_cartesian(180, 0)) == pytest.approx(2.0)


def test_chord_distance_rows_against_point():
    """Test an (n, 3) block against one point gives one distance per row."""
    rows = np.array([[0.0, 0.0, 0.0], [3.0, 4.0, 0.0], [1.0, 1.0, 1.0]])
    dist = chord_distance(rows, (0.0, 0.0, 0.0))
    np.testing.assert_allclose(dist, [0.0, 5.0, np.sqrt(3.0)])
    assert isinstance(chord_distance(rows[1], rows[2]), float)


def test_field_is_deterministic(field_spec):
    """Test the same seed gives the same filters and another seed differs."""
    a = make_filter_field(field_spec)
    b = make_filter_field(field_spec)
    c = make_filter_field(tiny_field_spec(seed=4))
    for x, y in zip(a.entries, b.entries):
        np.testing.assert_array_equal(x.taps, y.taps)
    assert not np.allclose(a[0].taps, c[0].taps)


def test_field_layout(tiny_field, field_spec):
    """Test grid order, tap shape and peak normalization."""
    assert len(tiny_field) == field_spec.num_nodes
    assert tiny_field.grid.shape == (field_spec.n_elevation, field_spec.n_azimuth)
    assert tiny_field.grid.node_index[1, 2] == field_spec.n_azimuth + 2
    for ir in tiny_field.entries:
        assert ir.taps.shape == (2, 48)
        assert np.max(np.abs(ir.taps)) == pytest.approx(1.0)


def test_off_grid_filter_matches_node(tiny_field, field_spec):
    """Test the generator evaluated at a node reproduces the stored filter."""
    ir = synthetic_ir(field_spec, tiny_field[3].position)
    np.testing.assert_allclose(ir.taps, tiny_field[3].taps, atol=1e-12)


def test_channels_differ_with_lateral_position(tiny_field, field_spec):
    """Test the left and right channels are not identical off the median plane."""
    node = tiny_field[int(tiny_field.grid.node_index[1, 1])]
    assert abs(node.position[1]) > 0.5
    assert not np.allclose(node.channel(0), node.channel(1))


def test_neighbors_respect_smoothness_bound(tiny_field, field_spec):
    """Test adjacent nodes stay within the Lipschitz bound."""
    pairs = grid_neighbors(tiny_field.grid)
    assert len(pairs) == 4 * 3 + 4 * 2
    for a, b in pairs:
        ha, hb = tiny_field[a], tiny_field[b]
        dist = np.linalg.norm(ha.taps - hb.taps)
        assert dist <= neighbor_bound(field_spec, ha.position, hb.position)


def test_band_centers_affine_and_clamped():
    """Test the band centers follow the affine map and stay below Nyquist."""
    assert band_centers(0.0, 0.0) == (3000.0, 6000.0)
    assert band_centers(0.5, 0.5) == (10500.0, 12000.0)
    assert band_centers(1.0, 1.0, band_width_hz=1000.0, sample_rate_hz=8000) == (3500.0, 3500.0)
    with pytest.raises(FrequencyRangeError):
        band_centers(0.0, 0.0, band_width_hz=4000.0, sample_rate_hz=8000)


def test_dependent_noise_confined_to_bands():
    """Test position-dependent noise has no energy outside its two bands."""
    spec = tiny_noise_spec(kind="dependent")
    pos = spherical_to_cartesian(90.0, 0.0)
    x = make_noise(spec, 4000, channel=0, position=pos)
    power = np.abs(sfft.rfft(x)) ** 2
    freqs = sfft.rfftfreq(x.size, 1.0 / spec.sample_rate_hz)
    inside = np.zeros(freqs.shape, dtype=bool)
    for lo, hi in noise_bands(spec, pos):
        inside |= (freqs >= lo) & (freqs <= hi)
    assert power[inside].sum() > 0
    assert power[~inside].sum() <= 1e-12 * power.sum()


def test_dependent_noise_needs_position():
    """Test the banded noise refuses to run without a position."""
    with pytest.raises(GridError):
        make_noise(tiny_noise_spec(kind="dependent"), 100)


def test_independent_noise_ignores_position():
    """Test the static noise profile is the same everywhere."""
    spec = tiny_noise_spec()
    a = make_noise(spec, 512, position=(1.0, 0.0, 0.0))
    b = make_noise(spec, 512, position=(0.0, 0.0, 1.0))
    np.testing.assert_array_equal(a, b)
    assert not np.allclose(make_noise(spec, 512, channel=0), make_noise(spec, 512, channel=1))


@pytest.mark.parametrize("snr_db", [-10.0, 0.0, 20.0])
def test_target_snr(tiny_field, sweep, snr_db):
    """Test the whole-target energy ratio matches the requested SNR."""
    spec = tiny_noise_spec(target_snr_db=snr_db)
    target, noise = make_target(sweep, tiny_field[0], spec)
    clean = target - noise
    assert target.shape == (2, len(sweep) + 47)
    measured = 10.0 * np.log10(np.sum(clean ** 2) / np.sum(noise ** 2))
    assert measured == pytest.approx(snr_db, abs=1e-6)


def test_clean_target_has_no_noise(tiny_field, sweep):
    """Test a missing noise spec yields the plain convolution."""
    target, noise = make_target(sweep, tiny_field[0])
    assert not noise.any()
    np.testing.assert_allclose(target[1], np.convolve(sweep.samples, tiny_field[0].channel(1)), atol=1e-10)


def test_target_rejects_mismatched_rate(tiny_field, sweep):
    """Test noise and excitation must share a sample rate."""
    with pytest.raises(DimensionMismatchError):
        make_target(sweep, tiny_field[0], tiny_noise_spec(sample_rate_hz=16000))


def test_export_and_load(tmp_path, tiny_field):
    """Test a dataset written to disk loads back with its grid."""
    manifest = export_dataset(tiny_field, tmp_path / "field")
    assert manifest.exists()
    assert len(list((tmp_path / "field").glob("ir_*.f32"))) == len(tiny_field)

    loaded = load_dataset(tmp_path / "field")
    assert len(loaded) == len(tiny_field)
    assert loaded.sample_rate_hz == tiny_field.sample_rate_hz
    np.testing.assert_array_equal(loaded.grid.node_index, tiny_field.grid.node_index)
    for a, b in zip(loaded.entries, tiny_field.entries):
        np.testing.assert_allclose(a.taps, b.taps, atol=1e-6)
        assert a.position == pytest.approx(b.position)


def test_load_missing_dataset(tmp_path):
    """Test loading a directory without a manifest."""
    with pytest.raises(GridError):
        load_dataset(tmp_path)


def test_load_truncated_tap_file(tmp_path, tiny_field):
    """Test a short tap file is reported."""
    export_dataset(tiny_field, tmp_path)
    path = tmp_path / "ir_00002.f32"
    path.write_bytes(path.read_bytes()[:-4])
    with pytest.raises(DimensionMismatchError):
        load_dataset(tmp_path)


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(min_value=0, max_value=10_000))
def test_peak_normalization_any_seed(seed):
    """Test every generated filter peaks at one for arbitrary seeds."""
    spec = tiny_field_spec(seed=seed, n_azimuth=2, n_elevation=2)
    for ir in make_filter_field(spec).entries:
        assert np.max(np.abs(ir.taps)) == pytest.approx(1.0)
