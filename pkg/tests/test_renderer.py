"""Tests for the streaming renderer and trajectory handling."""

import numpy as np
import pytest

from irfield.config import RenderConfig
from irfield.dsp import read_wav, write_wav
from irfield.exceptions import ConfigError, InvalidSignalError, TrajectoryError
from irfield.renderer import (
    RenderResult,
    StreamingRenderer,
    load_trajectory,
    position_at,
    render,
    render_array,
    validate_trajectory,
)
from irfield.testing import FixedIrModel, PositionGainModel

RATE = 8000


@pytest.fixture
def taps(rng):
    """Provide a random stereo 16-tap filter."""
    return rng.standard_normal((2, 16))


def _still(position=(0.0, 0.0, 1.0)):
    return np.array([0.0]), np.array([position])


def _write_trajectory(path, rows, header="time_s,x,y,z"):
    path.write_text(header + "\n" + "".join(",".join(str(v) for v in row) + "\n" for row in rows))
    return path


@pytest.mark.parametrize("frame_size", [1, 7, 64, 2000])
def test_static_render_equals_convolution(rng, taps, frame_size):
    """Test a fixed position reproduces one-shot convolution for any frame size."""
    source = rng.standard_normal(1000)
    model = FixedIrModel(taps)
    result = render_array(model, source, *_still(), RATE, RenderConfig(frame_size=frame_size))
    assert result.output.shape == (2, 1000 + 15)
    for c in range(2):
        np.testing.assert_allclose(result.output[c], np.convolve(source, taps[c]), atol=1e-10)
    assert model.calls == 1


def test_silent_source_renders_silence(taps):
    """Test zeros in give zeros out."""
    result = render_array(FixedIrModel(taps), np.zeros(300), *_still(), RATE)
    assert not np.any(np.abs(result.output) > 1e-15)


def test_single_tap_filter(rng):
    """Test a one-tap filter scales the input with no tail."""
    source = rng.standard_normal(50)
    result = render_array(FixedIrModel(np.array([[0.5]])), source, *_still(), RATE, RenderConfig(frame_size=8))
    np.testing.assert_allclose(result.output[0], 0.5 * source, atol=1e-12)


def test_crossfade_on_filter_change(rng, taps):
    """Test the first samples after a change blend old and new filter outputs."""
    model = PositionGainModel(taps)
    renderer = StreamingRenderer(model, frame_size=32, crossfade=8)
    x = rng.standard_normal(64)
    renderer.process_frame(x[:32], (0.0, 0.0, 0.0))
    out = renderer.process_frame(x[32:], (1.0, 0.0, 0.0))

    full_old = np.stack([np.convolve(x, taps[c])[32:64] for c in range(2)])
    full_new = 2.0 * full_old
    ramp = (np.arange(8) + 1.0) / 9.0
    np.testing.assert_allclose(out[:, :8], (1 - ramp) * full_old[:, :8] + ramp * full_new[:, :8], atol=1e-10)
    np.testing.assert_allclose(out[:, 8:], full_new[:, 8:], atol=1e-10)


def test_no_crossfade_when_filter_unchanged(rng, taps):
    """Test moving to a position with the same filter does not fade."""
    model = FixedIrModel(taps)
    renderer = StreamingRenderer(model, frame_size=32, crossfade=8)
    x = rng.standard_normal(64)
    renderer.process_frame(x[:32], (0.0, 0.0, 0.0))
    out = renderer.process_frame(x[32:], (1.0, 0.0, 0.0))
    assert model.calls == 2
    expected = np.stack([np.convolve(x, taps[c])[32:64] for c in range(2)])
    np.testing.assert_allclose(out, expected, atol=1e-10)


def test_zero_crossfade_switches_hard(rng, taps):
    """Test crossfade 0 applies the new filter from the first sample."""
    renderer = StreamingRenderer(PositionGainModel(taps), frame_size=16, crossfade=0)
    x = rng.standard_normal(32)
    renderer.process_frame(x[:16], (0.0, 0.0, 0.0))
    out = renderer.process_frame(x[16:], (1.0, 0.0, 0.0))
    expected = np.stack([2.0 * np.convolve(x, taps[c])[16:32] for c in range(2)])
    np.testing.assert_allclose(out, expected, atol=1e-10)


def test_reset_clears_history(rng, taps):
    """Test a reset renderer behaves like a new one."""
    renderer = StreamingRenderer(FixedIrModel(taps), frame_size=16)
    x = rng.standard_normal(16)
    first = renderer.process_frame(x, (0.0, 0.0, 0.0))
    renderer.process_frame(rng.standard_normal(16), (0.0, 0.0, 0.0))
    renderer.reset()
    np.testing.assert_allclose(renderer.process_frame(x, (0.0, 0.0, 0.0)), first, atol=1e-12)
    assert len(renderer.frame_times_s) == 1


def test_frame_checks(taps):
    """Test oversize and non-finite frames and bad settings."""
    renderer = StreamingRenderer(FixedIrModel(taps), frame_size=8)
    with pytest.raises(InvalidSignalError):
        renderer.process_frame(np.zeros(9), (0.0, 0.0, 0.0))
    with pytest.raises(InvalidSignalError):
        renderer.process_frame(np.array([np.nan]), (0.0, 0.0, 0.0))
    with pytest.raises(ConfigError):
        StreamingRenderer(FixedIrModel(taps), frame_size=0)
    with pytest.raises(ConfigError):
        StreamingRenderer(FixedIrModel(taps), crossfade=-1)


def test_flush_without_frames_is_silent(taps):
    """Test flushing a fresh renderer gives T - 1 zeros per channel."""
    tail = StreamingRenderer(FixedIrModel(taps)).flush()
    assert tail.shape == (2, 15)
    assert not tail.any()


def test_moving_source_changes_filter_per_frame(rng, taps):
    """Test a linear trajectory re-predicts the filter for each new position."""
    model = PositionGainModel(taps)
    source = rng.standard_normal(400)
    times = np.array([0.0, 400 / RATE])
    positions = np.array([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0]])
    result = render_array(model, source, times, positions, RATE, RenderConfig(frame_size=100, crossfade=10))
    assert model.calls == 4
    assert result.output.shape == (2, 415)
    assert len(result.frame_times_s) == 5


def test_position_at_holds_endpoints():
    """Test linear interpolation inside and clamping outside the trajectory."""
    times = np.array([0.0, 1.0])
    positions = np.array([[0.0, 0.0, 0.0], [2.0, -2.0, 4.0]])
    np.testing.assert_allclose(position_at(times, positions, 0.25), [0.5, -0.5, 1.0])
    np.testing.assert_allclose(position_at(times, positions, 5.0), [2.0, -2.0, 4.0])


@pytest.mark.parametrize(
    "times",
    [[0.0, 0.2, 0.1], [-0.1, 0.1, 0.2], [0.0, np.inf, 1.0]],
)
def test_invalid_trajectories(times):
    """Test unordered, negative and non-finite timestamps."""
    with pytest.raises(TrajectoryError):
        validate_trajectory(times, np.zeros((3, 3)))


def test_trajectory_past_source_end(taps):
    """Test a trajectory longer than the source."""
    with pytest.raises(TrajectoryError):
        render_array(FixedIrModel(taps), np.zeros(80), np.array([0.0, 1.0]), np.zeros((2, 3)), RATE)


def test_load_trajectory(tmp_path):
    """Test reading a trajectory CSV with extra columns."""
    path = _write_trajectory(tmp_path / "t.csv", [(0.0, 1, 0, 0, "a"), (0.5, 0, 1, 0, "b")], "time_s,x,y,z,label")
    times, positions = load_trajectory(path)
    np.testing.assert_allclose(times, [0.0, 0.5])
    np.testing.assert_allclose(positions, [[1, 0, 0], [0, 1, 0]])


def test_load_trajectory_errors(tmp_path):
    """Test missing files, columns and values."""
    with pytest.raises(TrajectoryError):
        load_trajectory(tmp_path / "missing.csv")
    with pytest.raises(TrajectoryError):
        load_trajectory(_write_trajectory(tmp_path / "cols.csv", [(0, 1, 2)], "time_s,x,y"))
    with pytest.raises(TrajectoryError):
        load_trajectory(_write_trajectory(tmp_path / "text.csv", [(0, "left", 0, 0)]))
    with pytest.raises(TrajectoryError):
        load_trajectory(_write_trajectory(tmp_path / "empty.csv", []))


def test_render_files(tmp_path, rng, taps):
    """Test WAV in, WAV out with stereo sources averaged to mono."""
    source = rng.standard_normal((200, 2)) * 0.1
    write_wav(tmp_path / "src.wav", source, RATE)
    traj = _write_trajectory(tmp_path / "t.csv", [(0.0, 0, 0, 1)])
    result = render(FixedIrModel(taps), tmp_path / "src.wav", traj, tmp_path / "out.wav", RenderConfig(frame_size=50))
    data, rate = read_wav(tmp_path / "out.wav")
    assert rate == RATE
    assert data.shape == (215, 2)
    mono = source.astype(np.float32).astype(np.float64).mean(axis=1)
    np.testing.assert_allclose(data[:, 0], np.convolve(mono, taps[0]), atol=1e-5)
    assert result.to_dict()["num_samples"] == 215


def test_frame_budget():
    """Test the real-time budget of a frame."""
    result = RenderResult(np.zeros((2, 10)), 48000, 512, [0.001, 0.002])
    assert result.frame_budget_ms == pytest.approx(512 / 48.0)
    assert result.to_dict()["timing"]["count"] == 2
