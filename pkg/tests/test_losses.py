"""Tests for the training losses."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import fft as sfft

from irfield.config import SpectralLossConfig
from irfield.dsp import SourceConvolver
from irfield.exceptions import DimensionMismatchError, InvalidSignalError
from irfield.losses import (
    convolution_l2_loss,
    frame_count,
    l2_loss,
    loss_grad_check,
    noise_robust_loss,
    residual_spectral_loss,
)


def _single_frame_cfg(length: int) -> SpectralLossConfig:
    n = length + length % 2
    return SpectralLossConfig(fft_len=n, frame_len=n, hop=n)


def test_l2_loss_value_and_gradient():
    """Test l2 loss and its gradient."""
    loss, grad = l2_loss(np.array([1.0, 2.0]), np.array([0.0, 4.0]))
    assert loss == 5.0
    np.testing.assert_allclose(grad, [-2.0, 4.0])
    with pytest.raises(DimensionMismatchError):
        l2_loss(np.ones(3), np.ones(4))


def test_frame_count():
    """Test framing covers the residual."""
    cfg = SpectralLossConfig(fft_len=32, frame_len=16, hop=8)
    assert frame_count(10, cfg) == 1
    assert frame_count(16, cfg) == 1
    assert frame_count(17, cfg) == 2
    assert frame_count(40, cfg) == 4


@settings(max_examples=100, deadline=None)
@given(st.integers(min_value=0, max_value=2**32 - 1), st.integers(min_value=2, max_value=60))
def test_zero_noise_single_frame_equals_residual_energy(seed, length):
    """Test the spectral loss with zero noise is the time-domain residual energy."""
    r = np.random.default_rng(seed).standard_normal(length)
    cfg = _single_frame_cfg(length)
    loss, _, _ = residual_spectral_loss(r, np.zeros(cfg.num_bins), cfg)
    assert loss == pytest.approx(float(np.dot(r, r)), rel=1e-9)


def test_zero_noise_matches_l2_of_convolution(rng):
    """Test noise_robust_loss with A = 0 equals the waveform l2 loss."""
    s = rng.standard_normal(30)
    h = rng.standard_normal(6)
    y_hat = rng.standard_normal(35)
    cfg = _single_frame_cfg(35)
    robust, grad_robust, _ = noise_robust_loss(y_hat, s, h, np.zeros(cfg.num_bins), cfg)
    l2, grad_l2 = convolution_l2_loss(y_hat, s, h)
    assert robust == pytest.approx(l2, rel=1e-9)
    np.testing.assert_allclose(grad_robust, grad_l2, rtol=1e-7, atol=1e-9)


@pytest.mark.parametrize("seed", range(20))
def test_phase_rotation_invariance(seed):
    """Test random per-bin phase rotations of the residual leave the loss unchanged."""
    rng = np.random.default_rng(seed)
    n = 48
    cfg = SpectralLossConfig(fft_len=n, frame_len=n, hop=n)
    r = rng.standard_normal(n)
    spec = sfft.rfft(r)
    phases = np.exp(1j * rng.uniform(0, 2 * np.pi, spec.size))
    phases[0] = 1.0
    phases[-1] = 1.0
    rotated = sfft.irfft(spec * phases, n=n)
    amp = rng.uniform(0.0, 1.0, cfg.num_bins)
    a, _, _ = residual_spectral_loss(r, amp, cfg)
    b, _, _ = residual_spectral_loss(rotated, amp, cfg)
    assert b == pytest.approx(a, rel=1e-9)


def test_matching_noise_magnitude_gives_zero_loss(rng):
    """Test a residual whose magnitude equals sqrt(M) * A has zero loss."""
    n = 32
    cfg = SpectralLossConfig(fft_len=n, frame_len=n, hop=n)
    r = rng.standard_normal(n)
    amp = np.abs(sfft.rfft(r)) / np.sqrt(n)
    loss, grad_r, grad_amp = residual_spectral_loss(r, amp, cfg)
    assert loss == pytest.approx(0.0, abs=1e-20)
    np.testing.assert_allclose(grad_r, 0.0, atol=1e-12)
    np.testing.assert_allclose(grad_amp, 0.0, atol=1e-12)


def test_multichannel_loss_sums_channels(rng):
    """Test channel losses add up."""
    cfg = SpectralLossConfig(fft_len=16, frame_len=8, hop=4)
    r = rng.standard_normal((2, 20))
    amp = rng.uniform(0, 1, cfg.num_bins)
    total, grad, grad_amp = residual_spectral_loss(r, amp, cfg)
    parts = [residual_spectral_loss(r[c], amp, cfg) for c in range(2)]
    assert total == pytest.approx(parts[0][0] + parts[1][0])
    np.testing.assert_allclose(grad[1], parts[1][1])
    np.testing.assert_allclose(grad_amp, parts[0][2] + parts[1][2])


def test_silent_residual_has_zero_subgradient():
    """Test an all-zero residual gives a zero residual gradient and finite values."""
    cfg = SpectralLossConfig(fft_len=16, frame_len=16, hop=16)
    loss, grad_r, grad_amp = residual_spectral_loss(np.zeros(16), np.full(cfg.num_bins, 0.5), cfg)
    assert np.isfinite(loss)
    np.testing.assert_array_equal(grad_r, 0.0)
    assert np.all(np.isfinite(grad_amp))


def test_loss_input_validation():
    """Test bin count, length and finiteness checks."""
    cfg = SpectralLossConfig(fft_len=16, frame_len=16, hop=16)
    with pytest.raises(DimensionMismatchError):
        residual_spectral_loss(np.ones(8), np.zeros(5), cfg)
    with pytest.raises(InvalidSignalError):
        residual_spectral_loss(np.array([1.0, np.nan]), np.zeros(9), cfg)
    with pytest.raises(DimensionMismatchError):
        noise_robust_loss(np.ones(10), np.ones(8), np.ones(4), np.zeros(9), cfg)


def test_shared_convolver_gives_same_result(rng):
    """Test a precomputed SourceConvolver changes nothing."""
    s = rng.standard_normal(40)
    h = rng.standard_normal((2, 5))
    y_hat = rng.standard_normal((2, 44))
    cfg = SpectralLossConfig(fft_len=32, frame_len=16, hop=8)
    amp = rng.uniform(0, 1, cfg.num_bins)
    a = noise_robust_loss(y_hat, s, h, amp, cfg)
    b = noise_robust_loss(y_hat, s, h, amp, cfg, SourceConvolver(s, 5))
    assert a[0] == pytest.approx(b[0])
    np.testing.assert_allclose(a[1], b[1])


@pytest.mark.parametrize("seed", range(50))
def test_gradient_check_framed(seed):
    """Test analytic gradients of the framed loss on random small instances."""
    report = loss_grad_check(seed=seed, num_taps=4 + seed % 13)
    assert report.passed(1e-4), report.to_dict()


@pytest.mark.parametrize("window", ["rectangular", "hann"])
def test_gradient_check_windows(window):
    """Test gradients with both windows and overlapping frames."""
    cfg = SpectralLossConfig(fft_len=32, frame_len=16, hop=4, window=window)
    assert loss_grad_check(cfg=cfg, seed=7).passed(1e-4)


def test_gradient_check_zero_noise():
    """Test gradients with A = 0."""
    assert loss_grad_check(seed=3, zero_noise=True).passed(1e-4)


def test_gradient_check_flags_zero_bin():
    """Test a residual with an exactly zero bin is flagged and still passes."""
    report = loss_grad_check(seed=11, num_taps=6, signal_len=27, zero_bin=3)
    assert 3 in report.flagged_bins
    assert report.passed(1e-4)
