"""Desk-scale training, study and latency checks (run with --runslow)."""

import numpy as np
import pytest

from irfield.baselines import nlms_estimate, wiener_estimate
from irfield.config import (
    EncoderConfig,
    FilterFieldSpec,
    InterpStudyConfig,
    MlpConfig,
    NlmsConfig,
    NoiseSpec,
    NoiseStudyConfig,
    RenderConfig,
    SweepConfig,
    TrainConfig,
)
from irfield.dsp import fft_convolve, log_sine_sweep, sdr_db
from irfield.model_io import compression_report, decode_model, encode_model
from irfield.neural_field import FieldModel, init_params
from irfield.renderer import render_array
from irfield.studies import baseline_sdr, interpolation_study, noise_sweep_study
from irfield.synthetic import make_filter_field
from irfield.trainer import eval_sdr, train
from irfield.utils import time_calls, timing_stats

pytestmark = pytest.mark.slow

FIELD_16 = FilterFieldSpec(n_azimuth=4, n_elevation=4, seed=11)
SWEEP = SweepConfig(duration_s=0.25)


def _desk_train(**overrides):
    values = {
        "steps": 6000,
        "positions_per_batch": 4,
        "learning_rate": 1e-3,
        "lr_schedule": "exponential",
        "lr_final_ratio": 0.1,
        "seed": 3,
    }
    values.update(overrides)
    return TrainConfig(**values)


def _sweep():
    return log_sine_sweep(SWEEP.f0_hz, SWEEP.f1_hz, SWEEP.duration_s, SWEEP.sample_rate_hz)


def test_clean_fit_quality():
    """Test a 6 x 128 network fits a clean 16-node field to 20 dB."""
    ir_set = make_filter_field(FIELD_16)
    model, log = train(ir_set, _sweep(), cfg=_desk_train())
    assert np.mean(log.losses[len(log.losses) // 2 - 50 : len(log.losses) // 2 + 50]) <= log.losses[0]
    assert eval_sdr(model, ir_set).mean_sdr_db >= 20.0
    report = compression_report(model, (9720, 2, 400), ir_set)
    assert report.probe_sdr_db["mean"] >= 20.0
    assert decode_model(encode_model(model)).params.layer_dims == model.params.layer_dims


@pytest.mark.parametrize("noise_kind", ["independent", "dependent"])
def test_noise_robust_training_wins_at_negative_snr(noise_kind):
    """Test only the noise-robust loss keeps accurate filters at -10 dB."""
    study = NoiseStudyConfig(
        snr_list=[0.0, -10.0],
        noise_kind=noise_kind,
        field_spec=FIELD_16,
        sweep=SWEEP,
        train=_desk_train(),
        seed=5,
    )
    table = noise_sweep_study(study)
    at = {m: table.lookup("snr_db", -10.0, m)["mean_sdr_db"] for m in study.methods}
    assert at["mlp_noise_robust"] >= at["mlp_l2"] + 6.0
    assert at["mlp_noise_robust"] > at["wiener"]
    assert at["mlp_noise_robust"] > at["nlms"]
    for method in study.methods:
        assert table.lookup("snr_db", 0.0, method)["mean_sdr_db"] >= 5.0
    if noise_kind == "independent":
        assert table.extras["noise_cosine_similarity"]["-10.0"] >= 0.8


def test_near_clean_study_all_methods():
    """Test every method reaches 20 dB at a vanishing noise level."""
    study = NoiseStudyConfig(snr_list=[200.0], field_spec=FIELD_16, sweep=SWEEP, train=_desk_train(), seed=5)
    table = noise_sweep_study(study)
    assert min(table.column("mean_sdr_db")) >= 20.0


def test_interpolation_trend():
    """Test held-out quality ordering and growth with training-set size."""
    study = InterpStudyConfig(
        train_counts=[72, 120, 180, 240],
        field_spec=FilterFieldSpec(seed=2),
        sweep=SWEEP,
        train=_desk_train(steps=10000, positions_per_batch=8),
        seed=4,
    )
    table = interpolation_study(study, workers=3)
    densest = max(table.column("train_count"))
    assert densest >= 0.75 * 288
    top = {m: table.lookup("train_count", densest, m)["mean_sdr_db"] for m in study.methods}
    assert top["mlp"] > top["bilinear"] > top["nn"]
    for method in study.methods:
        rows = [r for r in table.rows if r["method"] == method]
        sdrs = [r["mean_sdr_db"] for r in sorted(rows, key=lambda r: r["train_count"])]
        assert all(b >= a - 1.0 for a, b in zip(sdrs, sdrs[1:]))


def test_wiener_clean_sweep_instances():
    """Test Wiener deconvolution of clean sweep observations over random filters."""
    sweep = log_sine_sweep(20.0, 20000.0, 1.0, 48000)
    rng = np.random.default_rng(8)
    for _ in range(20):
        h = rng.standard_normal(64) * np.exp(-np.arange(64) / 16.0)
        est = wiener_estimate(sweep, fft_convolve(sweep.samples, h), 64)
        assert sdr_db(h, est) >= 40.0


def test_nlms_clean_and_noisy():
    """Test NLMS reaches 30 dB on clean data and loses 20 dB at -10 dB SNR."""
    rng = np.random.default_rng(9)
    h = rng.standard_normal(64) * np.exp(-np.arange(64) / 16.0)
    s = rng.standard_normal(50 * 64)
    clean = fft_convolve(s, h)[: s.size]
    cfg = NlmsConfig(filter_len=64, step_size=0.5)
    clean_sdr = sdr_db(h, nlms_estimate(s, clean, cfg))
    noise = rng.standard_normal(s.size)
    noise *= np.sqrt(10.0 * np.sum(clean ** 2) / np.sum(noise ** 2))
    noisy_sdr = sdr_db(h, nlms_estimate(s, clean + noise, cfg))
    assert clean_sdr >= 30.0
    assert clean_sdr - noisy_sdr >= 20.0


@pytest.mark.parametrize("method", ["wiener", "nlms"])
def test_baselines_monotone_in_snr(method):
    """Test classical estimators degrade as the SNR drops."""
    ir_set = make_filter_field(FIELD_16)
    sweep = _sweep()
    means = []
    for k, snr in enumerate([0.0, -10.0, -20.0, -30.0]):
        noise = NoiseSpec(target_snr_db=snr, sample_rate_hz=sweep.sample_rate_hz, seed=k)
        means.append(np.mean(baseline_sdr(method, ir_set, sweep, noise, seed=k)))
    assert all(b <= a + 1.0 for a, b in zip(means, means[1:]))


def test_latency_budget():
    """Test filter generation and rendering stay within real-time budgets."""
    encoder = EncoderConfig()
    model = FieldModel(init_params(MlpConfig().layer_dims(encoder.output_dim, 2), 0), encoder, 400)
    durations, _ = time_calls(lambda: model.predict_ir((0.0, 1.0, 0.0)), calls=100, warmup=10)
    assert timing_stats(durations)["median_ms"] < 10.0

    source = np.random.default_rng(2).standard_normal(48000)
    times = np.array([0.0, 1.0])
    positions = np.array([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]])
    result = render_array(model, source, times, positions, 48000, RenderConfig(frame_size=512))
    assert timing_stats(result.frame_times_s)["median_ms"] < result.frame_budget_ms
