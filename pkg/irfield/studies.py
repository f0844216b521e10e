"""Experiment harness: noise sweep and interpolation studies."""

import csv
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from irfield.baselines import bilinear_ir, nearest_neighbor_ir, nlms_estimate, wiener_estimate
from irfield.config import (
    InterpStudyConfig,
    NlmsConfig,
    NoiseSpec,
    NoiseStudyConfig,
    TrainConfig,
    WienerConfig,
)
from irfield.dsp import log_sine_sweep, white_noise
from irfield.exceptions import ConfigError, GridError
from irfield.neural_field import FieldModel
from irfield.synthetic import make_filter_field, true_noise_amplitude
from irfield.trainer import build_targets, eval_sdr, position_sdr, train
from irfield.types import GridMetadata, ImpulseResponse, MeasuredIrSet, Signal
from irfield.utils import derive_seed, log_duration, make_rng

logger = logging.getLogger(__name__)

NOISE_STUDY_COLUMNS = ["snr_db", "method", "mean_sdr_db", "std_sdr_db"]
INTERP_STUDY_COLUMNS = ["train_count", "method", "mean_sdr_db", "std_sdr_db"]


@dataclass
class StudyTable:
    """Rows of a study plus auxiliary metrics."""

    columns: List[str]
    rows: List[Dict[str, Any]] = field(default_factory=list)
    extras: Dict[str, Any] = field(default_factory=dict)

    def add(self, **values: Any) -> None:
        """Append one row."""
        self.rows.append(values)

    def column(self, name: str) -> List[Any]:
        """Get one column."""
        return [r[name] for r in self.rows]

    def lookup(self, key: str, value: Any, method: str) -> Dict[str, Any]:
        """Find the row for (key == value, method)."""
        for row in self.rows:
            if row[key] == value and row["method"] == method:
                return row
        raise KeyError(f"No row with {key}={value}, method={method}")

    def write_csv(self, path: Union[str, Path]) -> None:
        """Write the table with a header row."""
        with Path(path).open("w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(self.columns)
            for row in self.rows:
                writer.writerow([_cell(row[c]) for c in self.columns])

    def to_dict(self) -> Dict[str, Any]:
        """Convert to dictionary."""
        return {"columns": list(self.columns), "rows": [dict(r) for r in self.rows], "extras": dict(self.extras)}


def _cell(value: Any) -> str:
    return repr(float(value)) if isinstance(value, (float, np.floating)) else str(value)


def _summary(sdrs: Sequence[float]) -> Tuple[float, float]:
    return float(np.mean(sdrs)), float(np.std(sdrs))


def cosine_similarity(a: np.ndarray, b: np.ndarray) -> float:
    """Cosine of the angle between two vectors."""
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0 or nb == 0:
        return 0.0
    return float(np.dot(a, b) / (na * nb))


# ==================== Noise sweep ====================


def _noise_model_kind(study: NoiseStudyConfig) -> str:
    if study.train.noise_model_kind != "none":
        return study.train.noise_model_kind
    return "static" if study.noise_kind == "independent" else "positional"


def _per_channel_estimates(
    ir_set: MeasuredIrSet,
    targets: np.ndarray,
    estimator: Callable[[np.ndarray], np.ndarray],
) -> List[float]:
    sdrs = []
    for k, truth in enumerate(ir_set.entries):
        taps = np.stack([estimator(targets[k, c]) for c in range(truth.channels)])
        sdrs.append(position_sdr(truth, ImpulseResponse(taps=taps, position=truth.position))[0])
    return sdrs


def baseline_sdr(
    method: str,
    ir_set: MeasuredIrSet,
    sweep: Signal,
    noise: Optional[NoiseSpec] = None,
    seed: int = 0,
    nlms_cfg: Optional[NlmsConfig] = None,
    wiener_cfg: Optional[WienerConfig] = None,
) -> List[float]:
    """
    Per-position SDR of a classical estimator, channel by channel.

    Wiener deconvolves the sweep observations; NLMS identifies each filter
    from white-noise excitation of the sweep's length with noise at the same
    SNR. The NLMS filter length defaults to the field's tap count.

    Args:
        method: "wiener" or "nlms"
        ir_set: True filters
        sweep: Sweep excitation (sets length and sample rate for NLMS too)
        noise: Injected noise (None for clean observations)
        seed: Seed of the white-noise excitation
        nlms_cfg: NLMS settings
        wiener_cfg: Wiener settings

    Returns:
        SDR per position in dB
    """
    if method == "wiener":
        targets, _ = build_targets(ir_set, sweep, noise)
        return _per_channel_estimates(
            ir_set, targets, lambda y: wiener_estimate(sweep, y, ir_set.num_taps, cfg=wiener_cfg)
        )
    if method != "nlms":
        raise ConfigError(f"Unknown baseline {method!r}")
    cfg = nlms_cfg or NlmsConfig(filter_len=ir_set.num_taps)
    excitation = white_noise(len(sweep), make_rng(seed), sweep.sample_rate_hz)
    targets, _ = build_targets(ir_set, excitation, noise)
    return _per_channel_estimates(
        ir_set, targets[:, :, : len(excitation)], lambda y: nlms_estimate(excitation, y, cfg)
    )


def _learned_noise_similarity(model: FieldModel, spec: NoiseSpec, ir_set: MeasuredIrSet) -> float:
    sims = []
    for ir in ir_set.entries:
        learned = model.noise_model.amplitude(model.normalize_position(ir.position))
        sims.append(cosine_similarity(learned, true_noise_amplitude(spec, ir.position, ir.channels)))
    return float(np.mean(sims))


@log_duration("Noise sweep study")
def noise_sweep_study(study: Optional[NoiseStudyConfig] = None, workers: int = 1) -> StudyTable:
    """
    Mean SDR of every method at every SNR on a synthetic field.

    Sweep-based methods (wiener, mlp_l2, mlp_noise_robust) share one set of
    noisy sweep observations per SNR; nlms gets white-noise excitation with
    noise at the same SNR.

    Args:
        study: Study config
        workers: Threads across (snr, method) cells

    Returns:
        StudyTable with one row per (snr, method) in input order
    """
    study = study or NoiseStudyConfig()
    ir_set = make_filter_field(study.field_spec)
    sweep = log_sine_sweep(study.sweep.f0_hz, study.sweep.f1_hz, study.sweep.duration_s, study.sweep.sample_rate_hz)
    nlms_cfg = study.nlms.model_copy(update={"filter_len": ir_set.num_taps})
    table = StudyTable(columns=list(NOISE_STUDY_COLUMNS))
    similarities: Dict[str, float] = {}

    def noise_spec(k: int, snr: float) -> NoiseSpec:
        return NoiseSpec(
            kind=study.noise_kind,
            target_snr_db=snr,
            fft_len=study.train.loss.fft_len,
            sample_rate_hz=study.sweep.sample_rate_hz,
            seed=derive_seed(study.seed, 11, k),
        )

    def run_cell(k: int, snr: float, method: str) -> List[float]:
        spec = noise_spec(k, snr)
        if method in ("wiener", "nlms"):
            return baseline_sdr(
                method, ir_set, sweep, spec, derive_seed(study.seed, 12, k), nlms_cfg, study.wiener
            )
        targets, _ = build_targets(ir_set, sweep, spec)
        if method == "mlp_l2":
            cfg = study.train.model_copy(update={"loss_kind": "l2", "noise_model_kind": "none"})
        else:
            cfg = study.train.model_copy(
                update={"loss_kind": "noise_robust", "noise_model_kind": _noise_model_kind(study)}
            )
        model, _ = train(ir_set, sweep, spec, TrainConfig(**cfg.model_dump()), targets=targets)
        if method == "mlp_noise_robust":
            similarities[repr(float(snr))] = _learned_noise_similarity(model, spec, ir_set)
        return eval_sdr(model, ir_set).sdr_db

    cells = [(k, snr, method) for k, snr in enumerate(study.snr_list) for method in study.methods]
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(lambda c: run_cell(*c), cells))
    else:
        results = [run_cell(*c) for c in cells]
    for (_, snr, method), sdrs in zip(cells, results):
        mean, std = _summary(sdrs)
        table.add(snr_db=float(snr), method=method, mean_sdr_db=mean, std_sdr_db=std)
        logger.info(f"Noise study: snr={snr} dB, {method}: {mean:.2f} dB")
    table.extras["noise_cosine_similarity"] = similarities
    return table


# ==================== Interpolation ====================


def select_training_subset(ir_set: MeasuredIrSet, count: int, seed: int = 0) -> Tuple[List[int], GridMetadata]:
    """
    Coarser sub-grid of about `count` nodes.

    Elevation rings are evenly spaced and include both extremes; azimuths
    are evenly spaced from a seeded offset. The row/column split closest to
    the count (ties broken by the grid's aspect ratio) is used.

    Returns:
        (entry indices in sub-grid order, sub-grid metadata indexing those entries)

    Raises:
        GridError: If the set has no grid or count exceeds its size
    """
    grid = ir_set.grid
    if grid is None:
        raise GridError("Training-subset selection needs grid metadata")
    n_el, n_az = grid.shape
    if count > n_el * n_az:
        raise GridError(f"Training count {count} exceeds {n_el * n_az} available nodes")
    if count == n_el * n_az:
        return list(range(len(ir_set))), grid

    aspect = n_el / n_az
    best: Optional[Tuple[float, float, int, int]] = None
    for rows in range(2, n_el + 1):
        cols = int(np.clip(round(count / rows), 2, n_az))
        key = (abs(rows * cols - count), abs(rows / cols - aspect), rows, cols)
        if best is None or key < best:
            best = key
    assert best is not None
    rows, cols = best[2], best[3]

    row_idx = np.unique(np.round(np.linspace(0, n_el - 1, rows)).astype(int))
    offset = int(make_rng(seed, 21).integers(n_az))
    col_idx = np.unique((offset + np.round(np.arange(cols) * n_az / cols).astype(int)) % n_az)

    indices = []
    node_index = np.zeros((row_idx.size, col_idx.size), dtype=np.int64)
    for a, j in enumerate(row_idx):
        for b, i in enumerate(col_idx):
            node_index[a, b] = len(indices)
            indices.append(int(grid.node_index[j, i]))
    sub_grid = GridMetadata(
        azimuths_deg=grid.azimuths_deg[col_idx],
        elevations_deg=grid.elevations_deg[row_idx],
        node_index=node_index,
    )
    return indices, sub_grid


def _node_angles(grid: GridMetadata) -> Dict[int, Tuple[float, float]]:
    angles = {}
    for j, el in enumerate(grid.elevations_deg):
        for i, az in enumerate(grid.azimuths_deg):
            angles[int(grid.node_index[j, i])] = (float(az), float(el))
    return angles


@log_duration("Interpolation study")
def interpolation_study(study: Optional[InterpStudyConfig] = None, workers: int = 1) -> StudyTable:
    """
    Held-out SDR of each interpolation method per training-set size.

    Args:
        study: Study config
        workers: Threads across (count, method) cells

    Returns:
        StudyTable; train_count is the realized sub-grid size
    """
    study = study or InterpStudyConfig()
    ir_set = make_filter_field(study.field_spec)
    if ir_set.grid is None:
        raise GridError("Synthetic field lacks grid metadata")
    sweep = log_sine_sweep(study.sweep.f0_hz, study.sweep.f1_hz, study.sweep.duration_s, study.sweep.sample_rate_hz)
    angles = _node_angles(ir_set.grid)
    table = StudyTable(columns=list(INTERP_STUDY_COLUMNS))

    def run_cell(count: int, method: str) -> Tuple[int, List[float]]:
        train_idx, sub_grid = select_training_subset(ir_set, count, study.seed)
        train_set = ir_set.subset(train_idx, sub_grid)
        chosen = set(train_idx)
        held_out = [i for i in range(len(ir_set)) if i not in chosen] or list(train_idx)
        model = train(train_set, sweep, None, study.train)[0] if method == "mlp" else None

        def predict(i: int) -> ImpulseResponse:
            if method == "nn":
                return nearest_neighbor_ir(train_set, ir_set[i].position)
            if method == "bilinear":
                return bilinear_ir(train_set, *angles[i])
            return model.predict_ir(ir_set[i].position)

        return len(train_idx), [position_sdr(ir_set[i], predict(i))[0] for i in held_out]

    cells = [(count, method) for count in study.train_counts for method in study.methods]
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(lambda c: run_cell(*c), cells))
    else:
        results = [run_cell(*c) for c in cells]
    for (count, method), (realized, sdrs) in zip(cells, results):
        mean, std = _summary(sdrs)
        table.add(train_count=realized, method=method, mean_sdr_db=mean, std_sdr_db=std)
        logger.info(f"Interpolation study: {realized} nodes (requested {count}), {method}: {mean:.2f} dB")
    return table
