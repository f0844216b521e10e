"""Training loop for the IR-MLP and SDR evaluation."""

import csv
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Protocol, Sequence, Tuple, Union

import numpy as np

from irfield.config import NoiseSpec, TrainConfig
from irfield.dsp import SourceConvolver, sdr_db
from irfield.exceptions import GridError, TrainingDivergedError
from irfield.losses import convolution_l2_loss, noise_robust_loss
from irfield.neural_field import (
    AdamState,
    FieldModel,
    MlpParams,
    adam_step,
    adam_update,
    backward,
    forward_with_cache,
    init_params,
)
from irfield.noise_model import make_noise_model
from irfield.synthetic import make_target
from irfield.types import ImpulseResponse, MeasuredIrSet, Signal
from irfield.utils import derive_seed, make_rng, ordered_sum, timing_stats

logger = logging.getLogger(__name__)


class IrPredictor(Protocol):
    """Anything that maps a position to an impulse response."""

    def predict_ir(self, position: Sequence[float]) -> ImpulseResponse:
        ...


# ==================== Reports ====================


@dataclass
class TrainingLog:
    """Loss curve and periodic evaluations."""

    steps: List[int] = field(default_factory=list)
    losses: List[float] = field(default_factory=list)
    eval_sdr_db: Dict[int, float] = field(default_factory=dict)
    step_times_s: List[float] = field(default_factory=list)

    def record(self, step: int, loss: float, duration_s: float) -> None:
        """Append one step."""
        self.steps.append(step)
        self.losses.append(loss)
        self.step_times_s.append(duration_s)

    @property
    def final_loss(self) -> Optional[float]:
        """Get last recorded loss."""
        return self.losses[-1] if self.losses else None

    def write_csv(self, path: Union[str, Path]) -> None:
        """Write step, loss, eval_sdr_db rows (eval column empty when not evaluated)."""
        with Path(path).open("w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["step", "loss", "eval_sdr_db"])
            for step, loss in zip(self.steps, self.losses):
                sdr = self.eval_sdr_db.get(step)
                writer.writerow([step, repr(loss), "" if sdr is None else repr(sdr)])

    def to_dict(self) -> Dict[str, Any]:
        """Convert to dictionary (timing kept separate)."""
        return {
            "steps": len(self.steps),
            "final_loss": self.final_loss,
            "eval_sdr_db": {str(k): v for k, v in self.eval_sdr_db.items()},
            "timing": timing_stats(self.step_times_s),
        }


@dataclass
class EvalReport:
    """Per-position SDR of predicted against reference filters."""

    indices: List[int]
    sdr_db: List[float]
    channel_sdr_db: List[List[float]]
    config: Dict[str, Any] = field(default_factory=dict)
    timing: Dict[str, Any] = field(default_factory=dict)

    @property
    def mean_sdr_db(self) -> float:
        """Get arithmetic mean over positions."""
        return float(np.mean(self.sdr_db)) if self.sdr_db else float("nan")

    @property
    def median_sdr_db(self) -> float:
        """Get median over positions."""
        return float(np.median(self.sdr_db)) if self.sdr_db else float("nan")

    @property
    def std_sdr_db(self) -> float:
        """Get standard deviation over positions."""
        return float(np.std(self.sdr_db)) if self.sdr_db else float("nan")

    def to_dict(self) -> Dict[str, Any]:
        """Convert to dictionary."""
        return {
            "mean_sdr_db": self.mean_sdr_db,
            "median_sdr_db": self.median_sdr_db,
            "std_sdr_db": self.std_sdr_db,
            "indices": list(self.indices),
            "sdr_db": list(self.sdr_db),
            "channel_sdr_db": [list(c) for c in self.channel_sdr_db],
            "config": dict(self.config),
            "timing": dict(self.timing),
        }


def position_sdr(truth: ImpulseResponse, estimate: ImpulseResponse) -> Tuple[float, List[float]]:
    """Per-channel SDR and their mean in dB."""
    per_channel = [sdr_db(truth.channel(c), estimate.channel(c)) for c in range(truth.channels)]
    return float(np.mean(per_channel)), per_channel


def eval_sdr(
    model: IrPredictor,
    truth: MeasuredIrSet,
    indices: Optional[Sequence[int]] = None,
    workers: int = 1,
    config: Optional[Dict[str, Any]] = None,
) -> EvalReport:
    """
    Compare predicted filters with stored ones.

    Args:
        model: FieldModel or any predictor
        truth: Reference filters
        indices: Entries to evaluate (all by default)
        workers: Threads used across positions
        config: Echoed into the report

    Returns:
        EvalReport; SDR per position is the mean of per-channel SDRs in dB

    Raises:
        GridError: If an index is outside the set
    """
    chosen = list(range(len(truth))) if indices is None else [int(i) for i in indices]
    if any(i < 0 or i >= len(truth) for i in chosen):
        raise GridError("Evaluation indices must address entries of the reference set")

    def one(i: int) -> Tuple[float, List[float], float]:
        start = time.perf_counter()
        estimate = model.predict_ir(truth[i].position)
        elapsed = time.perf_counter() - start
        mean, per_channel = position_sdr(truth[i], estimate)
        return mean, per_channel, elapsed

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(one, chosen))
    else:
        results = [one(i) for i in chosen]
    return EvalReport(
        indices=chosen,
        sdr_db=[r[0] for r in results],
        channel_sdr_db=[r[1] for r in results],
        config=dict(config or {}),
        timing=timing_stats(r[2] for r in results),
    )


# ==================== Training ====================


def build_targets(
    field_set: MeasuredIrSet, sweep: Signal, noise: Optional[NoiseSpec] = None
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Observations for every entry of a field.

    Returns:
        (targets of shape (n, C, L), injected noise of the same shape)
    """
    pairs = [make_target(sweep, ir, noise, ir.position) for ir in field_set.entries]
    return np.stack([p[0] for p in pairs]), np.stack([p[1] for p in pairs])


class Trainer:
    """
    Owns the IR-MLP, the optional noise model and both optimizer states.

    Gradients of a batch are computed per position (optionally on worker
    threads) and reduced in a fixed order, so results do not depend on the
    number of workers.
    """

    def __init__(
        self,
        field_set: MeasuredIrSet,
        sweep: Signal,
        targets: np.ndarray,
        cfg: Optional[TrainConfig] = None,
        eval_set: Optional[MeasuredIrSet] = None,
    ):
        """
        Initialize trainer.

        Args:
            field_set: Training positions (and their true filters, used for evaluation)
            sweep: Excitation used to produce the targets
            targets: Observations, shape (n, C, len(sweep) + T - 1)
            cfg: Training config
            eval_set: Reference filters for periodic evaluation (field_set by default)

        Raises:
            GridError: If the field is empty or targets do not match it
        """
        if len(field_set) == 0:
            raise GridError("Cannot train on an empty field")
        self.cfg = cfg or TrainConfig()
        self.field_set = field_set
        self.eval_set = eval_set or field_set
        self.sweep = sweep
        self.targets = np.asarray(targets, dtype=np.float64)
        channels, num_taps = field_set.channels, field_set.num_taps
        expected = (len(field_set), channels, len(sweep) + num_taps - 1)
        if self.targets.shape != expected:
            raise GridError(f"Targets have shape {self.targets.shape}, expected {expected}")

        dims = self.cfg.network.layer_dims(self.cfg.encoder.output_dim, channels)
        params = init_params(dims, derive_seed(self.cfg.seed, 1), self.cfg.network.slope)
        noise_model = make_noise_model(
            self.cfg.noise_model_kind,
            self.cfg.loss.num_bins,
            network=self.cfg.noise_network,
            num_octaves=self.cfg.encoder.num_octaves,
            seed=derive_seed(self.cfg.seed, 2),
        )
        self.model = FieldModel(
            params,
            self.cfg.encoder,
            num_taps,
            FieldModel.box_from_positions(field_set.positions),
            noise_model,
        )
        self.adam = AdamState.for_params(params, self.cfg.learning_rate)
        self.noise_adam = (
            AdamState.for_arrays(noise_model.arrays(), self.cfg.noise_learning_rate)
            if noise_model is not None
            else None
        )
        self.convolver = SourceConvolver(sweep.samples, num_taps)
        self.log = TrainingLog()
        self.step_count = 0
        self._rng = make_rng(self.cfg.seed, 3)
        self._features: Dict[int, np.ndarray] = {}
        self._norm_positions = [self.model.normalize_position(p) for p in field_set.positions]

    def _features_for(self, index: int) -> np.ndarray:
        feats = self._features.get(index)
        if feats is None:
            feats = self.model.features(self.field_set[index].position)
            self._features[index] = feats
        return feats

    def position_gradients(self, index: int) -> Tuple[float, List[np.ndarray], List[np.ndarray]]:
        """
        Loss and gradients for one training position.

        Returns:
            (loss, IR-MLP gradient arrays, noise-model gradient arrays)
        """
        params = self.model.params
        feats = self._features_for(index)
        out, cache = forward_with_cache(params, feats)
        taps = out.T
        target = self.targets[index]
        noise_grads: List[np.ndarray] = []
        if self.cfg.loss_kind == "noise_robust":
            noise_model = self.model.noise_model
            position = self._norm_positions[index]
            amp = noise_model.amplitude(position)
            loss, grad_h, grad_amp = noise_robust_loss(
                target, self.sweep, taps, amp, self.cfg.loss, self.convolver
            )
            noise_grads = noise_model.grads(position, grad_amp)
        else:
            loss, grad_h = convolution_l2_loss(target, self.sweep, taps, self.convolver)
        param_grads, _ = backward(params, feats, grad_h.T, cache)
        return loss, param_grads.arrays(), noise_grads

    def step(self) -> float:
        """
        One optimizer step on a random batch of positions.

        Returns:
            Mean batch loss

        Raises:
            TrainingDivergedError: If the loss is not finite
        """
        start = time.perf_counter()
        step = self.step_count
        n = len(self.field_set)
        batch = self._rng.choice(n, size=min(self.cfg.positions_per_batch, n), replace=False)
        if self.cfg.workers > 1:
            with ThreadPoolExecutor(max_workers=self.cfg.workers) as pool:
                results = list(pool.map(self.position_gradients, batch.tolist()))
        else:
            results = [self.position_gradients(int(i)) for i in batch]

        loss = float(np.mean([r[0] for r in results]))
        if not np.isfinite(loss):
            logger.error(f"Training diverged at step {step}")
            raise TrainingDivergedError(f"Non-finite loss at step {step}", step=step)
        scale = 1.0 / len(results)
        grads = [g * scale for g in ordered_sum([r[1] for r in results])]

        lr = self.cfg.learning_rate_at(step)
        params_grads = MlpParams.from_arrays(grads, slope=self.model.params.slope)
        self.adam, self.model.params = adam_step(self.adam, self.model.params, params_grads, lr)
        if self.cfg.loss_kind == "noise_robust" and self.noise_adam is not None:
            noise_grads = [g * scale for g in ordered_sum([r[2] for r in results])]
            noise_lr = self.cfg.noise_learning_rate * lr / self.cfg.learning_rate
            noise_model = self.model.noise_model
            self.noise_adam, arrays = adam_update(self.noise_adam, noise_model.arrays(), noise_grads, noise_lr)
            self.model.noise_model = noise_model.with_arrays(arrays)

        self.step_count += 1
        self.log.record(step, loss, time.perf_counter() - start)
        logger.debug(f"Step {step}: loss={loss:.6e} lr={lr:.3e}")
        if self.cfg.eval_every and (self.step_count % self.cfg.eval_every == 0):
            report = eval_sdr(self.model, self.eval_set, workers=self.cfg.workers)
            self.log.eval_sdr_db[step] = report.mean_sdr_db
            logger.info(f"Step {step}: loss={loss:.4e}, eval SDR {report.mean_sdr_db:.2f} dB")
        return loss

    def run(self) -> Tuple[FieldModel, TrainingLog]:
        """Run all configured steps."""
        logger.info(
            f"Training {self.cfg.steps} steps on {len(self.field_set)} positions "
            f"(loss={self.cfg.loss_kind}, noise model={self.cfg.noise_model_kind})"
        )
        while self.step_count < self.cfg.steps:
            self.step()
        logger.info(f"Training finished: final loss {self.log.final_loss}")
        return self.model, self.log


def train(
    field_set: MeasuredIrSet,
    sweep: Signal,
    noise: Optional[NoiseSpec] = None,
    cfg: Optional[TrainConfig] = None,
    targets: Optional[np.ndarray] = None,
    eval_set: Optional[MeasuredIrSet] = None,
) -> Tuple[FieldModel, TrainingLog]:
    """
    Fit an IR-MLP (and a noise model for the noise-robust loss) to sweep observations.

    Args:
        field_set: Training positions with their true filters
        sweep: Excitation
        noise: Noise injected into generated targets (None for clean)
        cfg: Training config
        targets: Precomputed observations (generated from field_set when omitted)
        eval_set: Reference filters for periodic evaluation

    Returns:
        (trained FieldModel carrying its noise model, training log)
    """
    if targets is None:
        targets, _ = build_targets(field_set, sweep, noise)
    return Trainer(field_set, sweep, targets, cfg, eval_set).run()
