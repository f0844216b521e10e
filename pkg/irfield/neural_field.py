"""The IR-MLP: Fourier-feature encoding, coordinate MLP, exact gradients and Adam."""

import logging
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple, Any

import numpy as np

from irfield.config import EncoderConfig
from irfield.exceptions import (
    DimensionMismatchError,
    NonFiniteGradientError,
    ValidationError,
)
from irfield.types import ImpulseResponse
from irfield.utils import make_rng, relative_errors

logger = logging.getLogger(__name__)

DEFAULT_SLOPE = 0.01
UNIT_BOX = (-1.0, -1.0, -1.0, 1.0, 1.0, 1.0)


# ==================== Encoding ====================


def encode(p: np.ndarray, cfg: EncoderConfig) -> np.ndarray:
    """
    Fourier features of normalized coordinates.

    For each component and each octave l in 0..L-1 emits sin(2^l pi p) then
    cos(2^l pi p); components are major, octaves minor.

    Args:
        p: Coordinates, shape (input_dim,) or (n, input_dim), each in [-1, 1]
        cfg: Encoder config

    Returns:
        Features of shape (..., input_dim * 2 * L)

    Raises:
        DimensionMismatchError: If the last axis is not input_dim
        ValidationError: If a component lies outside [-1, 1]
    """
    coords = np.asarray(p, dtype=np.float64)
    if coords.shape[-1] != cfg.input_dim:
        raise DimensionMismatchError(
            f"Encoder expects {cfg.input_dim} components, got {coords.shape[-1]}",
            expected=cfg.input_dim,
            actual=coords.shape[-1],
        )
    if np.any(np.abs(coords) > 1.0 + 1e-9):
        raise ValidationError("Coordinates must be normalized to [-1, 1]")
    freqs = (2.0 ** np.arange(cfg.num_octaves)) * np.pi
    args = coords[..., :, np.newaxis] * freqs
    feats = np.stack([np.sin(args), np.cos(args)], axis=-1)
    return feats.reshape(coords.shape[:-1] + (cfg.output_dim,))


def tap_coordinates(num_taps: int) -> np.ndarray:
    """Tap indices 0..T-1 mapped to [-1, 1]."""
    if num_taps < 1:
        raise ValidationError(f"num_taps must be >= 1, got {num_taps}")
    if num_taps == 1:
        return np.zeros(1)
    return -1.0 + 2.0 * np.arange(num_taps, dtype=np.float64) / (num_taps - 1)


def position_features(position: Sequence[float], num_taps: int, cfg: EncoderConfig) -> np.ndarray:
    """Encoded (x, y, z, t_i) rows for every tap of one normalized position."""
    pos = np.asarray(position, dtype=np.float64).reshape(-1)
    t = tap_coordinates(num_taps)
    coords = np.column_stack([np.broadcast_to(pos, (num_taps, pos.size)), t])
    return encode(coords, cfg)


# ==================== Parameters ====================


@dataclass
class MlpParams:
    """Weights (rows=out, cols=in) and biases of a fully connected network."""

    weights: List[np.ndarray]
    biases: List[np.ndarray]
    slope: float = DEFAULT_SLOPE

    def __post_init__(self) -> None:
        if len(self.weights) != len(self.biases) or not self.weights:
            raise DimensionMismatchError("MLP needs one bias per weight matrix and >= 1 layer")
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.ndim != 2 or b.shape != (w.shape[0],):
                raise DimensionMismatchError(f"Layer {i}: weight {w.shape} and bias {b.shape} disagree")
            if i and w.shape[1] != self.weights[i - 1].shape[0]:
                raise DimensionMismatchError(
                    f"Layer {i} expects {w.shape[1]} inputs, previous layer emits "
                    f"{self.weights[i - 1].shape[0]}"
                )

    @property
    def layer_dims(self) -> List[int]:
        """Get [d_in, h_1, ..., d_out]."""
        return [int(self.weights[0].shape[1])] + [int(w.shape[0]) for w in self.weights]

    @property
    def num_layers(self) -> int:
        """Get number of weight matrices."""
        return len(self.weights)

    def arrays(self) -> List[np.ndarray]:
        """Get parameters in storage order: W0, b0, W1, b1, ..."""
        out: List[np.ndarray] = []
        for w, b in zip(self.weights, self.biases):
            out.extend([w, b])
        return out

    @classmethod
    def from_arrays(cls, arrays: Sequence[np.ndarray], slope: float = DEFAULT_SLOPE) -> "MlpParams":
        """Rebuild from storage order."""
        return cls(weights=list(arrays[0::2]), biases=list(arrays[1::2]), slope=slope)

    def is_finite(self) -> bool:
        """Check all parameters are finite."""
        return all(np.all(np.isfinite(a)) for a in self.arrays())

    def copy(self) -> "MlpParams":
        """Deep copy."""
        return MlpParams.from_arrays([a.copy() for a in self.arrays()], slope=self.slope)

    def zeros_like(self) -> "MlpParams":
        """Zero arrays with identical shapes."""
        return MlpParams.from_arrays([np.zeros_like(a) for a in self.arrays()], slope=self.slope)


def init_params(layer_dims: Sequence[int], seed: int = 0, slope: float = DEFAULT_SLOPE) -> MlpParams:
    """
    Glorot-uniform weights, zero biases, deterministic under seed.

    Args:
        layer_dims: [d_in, h_1, ..., d_out]
        seed: Random seed
        slope: Leaky-rectifier slope of hidden layers

    Returns:
        Initialized parameters
    """
    if len(layer_dims) < 2 or min(layer_dims) < 1:
        raise DimensionMismatchError(f"Invalid layer dims {list(layer_dims)}")
    rng = make_rng(seed)
    weights, biases = [], []
    for fan_in, fan_out in zip(layer_dims[:-1], layer_dims[1:]):
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-limit, limit, size=(fan_out, fan_in)))
        biases.append(np.zeros(fan_out))
    return MlpParams(weights=weights, biases=biases, slope=slope)


def zero_params(layer_dims: Sequence[int], slope: float = DEFAULT_SLOPE) -> MlpParams:
    """All-zero network."""
    return MlpParams(
        weights=[np.zeros((o, i)) for i, o in zip(layer_dims[:-1], layer_dims[1:])],
        biases=[np.zeros(o) for o in layer_dims[1:]],
        slope=slope,
    )


def count_parameters(params: MlpParams) -> int:
    """Sum over layers of rows*cols + rows."""
    return int(sum(w.size + b.size for w, b in zip(params.weights, params.biases)))


# ==================== Forward / backward ====================


@dataclass
class ForwardCache:
    """Layer inputs and pre-activations kept for backward."""

    inputs: List[np.ndarray] = field(default_factory=list)
    pre_activations: List[np.ndarray] = field(default_factory=list)


def _leaky(z: np.ndarray, slope: float) -> np.ndarray:
    return np.where(z > 0.0, z, slope * z)


def forward_with_cache(params: MlpParams, features: np.ndarray) -> Tuple[np.ndarray, ForwardCache]:
    """
    Forward pass keeping intermediates.

    Args:
        params: Network parameters
        features: Shape (d_in,) or (n, d_in)

    Returns:
        (output with the same leading shape, cache)

    Raises:
        DimensionMismatchError: If the feature width is not d_in
    """
    x = np.asarray(features, dtype=np.float64)
    single = x.ndim == 1
    x = np.atleast_2d(x)
    d_in = params.layer_dims[0]
    if x.shape[-1] != d_in:
        raise DimensionMismatchError(
            f"Network expects {d_in} features, got {x.shape[-1]}", expected=d_in, actual=x.shape[-1]
        )
    cache = ForwardCache()
    a = x
    last = params.num_layers - 1
    for i, (w, b) in enumerate(zip(params.weights, params.biases)):
        cache.inputs.append(a)
        z = a @ w.T + b
        cache.pre_activations.append(z)
        a = z if i == last else _leaky(z, params.slope)
    return (a[0] if single else a), cache


def forward(params: MlpParams, features: np.ndarray) -> np.ndarray:
    """Affine + leaky-rectifier layers, linear output layer."""
    out, _ = forward_with_cache(params, features)
    return out


def backward(
    params: MlpParams,
    features: np.ndarray,
    upstream_grad: np.ndarray,
    cache: Optional[ForwardCache] = None,
) -> Tuple[MlpParams, np.ndarray]:
    """
    Exact reverse-mode gradients of sum(upstream_grad * forward(features)).

    Args:
        params: Network parameters
        features: Inputs used in the forward pass
        upstream_grad: dLoss/dOutput, shaped like the output
        cache: Optional cache from forward_with_cache on the same inputs

    Returns:
        (parameter gradients shaped like params, gradient wrt features)

    Raises:
        DimensionMismatchError: If shapes are inconsistent
    """
    x = np.asarray(features, dtype=np.float64)
    single = x.ndim == 1
    if cache is None:
        _, cache = forward_with_cache(params, x)
    delta = np.atleast_2d(np.asarray(upstream_grad, dtype=np.float64))
    n_rows = cache.inputs[0].shape[0]
    d_out = params.layer_dims[-1]
    if delta.shape != (n_rows, d_out):
        raise DimensionMismatchError(
            f"Upstream gradient shape {delta.shape} does not match output ({n_rows}, {d_out})"
        )
    grad_w: List[np.ndarray] = [np.empty(0)] * params.num_layers
    grad_b: List[np.ndarray] = [np.empty(0)] * params.num_layers
    for i in range(params.num_layers - 1, -1, -1):
        grad_w[i] = delta.T @ cache.inputs[i]
        grad_b[i] = delta.sum(axis=0)
        delta = delta @ params.weights[i]
        if i > 0:
            delta = delta * np.where(cache.pre_activations[i - 1] > 0.0, 1.0, params.slope)
    grads = MlpParams(weights=grad_w, biases=grad_b, slope=params.slope)
    return grads, (delta[0] if single else delta)


# ==================== Optimizer ====================


@dataclass
class AdamState:
    """Adam moments and hyperparameters."""

    first_moment: List[np.ndarray]
    second_moment: List[np.ndarray]
    step: int = 0
    learning_rate: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_arrays(cls, arrays: Sequence[np.ndarray], learning_rate: float = 1e-4, **kwargs: Any) -> "AdamState":
        """Zero moments mirroring the given arrays."""
        return cls(
            first_moment=[np.zeros_like(a) for a in arrays],
            second_moment=[np.zeros_like(a) for a in arrays],
            learning_rate=learning_rate,
            **kwargs,
        )

    @classmethod
    def for_params(cls, params: MlpParams, learning_rate: float = 1e-4, **kwargs: Any) -> "AdamState":
        """Zero moments mirroring an MLP."""
        return cls.for_arrays(params.arrays(), learning_rate=learning_rate, **kwargs)


def adam_update(
    state: AdamState,
    arrays: Sequence[np.ndarray],
    grads: Sequence[np.ndarray],
    learning_rate: Optional[float] = None,
) -> Tuple[AdamState, List[np.ndarray]]:
    """
    One bias-corrected Adam step over a list of arrays.

    Raises:
        DimensionMismatchError: If gradient shapes differ from the parameters
        NonFiniteGradientError: If any gradient is NaN/Inf (nothing is updated)
    """
    if len(arrays) != len(grads) or len(arrays) != len(state.first_moment):
        raise DimensionMismatchError("Adam state, parameters and gradients disagree in length")
    for a, g, m in zip(arrays, grads, state.first_moment):
        if a.shape != g.shape or a.shape != m.shape:
            raise DimensionMismatchError(f"Adam shape mismatch: {a.shape} vs {g.shape}")
        if not np.all(np.isfinite(g)):
            raise NonFiniteGradientError(f"Non-finite gradient at Adam step {state.step + 1}")
    lr = state.learning_rate if learning_rate is None else learning_rate
    step = state.step + 1
    correction1 = 1.0 - state.beta1 ** step
    correction2 = 1.0 - state.beta2 ** step
    new_m, new_v, new_p = [], [], []
    for a, g, m, v in zip(arrays, grads, state.first_moment, state.second_moment):
        m = state.beta1 * m + (1.0 - state.beta1) * g
        v = state.beta2 * v + (1.0 - state.beta2) * g * g
        new_p.append(a - lr * (m / correction1) / (np.sqrt(v / correction2) + state.eps))
        new_m.append(m)
        new_v.append(v)
    new_state = AdamState(
        first_moment=new_m,
        second_moment=new_v,
        step=step,
        learning_rate=state.learning_rate,
        beta1=state.beta1,
        beta2=state.beta2,
        eps=state.eps,
    )
    return new_state, new_p


def adam_step(
    state: AdamState,
    params: MlpParams,
    grads: MlpParams,
    learning_rate: Optional[float] = None,
) -> Tuple[AdamState, MlpParams]:
    """Adam update of an MLP; see adam_update."""
    new_state, arrays = adam_update(state, params.arrays(), grads.arrays(), learning_rate)
    return new_state, MlpParams.from_arrays(arrays, slope=params.slope)


# ==================== Impulse responses ====================


def predict_ir(
    params: MlpParams,
    encoder_cfg: EncoderConfig,
    position: Sequence[float],
    num_taps: int,
    channels: int,
) -> ImpulseResponse:
    """
    Evaluate the network at (x, y, z, t_i) for every tap of one position.

    Args:
        params: IR-MLP parameters
        encoder_cfg: Encoder config (input_dim 4)
        position: Normalized (x, y, z)
        num_taps: T
        channels: C, must equal the network output width

    Returns:
        ImpulseResponse with taps of shape (C, T)
    """
    if params.layer_dims[-1] != channels:
        raise DimensionMismatchError(
            f"Network emits {params.layer_dims[-1]} channels, {channels} requested",
            expected=channels,
            actual=params.layer_dims[-1],
        )
    out = forward(params, position_features(position, num_taps, encoder_cfg))
    return ImpulseResponse(taps=out.T.copy(), position=tuple(position))  # type: ignore[arg-type]


class FieldModel:
    """An IR-MLP together with what is needed to turn positions into filters."""

    def __init__(
        self,
        params: MlpParams,
        encoder: Optional[EncoderConfig] = None,
        num_taps: int = 400,
        position_box: Sequence[float] = UNIT_BOX,
        noise_model: Optional[Any] = None,
    ):
        """
        Initialize field model.

        Args:
            params: IR-MLP parameters (d_out = channels)
            encoder: Encoder config, input_dim 4
            num_taps: Taps per channel
            position_box: (min_x, min_y, min_z, max_x, max_y, max_z) used for normalization
            noise_model: Optional StaticNoiseSpectrum or NoiseMlp learned jointly
        """
        self.params = params
        self.encoder = encoder or EncoderConfig()
        if self.encoder.input_dim != 4:
            raise ValidationError("IR-MLP encoder must take (x, y, z, t)")
        if params.layer_dims[0] != self.encoder.output_dim:
            raise DimensionMismatchError(
                "Network input width does not match the encoder",
                expected=self.encoder.output_dim,
                actual=params.layer_dims[0],
            )
        self.num_taps = int(num_taps)
        self.position_box = tuple(float(v) for v in position_box)
        self.noise_model = noise_model

    @property
    def channels(self) -> int:
        """Get output channels."""
        return self.params.layer_dims[-1]

    def normalize_position(self, position: Sequence[float]) -> np.ndarray:
        """Map a position into [-1, 1]^3 by the bounding box."""
        pos = np.asarray(position, dtype=np.float64).reshape(-1)
        lo = np.asarray(self.position_box[:3])
        hi = np.asarray(self.position_box[3:])
        span = hi - lo
        norm = np.zeros(3)
        ok = span > 0
        norm[ok] = 2.0 * (pos[ok] - lo[ok]) / span[ok] - 1.0
        return np.clip(norm, -1.0, 1.0)

    def features(self, position: Sequence[float]) -> np.ndarray:
        """Encoded rows for every tap of a (raw) position."""
        return position_features(self.normalize_position(position), self.num_taps, self.encoder)

    def predict_ir(self, position: Sequence[float]) -> ImpulseResponse:
        """Predict the filter at a raw position."""
        ir = predict_ir(
            self.params, self.encoder, self.normalize_position(position), self.num_taps, self.channels
        )
        ir.position = tuple(float(v) for v in position)  # type: ignore[assignment]
        return ir

    def predict_taps(self, positions: np.ndarray) -> np.ndarray:
        """Predict filters for many positions in one pass; shape (n, C, T)."""
        pos = np.asarray(positions, dtype=np.float64).reshape(-1, 3)
        feats = np.concatenate([self.features(p) for p in pos], axis=0)
        out = forward(self.params, feats).reshape(len(pos), self.num_taps, self.channels)
        return np.transpose(out, (0, 2, 1))

    def parameter_count(self) -> int:
        """Get IR-MLP parameter count."""
        return count_parameters(self.params)

    @staticmethod
    def box_from_positions(positions: np.ndarray) -> Tuple[float, ...]:
        """Bounding box of a position set, widened to [-1, 1] on unit-sphere data."""
        pos = np.asarray(positions, dtype=np.float64).reshape(-1, 3)
        lo = np.minimum(pos.min(axis=0), -1.0) if np.all(np.abs(pos) <= 1.0) else pos.min(axis=0)
        hi = np.maximum(pos.max(axis=0), 1.0) if np.all(np.abs(pos) <= 1.0) else pos.max(axis=0)
        return tuple(float(v) for v in np.concatenate([lo, hi]))


# ==================== Gradient check ====================


def _activation_pattern(params: MlpParams, features: np.ndarray) -> List[np.ndarray]:
    _, cache = forward_with_cache(params, features)
    return [z > 0.0 for z in cache.pre_activations[:-1]]


def mlp_grad_check(
    layer_dims: Sequence[int] = (6, 16, 16, 3),
    seed: int = 0,
    num_rows: int = 4,
    step: float = 1e-5,
) -> Tuple[float, int]:
    """
    Compare backward() with central differences on a random network.

    Parameters whose perturbation flips a hidden unit across the rectifier
    kink are skipped.

    Args:
        layer_dims: Architecture to check
        seed: Random seed for network, inputs and upstream gradient
        num_rows: Input rows evaluated together
        step: Finite-difference step

    Returns:
        (max relative error, number of skipped parameters)
    """
    rng = make_rng(seed, 1)
    params = init_params(layer_dims, seed)
    for b in params.biases:
        b[:] = rng.uniform(-0.5, 0.5, b.shape)
    features = rng.standard_normal((num_rows, layer_dims[0]))
    upstream = rng.standard_normal((num_rows, layer_dims[-1]))
    grads, _ = backward(params, features, upstream)

    arrays = params.arrays()
    analytic: List[float] = []
    numeric: List[float] = []
    skipped = 0
    for arr, grad in zip(arrays, grads.arrays()):
        flat = arr.reshape(-1)
        for i in range(flat.size):
            original = flat[i]
            flat[i] = original + step
            plus = float(np.sum(upstream * forward(params, features)))
            plus_pattern = _activation_pattern(params, features)
            flat[i] = original - step
            minus = float(np.sum(upstream * forward(params, features)))
            minus_pattern = _activation_pattern(params, features)
            flat[i] = original
            if any(np.any(p != m) for p, m in zip(plus_pattern, minus_pattern)):
                skipped += 1
                continue
            analytic.append(float(grad.reshape(-1)[i]))
            numeric.append((plus - minus) / (2.0 * step))
    worst = float(np.max(relative_errors(np.array(analytic), np.array(numeric))))
    logger.debug(f"MLP gradient check {list(layer_dims)}: max rel err {worst:.3e}, skipped {skipped}")
    return worst, skipped
