"""Learnable stationary-noise amplitude spectra."""

import logging
from typing import List, Optional, Sequence, Union

import numpy as np

from irfield.config import EncoderConfig, MlpConfig
from irfield.exceptions import DimensionMismatchError, InvalidSignalError, ValidationError
from irfield.neural_field import MlpParams, backward, encode, forward_with_cache, init_params

logger = logging.getLogger(__name__)

LOG_AMPLITUDE_INIT = -2.0
NOISE_KINDS = ("none", "static", "positional")


class StaticNoiseSpectrum:
    """One log-amplitude per frequency bin, shared by every position."""

    kind = "static"

    def __init__(self, log_amplitudes: np.ndarray):
        log_amplitudes = np.asarray(log_amplitudes, dtype=np.float64).reshape(-1)
        if log_amplitudes.size < 1 or not np.all(np.isfinite(log_amplitudes)):
            raise InvalidSignalError("Noise log-amplitudes must be non-empty and finite")
        self.log_amplitudes = log_amplitudes

    @classmethod
    def init(cls, num_bins: int, value: float = LOG_AMPLITUDE_INIT) -> "StaticNoiseSpectrum":
        """Constant initial spectrum exp(value)."""
        return cls(np.full(num_bins, value))

    @property
    def num_bins(self) -> int:
        """Get K."""
        return int(self.log_amplitudes.size)

    def amplitude(self, position: Optional[Sequence[float]] = None) -> np.ndarray:
        """Get exp(log_amplitudes); position is ignored."""
        return np.exp(self.log_amplitudes)

    def grads(self, position: Optional[Sequence[float]], upstream: np.ndarray) -> List[np.ndarray]:
        """Get d/d(log_amplitudes) through exp."""
        return [upstream * np.exp(self.log_amplitudes)]

    def arrays(self) -> List[np.ndarray]:
        """Get trainable arrays."""
        return [self.log_amplitudes]

    def with_arrays(self, arrays: Sequence[np.ndarray]) -> "StaticNoiseSpectrum":
        """Copy with replaced arrays."""
        return StaticNoiseSpectrum(arrays[0])


class NoiseMlp:
    """Position-dependent noise amplitudes predicted by a small coordinate network."""

    kind = "positional"

    def __init__(self, params: MlpParams, encoder: Optional[EncoderConfig] = None):
        """
        Initialize the noise network.

        Args:
            params: Network whose input width matches the encoder and output width is K
            encoder: Encoder over (x, y, z); input_dim must be 3
        """
        self.encoder = encoder or EncoderConfig(input_dim=3)
        if self.encoder.input_dim != 3:
            raise ValidationError("Noise MLP encoder takes (x, y, z) only")
        if params.layer_dims[0] != self.encoder.output_dim:
            raise DimensionMismatchError(
                "Noise MLP input width does not match its encoder",
                expected=self.encoder.output_dim,
                actual=params.layer_dims[0],
            )
        self.params = params

    @classmethod
    def init(
        cls,
        num_bins: int,
        network: Optional[MlpConfig] = None,
        num_octaves: int = 10,
        seed: int = 0,
        bias_init: float = LOG_AMPLITUDE_INIT,
    ) -> "NoiseMlp":
        """
        Glorot-initialized network whose output bias starts at bias_init.

        Args:
            num_bins: K
            network: Architecture (4 layers of 128 by default)
            num_octaves: Encoder octaves
            seed: Random seed
            bias_init: Initial log-amplitude
        """
        network = network or MlpConfig(num_layers=4, hidden=128)
        encoder = EncoderConfig(num_octaves=num_octaves, input_dim=3)
        params = init_params(network.layer_dims(encoder.output_dim, num_bins), seed, network.slope)
        params.biases[-1][:] = bias_init
        return cls(params, encoder)

    @property
    def num_bins(self) -> int:
        """Get K."""
        return self.params.layer_dims[-1]

    def _position(self, position: Optional[Sequence[float]]) -> np.ndarray:
        if position is None:
            raise ValidationError("Position-dependent noise model needs a position")
        pos = np.asarray(position, dtype=np.float64).reshape(-1)
        if pos.size != 3:
            raise DimensionMismatchError("Noise position must have three coordinates", 3, pos.size)
        return pos

    def amplitude(self, position: Optional[Sequence[float]] = None) -> np.ndarray:
        """Get exp(network(encode(position)))."""
        out, _ = forward_with_cache(self.params, encode(self._position(position), self.encoder))
        return np.exp(out)

    def grads(self, position: Optional[Sequence[float]], upstream: np.ndarray) -> List[np.ndarray]:
        """Gradients of sum(upstream * amplitude) wrt the network parameters."""
        features = encode(self._position(position), self.encoder)
        out, cache = forward_with_cache(self.params, features)
        param_grads, _ = backward(self.params, features, upstream * np.exp(out), cache)
        return param_grads.arrays()

    def arrays(self) -> List[np.ndarray]:
        """Get trainable arrays."""
        return self.params.arrays()

    def with_arrays(self, arrays: Sequence[np.ndarray]) -> "NoiseMlp":
        """Copy with replaced arrays."""
        return NoiseMlp(MlpParams.from_arrays(list(arrays), slope=self.params.slope), self.encoder)


NoiseModel = Union[StaticNoiseSpectrum, NoiseMlp]


def make_noise_model(
    kind: str,
    num_bins: int,
    network: Optional[MlpConfig] = None,
    num_octaves: int = 10,
    seed: int = 0,
) -> Optional[NoiseModel]:
    """Build an initial noise model of one of NOISE_KINDS."""
    if kind not in NOISE_KINDS:
        raise ValidationError(f"Unknown noise model kind: {kind} (expected one of {NOISE_KINDS})")
    if kind == "none":
        return None
    if kind == "static":
        return StaticNoiseSpectrum.init(num_bins)
    return NoiseMlp.init(num_bins, network=network, num_octaves=num_octaves, seed=seed)


def noise_amplitude(model: NoiseModel, position: Optional[Sequence[float]] = None) -> np.ndarray:
    """
    Strictly positive amplitude spectrum with K bins.

    Raises:
        ValidationError: If a position-dependent model gets no position
    """
    return model.amplitude(position)


def noise_grads(
    model: NoiseModel, position: Optional[Sequence[float]], upstream_grad: np.ndarray
) -> List[np.ndarray]:
    """
    Exact parameter gradients of sum(upstream_grad * noise_amplitude(model, position)).

    Returns:
        One array per entry of model.arrays()

    Raises:
        DimensionMismatchError: If upstream_grad does not have K bins
        InvalidSignalError: If upstream_grad is non-finite
    """
    upstream = np.asarray(upstream_grad, dtype=np.float64).reshape(-1)
    if upstream.size != model.num_bins:
        raise DimensionMismatchError(
            "Noise gradient needs one value per bin", expected=model.num_bins, actual=upstream.size
        )
    if not np.all(np.isfinite(upstream)):
        raise InvalidSignalError("Upstream noise gradient contains non-finite values")
    return model.grads(position, upstream)
