"""Testing utilities for irfield."""

from irfield.testing.mock import (
    FixedIrModel,
    OracleIrPredictor,
    PositionGainModel,
    tiny_field_spec,
    tiny_noise_spec,
    tiny_sweep,
    tiny_sweep_config,
    tiny_train_config,
)

__all__ = [
    "FixedIrModel",
    "OracleIrPredictor",
    "PositionGainModel",
    "tiny_field_spec",
    "tiny_noise_spec",
    "tiny_sweep",
    "tiny_sweep_config",
    "tiny_train_config",
]
