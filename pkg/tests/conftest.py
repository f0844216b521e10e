"""Pytest configuration and fixtures."""

import numpy as np
import pytest

from irfield.synthetic import make_filter_field
from irfield.testing import (
    OracleIrPredictor,
    tiny_field_spec,
    tiny_noise_spec,
    tiny_sweep,
    tiny_train_config,
)


def pytest_addoption(parser):
    """Register --runslow."""
    parser.addoption("--runslow", action="store_true", default=False, help="run slow acceptance tests")


def pytest_collection_modifyitems(config, items):
    """Skip slow tests unless --runslow is given."""
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture
def rng():
    """Provide a seeded generator."""
    return np.random.default_rng(1234)


@pytest.fixture
def field_spec():
    """Provide a small synthetic field spec."""
    return tiny_field_spec()


@pytest.fixture
def tiny_field(field_spec):
    """Provide a 12-node synthetic field."""
    return make_filter_field(field_spec)


@pytest.fixture
def sweep():
    """Provide a 50 ms sweep at 8 kHz."""
    return tiny_sweep()


@pytest.fixture
def noise_spec():
    """Provide independent noise at 0 dB."""
    return tiny_noise_spec()


@pytest.fixture
def train_config():
    """Provide a tiny training config."""
    return tiny_train_config()


@pytest.fixture
def oracle(tiny_field):
    """Provide a predictor returning the stored filters."""
    return OracleIrPredictor(tiny_field)
