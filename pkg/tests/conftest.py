"""Shared fixtures: random mixture builders and small synthetic datasets."""

import numpy as np
import pytest

from trajdistill.gmm import GmmPrediction
from trajdistill.synthetic import ScenarioGenConfig, generate


def make_gmm(rng, n_modes, horizon, spread=5.0):
    """Random valid mixture with well-conditioned stds."""
    w = rng.random(n_modes) + 0.1
    return GmmPrediction(
        weights=w / w.sum(),
        means=rng.normal(0.0, spread, (n_modes, horizon, 2)),
        stds=rng.uniform(0.5, 2.0, (n_modes, horizon, 2)),
    )


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def small_dataset():
    return generate(ScenarioGenConfig(example_count=60, seed=11))


@pytest.fixture(scope="session")
def tiny_dataset():
    return generate(ScenarioGenConfig(example_count=12, seed=3))
