import numpy as np
import pytest

from hvacmask.config import default_config
from hvacmask.datasets import generate_demonstrations
from hvacmask.environment import BuildingEnv, Scenario
from hvacmask.masking import KnnMaskProvider, MaskProviderConfig


@pytest.fixture(scope="session")
def cfg():
    return default_config()


@pytest.fixture(scope="session")
def scenario(cfg):
    return Scenario.from_config(cfg)


@pytest.fixture()
def env(scenario):
    return BuildingEnv(scenario)


@pytest.fixture(scope="session")
def demo_log(scenario):
    """Small shared demonstration log (3 days = 360 rows)."""
    return generate_demonstrations(scenario, n_days=3, seed=99)


@pytest.fixture(scope="session")
def knn_provider(demo_log):
    return KnnMaskProvider.from_log(demo_log, MaskProviderConfig())


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(1234)
