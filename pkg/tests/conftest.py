import numpy as np
import pytest

from sensorplace import SyntheticCityConfig, generate_synthetic_city, split_segments


@pytest.fixture(scope="session")
def small_city():
    ds, truth = generate_synthetic_city(SyntheticCityConfig(width=6, height=6, n_days=21, seed=3))
    return ds, truth


@pytest.fixture(scope="session")
def small_split(small_city):
    return split_segments(small_city[0], seed=3)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
