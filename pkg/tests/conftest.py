import numpy as np
import pytest

from issir import fixtures
from issir.stft import GridSpec


@pytest.fixture(scope="session")
def band15():
    return fixtures.band_fixture(15.0)


@pytest.fixture(scope="session")
def band5():
    return fixtures.band_fixture(5.0)


@pytest.fixture(scope="session")
def two5():
    return fixtures.two_source_fixture(5.0)


@pytest.fixture(scope="session")
def transient10():
    return fixtures.transient_fixture(10.0)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def grid_short():
    return GridSpec.for_signal(8192, 512, 0.5)
