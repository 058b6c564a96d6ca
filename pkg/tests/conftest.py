import numpy as np
import pytest

from bdx.weights import example_params


@pytest.fixture(scope="session")
def params2():
    return example_params(2)


@pytest.fixture(scope="session")
def params3():
    return example_params(3)


@pytest.fixture()
def rng():
    return np.random.default_rng(20260822)
