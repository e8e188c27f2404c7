import numpy as np
import pytest

from numblocks.instructions import build_vocabulary


@pytest.fixture(scope="session")
def vocab():
    return build_vocabulary()


@pytest.fixture
def rng():
    return np.random.default_rng(0)
