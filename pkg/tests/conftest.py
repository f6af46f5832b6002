import numpy as np
import pytest

from splatcodec.rangecoder import warm_up


@pytest.fixture(scope="session", autouse=True)
def _jit_warmup():
    # Compile the coder kernels once so individual tests time only themselves.
    warm_up()


@pytest.fixture
def rng():
    return np.random.default_rng(0)
