import numpy as np
import pytest

from cpms._kernels import available_backends, get_backend


@pytest.fixture(params=available_backends())
def backend(request):
    return get_backend(request.param)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
