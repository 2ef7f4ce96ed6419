import numpy as np
import pytest

from bdbench.backend import get_kernels


@pytest.fixture(scope="session")
def kernels_compiled():
    try:
        return get_kernels("compiled")
    except ImportError:
        pytest.skip("compiled backend not built")


@pytest.fixture(scope="session")
def kernels_python():
    return get_kernels("python")


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)
