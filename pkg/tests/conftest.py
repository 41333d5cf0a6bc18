import os

import numpy as np
import pytest

from nsgalerkin.tensor import basis_and_tensor


@pytest.fixture(scope="session")
def cache_dir(tmp_path_factory):
    path = tmp_path_factory.mktemp("tensor-cache")
    os.environ["NSGALERKIN_CACHE_DIR"] = str(path)
    return path


@pytest.fixture(scope="session")
def system(cache_dir):
    """Memoised (basis, tensor) by k_max."""
    built = {}

    def get(k_max):
        if k_max not in built:
            built[k_max] = basis_and_tensor(k_max, cache_dir)
        return built[k_max]

    return get


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
