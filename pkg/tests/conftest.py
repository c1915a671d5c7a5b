import sys
import warnings
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from unshielded.data import SingularProfileParams, build_singular_data, flat_data  # noqa: E402
from unshielded.grid import make_grid  # noqa: E402
from unshielded.picard import SchemeConfig, run_fixed_point  # noqa: E402


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(scope="session")
def grid32():
    return make_grid(2, 32, 1.0)


@pytest.fixture(scope="session")
def grid64():
    return make_grid(2, 64, 1.0)


@pytest.fixture(scope="session")
def singular32(grid32):
    return build_singular_data(grid32, SingularProfileParams(), 0.1)


@pytest.fixture(scope="session")
def small_cfg():
    return SchemeConfig(T=0.0125, M=16, nu0=1e-3, max_iters=40)


@pytest.fixture(scope="session")
def singular_run(singular32, small_cfg):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return run_fixed_point(singular32, small_cfg)


@pytest.fixture(scope="session")
def flat_run(grid32, small_cfg):
    return run_fixed_point(flat_data(grid32), small_cfg)
