import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

import ssglab as sg


@pytest.fixture(scope="session")
def fbm16():
    return sg.make_model("fbm", H=1 / 6)


@pytest.fixture(scope="session")
def catalog():
    return sg.catalog_models()


@pytest.fixture(scope="session")
def trap():
    return sg.trapezoid()


@pytest.fixture()
def rng():
    return np.random.default_rng(20260809)


def synthetic_path(values, n=None):
    """Wrap raw values into a PathSample on a unit-horizon grid."""
    values = np.asarray(values, dtype=float)
    n = n or (values.size - 1)
    grid = sg.GridSpec(n, T=(values.size - 1) / n)
    return sg.PathSample(grid=grid, values=values, seed_id="synthetic")
