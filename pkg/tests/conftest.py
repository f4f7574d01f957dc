from pathlib import Path

import numpy as np
import pytest

from twoset.dataio import build_geyser, load_csv, partition_diabetes, standardize

FIXTURES = Path(__file__).resolve().parent.parent / "fixtures"


@pytest.fixture(scope="session")
def fixtures_dir() -> Path:
    return FIXTURES


@pytest.fixture(scope="session")
def diabetes():
    return standardize(partition_diabetes(load_csv(FIXTURES / "diabetes.csv")))


@pytest.fixture(scope="session")
def geyser():
    return standardize(build_geyser(load_csv(FIXTURES / "geyser.csv")))


@pytest.fixture(scope="session")
def diabetes_cache(diabetes):
    from twoset.search import ModelSpaceCache
    return ModelSpaceCache(diabetes)


def random_two_set(rng, n0=30, n1=25, K=4):
    """Small synthetic two-set data with standardized predictors."""
    from twoset.dataio import TwoSetData
    X = rng.standard_normal((n0 + n1, K))
    label = np.r_[np.zeros(n0, int), np.ones(n1, int)]
    y = X @ rng.normal(0, 1, K) + rng.standard_normal(n0 + n1)
    return standardize(TwoSetData(y, X, label, tuple(f"x{i + 1}" for i in range(K))))
