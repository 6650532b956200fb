import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from mala_scaling import ModelSpec, solve_limit


@pytest.fixture(scope="session")
def strict_hp():
    return ModelSpec(family="strict_hp")


@pytest.fixture(scope="session")
def gauss_prior():
    return ModelSpec(family="gauss_prior")


@pytest.fixture(scope="session")
def iid_gauss():
    return ModelSpec(family="iid_gauss")


@pytest.fixture(scope="session")
def all_models(strict_hp, gauss_prior, iid_gauss):
    return {"strict_hp": strict_hp, "gauss_prior": gauss_prior, "iid_gauss": iid_gauss}


@pytest.fixture(scope="session")
def limits(all_models):
    return {name: solve_limit(model) for name, model in all_models.items()}


@pytest.fixture
def rng():
    return np.random.default_rng(20260810)
