import numpy as np
import pytest

from fundsep.defaults import default_market, default_model
from fundsep.model import derive_constants


@pytest.fixture(scope="session")
def spec():
    return default_market()


@pytest.fixture(scope="session", params=["three_halves", "inverse_bessel", "filtered_ou"])
def kind(request):
    return request.param


@pytest.fixture(scope="session")
def model(kind):
    return default_model(kind)


@pytest.fixture(scope="session")
def consts(spec, model):
    return derive_constants(spec, model)


def rel(a, b):
    a, b = np.asarray(a, float), np.asarray(b, float)
    return float(np.max(np.abs(a - b)) / max(np.max(np.abs(b)), 1e-300))
