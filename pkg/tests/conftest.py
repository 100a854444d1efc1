import numpy as np
import pytest

from llinbo.benchlab.stub_server import StubChatServer
from llinbo.gp import Dataset, KernelSpec, fit_gp


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def small_model():
    r = np.random.default_rng(7)
    X = r.random((8, 2))
    y = np.sin(3 * X[:, 0]) + X[:, 1] ** 2
    spec = KernelSpec("Matern52ARD", [0.3, 0.5], 1.3, 0.2)
    return fit_gp(Dataset(X, y), 1e-4, spec)


@pytest.fixture
def stub_valid():
    with StubChatServer("valid", seed=3) as srv:
        yield srv


@pytest.fixture
def stub_error():
    with StubChatServer("error") as srv:
        yield srv
