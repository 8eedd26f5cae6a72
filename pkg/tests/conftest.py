import numpy as np
import pytest

import gcrl.nn.params
from gcrl.nn.backend import available_backends


@pytest.fixture(params=[m.BACKEND_NAME for m in available_backends()])
def kernel_impl(request, monkeypatch):
    """Run a test once per available kernel backend by swapping the module
    the nn wrappers dispatch to."""
    module = {m.BACKEND_NAME: m for m in available_backends()}[request.param]
    monkeypatch.setattr(gcrl.nn.params, "kernels", module)
    return module


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
