import pytest
from hypothesis import settings

from stkit import kernels

settings.register_profile("det", deadline=None, derandomize=True)
settings.load_profile("det")

BACKENDS = ["numpy"] + (["numba"] if kernels.numba_available() else [])


@pytest.fixture(params=BACKENDS)
def backend(request):
    kernels.set_backend(request.param)
    yield request.param
    kernels.set_backend(None)
