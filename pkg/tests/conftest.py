import numpy as np
import pytest

from metrodiff import backend


@pytest.fixture
def rng_np():
    return np.random.default_rng(20250801)


@pytest.fixture(params=["python", "compiled"])
def each_backend(request):
    """Run a test under both backends, restoring the default afterwards."""
    name = request.param
    if name == "compiled" and not backend.HAVE_COMPILED:
        pytest.skip("compiled extension not built")
    previous = backend.active_backend()
    backend.set_backend(name)
    yield name
    backend.set_backend(previous)


needs_compiled = pytest.mark.skipif(not backend.HAVE_COMPILED,
                                    reason="compiled extension not built")
