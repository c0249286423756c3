import numpy as np
import pytest

from powermean_ssl import kernels
from powermean_ssl.msbm import MsbmParams, sample_msbm
from powermean_ssl.sparse import csr_from_arrays


def random_symmetric_csr(n, density, rng, low=0.1, high=1.0):
    """Random symmetric nonnegative CSR with zero diagonal."""
    A = rng.uniform(low, high, (n, n)) * (rng.random((n, n)) < density)
    A = np.triu(A, 1)
    A = A + A.T
    r, c = np.nonzero(A)
    return csr_from_arrays(r, c, A[r, c], n, n), A


@pytest.fixture
def rng():
    return np.random.Generator(np.random.PCG64(12345))


@pytest.fixture(params=sorted(kernels.available_backends()))
def backend(request):
    return kernels.available_backends()[request.param]


@pytest.fixture(scope="session")
def sbm200():
    """A connected two-layer sampled graph with 200 nodes."""
    params = MsbmParams(2, 100, (0.09, 0.05), (0.01, 0.05))
    return params, sample_msbm(params, seed=7)
