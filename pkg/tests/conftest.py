import numpy as np
import pytest

from codesign import _kernels_py
from codesign.model import NoiseSpec, projection_complement

try:
    from codesign import _kernels as _kernels_c
except ImportError:  # extension not built
    _kernels_c = None

BACKENDS = [pytest.param(_kernels_py, id="python")]
if _kernels_c is not None:
    BACKENDS.append(pytest.param(_kernels_c, id="cython"))


@pytest.fixture(params=BACKENDS)
def kernels(request):
    return request.param


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


def random_covariates(rng, n, p):
    z = np.column_stack([np.ones(n), rng.standard_normal((n, p - 1))]) if p > 1 else np.ones((n, 1))
    return projection_complement(z)


def intercept_only(n):
    return projection_complement(np.ones((n, 1)))


def equal_noise(b, k, sigma_sq=1.0):
    return NoiseSpec(b * sigma_sq, (sigma_sq,) * k)


def balanced_vector(rng, n):
    x = np.array([1] * (n // 2) + [-1] * (n // 2))
    return rng.permutation(x)
