import numpy as np
import pytest

from deturb import kernels


@pytest.fixture(scope="session", autouse=True)
def warm_kernels():
    # trigger JIT compilation up front so timed tests measure steady-state
    img = np.linspace(0.0, 1.0, 64).reshape(8, 8)
    z = np.zeros((8, 8))
    kernels.warp_bilinear(img, z, z)
    kernels.hs_sweep(img, img, z, np.full((8, 8), 1.0), np.full((8, 8), 0.25), z, z)
    g2d = np.full((3, 3), 1.0 / 9.0)
    kernels.nlm_scan(img, 1, 2, g2d, 4)
    indptr = np.arange(65, dtype=np.int64)
    indices = np.roll(np.arange(64, dtype=np.int64), 1)
    w = np.full(64, 0.5)
    r = kernels.nltv_sqrt_terms(img.ravel(), indptr, indices, w, 1e-8)
    kernels.nltv_reg_grad(img.ravel(), indptr, indices, w, r)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
