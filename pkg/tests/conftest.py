import numpy as np
import pytest

from nqmix import autodiff as ad
from nqmix.autodiff import Tensor


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def fd_grad(f, param, eps=1e-5):
    """Independent central-finite-difference oracle for d f() / d param."""
    grad = np.zeros_like(param.data)
    flat = param.data.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        keep = flat[i]
        flat[i] = keep + eps
        hi = float(f())
        flat[i] = keep - eps
        lo = float(f())
        flat[i] = keep
        gflat[i] = (hi - lo) / (2 * eps)
    return grad


def assert_grads_match_fd(build, params, rtol=1e-4, eps=1e-5):
    """Backward() gradients of scalar build() vs the finite-difference oracle."""
    ad.zero_grad(params)
    ad.backward(build())
    for name, p in params.items():
        analytic = p.grad if p.grad is not None else np.zeros_like(p.data)
        fd = fd_grad(lambda: build().data, p, eps)
        denom = np.maximum(np.maximum(np.abs(fd), np.abs(analytic)), 1e-6)
        rel = np.abs(analytic - fd) / denom
        assert rel.max() <= rtol, f"{name}: max relative error {rel.max():.3e}"
    ad.zero_grad(params)


def leaf(rng, *shape):
    return Tensor(rng.normal(size=shape), requires_grad=True)
