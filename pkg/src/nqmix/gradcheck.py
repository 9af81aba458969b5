"""Central finite-difference gradient verification."""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor


def fd_gradient(f, param: Tensor, eps: float = 1e-5) -> np.ndarray:
    """Central finite differences of scalar-valued `f()` w.r.t. one tensor."""
    grad = np.zeros_like(param.data)
    flat = param.data.reshape(-1)
    out = grad.reshape(-1)
    for i in range(flat.size):
        keep = flat[i]
        flat[i] = keep + eps
        hi = float(f())
        flat[i] = keep - eps
        lo = float(f())
        flat[i] = keep
        out[i] = (hi - lo) / (2 * eps)
    return grad


def max_relative_error(
    f, params: dict[str, Tensor], eps: float = 1e-5, floor: float = 1e-6
) -> float:
    """Worst relative disagreement between backward() and finite differences.

    `f()` must rebuild and return the scalar output tensor from `params`.
    """
    ad.zero_grad(params)
    ad.backward(f())
    analytic = {
        k: (p.grad.copy() if p.grad is not None else np.zeros_like(p.data))
        for k, p in params.items()
    }
    ad.zero_grad(params)
    worst = 0.0
    for k, p in params.items():
        fd = fd_gradient(lambda: f().data, p, eps)
        denom = np.maximum(np.maximum(np.abs(fd), np.abs(analytic[k])), floor)
        worst = max(worst, float((np.abs(analytic[k] - fd) / denom).max()))
    return worst
