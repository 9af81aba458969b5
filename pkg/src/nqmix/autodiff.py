"""Reverse-mode automatic differentiation on float64 numpy arrays.

A `Tensor` wraps an ndarray and, when any input of an operation requires
gradients, records a backward closure.  Calling :func:`backward` on a scalar
output accumulates gradients (`+=`) into every reachable leaf, so repeated
backward passes over independent graphs sum, and untouched leaves keep
whatever is in `.grad` (zero after `zero_grad`).

Every operation checks its output for NaN/Inf and raises
:class:`NumericsError` instead of letting bad values propagate; the same
check runs on every gradient produced during backward.
"""

from __future__ import annotations

import math
import threading
from contextlib import contextmanager

import numpy as np

__all__ = [
    "NumericsError",
    "Tensor",
    "no_grad",
    "tensor",
    "add",
    "sub",
    "mul",
    "neg",
    "matmul",
    "bmm",
    "concat",
    "slice_cols",
    "gather",
    "reshape",
    "scale",
    "relu",
    "elu",
    "tanh",
    "sigmoid",
    "abs_",
    "tsum",
    "sum_axis",
    "mean",
    "softmax",
    "backward",
    "zero_grad",
]


class NumericsError(RuntimeError):
    """A NaN or Inf appeared in a forward value or a gradient."""


def _check_finite(arr: np.ndarray, what: str) -> None:
    # the sum of an array of sane magnitudes is finite iff every entry is
    if not math.isfinite(float(arr.sum())):
        raise NumericsError(f"non-finite values in {what}")


class _GradMode(threading.local):
    enabled = True


_grad_mode = _GradMode()


@contextmanager
def no_grad():
    """Skip graph recording (rollouts, target-network evaluation)."""
    previous = _grad_mode.enabled
    _grad_mode.enabled = False
    try:
        yield
    finally:
        _grad_mode.enabled = previous


class Tensor:
    """Shaped array of float64 values with an optional gradient."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False):
        if isinstance(data, np.ndarray) and data.dtype == np.float64:
            arr = data
        else:
            arr = np.asarray(data, dtype=np.float64)
        _check_finite(arr, "tensor data")
        self.data = arr
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self._parents: tuple[Tensor, ...] = ()
        self._backward = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    def __repr__(self) -> str:
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    # Operator sugar for the common arithmetic ops.
    def __add__(self, other):
        return add(self, _as_tensor(other))

    def __sub__(self, other):
        return sub(self, _as_tensor(other))

    def __mul__(self, other):
        if isinstance(other, (int, float)):
            return scale(self, float(other))
        return mul(self, other)

    def __rmul__(self, other):
        return self.__mul__(other)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)


def tensor(data, requires_grad: bool = False) -> Tensor:
    return Tensor(data, requires_grad=requires_grad)


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _node(data: np.ndarray, parents: tuple[Tensor, ...], backward_fn) -> Tensor:
    """Create an op output, recording the graph only if a parent needs grads."""
    out = Tensor(data)
    if _grad_mode.enabled and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = parents
        out._backward = backward_fn
    return out


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum `grad` down to `shape` to undo numpy broadcasting."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


# ---------------------------------------------------------------------------
# arithmetic


def add(a: Tensor, b: Tensor) -> Tensor:
    def bw(g):
        return _unbroadcast(g, a.data.shape), _unbroadcast(g, b.data.shape)

    return _node(a.data + b.data, (a, b), bw)


def sub(a: Tensor, b: Tensor) -> Tensor:
    def bw(g):
        return _unbroadcast(g, a.data.shape), _unbroadcast(-g, b.data.shape)

    return _node(a.data - b.data, (a, b), bw)


def mul(a: Tensor, b: Tensor) -> Tensor:
    def bw(g):
        return (
            _unbroadcast(g * b.data, a.data.shape),
            _unbroadcast(g * a.data, b.data.shape),
        )

    return _node(a.data * b.data, (a, b), bw)


def neg(a: Tensor) -> Tensor:
    return _node(-a.data, (a,), lambda g: (-g,))


def scale(a: Tensor, c: float) -> Tensor:
    return _node(a.data * c, (a,), lambda g: (g * c,))


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim != 2 or b.data.ndim != 2:
        raise ValueError(f"matmul expects 2-D operands, got {a.data.shape} @ {b.data.shape}")
    if a.data.shape[1] != b.data.shape[0]:
        raise ValueError(f"matmul shape mismatch: {a.data.shape} @ {b.data.shape}")

    def bw(g):
        return g @ b.data.T, a.data.T @ g

    return _node(a.data @ b.data, (a, b), bw)


def bmm(x: Tensor, w: Tensor) -> Tensor:
    """Per-row matrix product: (B, n) x (B, n, m) -> (B, m).

    Used where a weight matrix is generated per sample (hypernetworks).
    """
    if x.data.ndim != 2 or w.data.ndim != 3 or x.data.shape != w.data.shape[:2]:
        raise ValueError(f"bmm shape mismatch: {x.data.shape} vs {w.data.shape}")

    def bw(g):
        gx = np.einsum("bm,bnm->bn", g, w.data)
        gw = np.einsum("bn,bm->bnm", x.data, g)
        return gx, gw

    return _node(np.einsum("bn,bnm->bm", x.data, w.data), (x, w), bw)


# ---------------------------------------------------------------------------
# shape manipulation


def concat(parts: list[Tensor], axis: int = 1) -> Tensor:
    sizes = [p.data.shape[axis] for p in parts]
    splits = np.cumsum(sizes)[:-1]

    def bw(g):
        return tuple(np.split(g, splits, axis=axis))

    return _node(np.concatenate([p.data for p in parts], axis=axis), tuple(parts), bw)


def slice_cols(a: Tensor, start: int, stop: int) -> Tensor:
    def bw(g):
        full = np.zeros_like(a.data)
        full[:, start:stop] = g
        return (full,)

    return _node(np.ascontiguousarray(a.data[:, start:stop]), (a,), bw)


def gather(a: Tensor, idx: np.ndarray) -> Tensor:
    """Pick one column per row: (B, K) with idx (B,) -> (B,)."""
    idx = np.asarray(idx, dtype=np.int64)
    rows = np.arange(a.data.shape[0])

    def bw(g):
        full = np.zeros_like(a.data)
        full[rows, idx] = g
        return (full,)

    return _node(a.data[rows, idx], (a,), bw)


def reshape(a: Tensor, shape: tuple[int, ...]) -> Tensor:
    old = a.data.shape

    def bw(g):
        return (g.reshape(old),)

    return _node(a.data.reshape(shape), (a,), bw)


# ---------------------------------------------------------------------------
# nonlinearities


def relu(a: Tensor) -> Tensor:
    out = np.maximum(a.data, 0.0)

    def bw(g):
        return (g * (a.data > 0.0),)

    return _node(out, (a,), bw)


def elu(a: Tensor) -> Tensor:
    neg_part = np.expm1(np.minimum(a.data, 0.0))
    out = np.where(a.data > 0.0, a.data, neg_part)

    def bw(g):
        return (g * np.where(a.data > 0.0, 1.0, neg_part + 1.0),)

    return _node(out, (a,), bw)


def tanh(a: Tensor) -> Tensor:
    out = np.tanh(a.data)

    def bw(g):
        return (g * (1.0 - out * out),)

    return _node(out, (a,), bw)


def sigmoid(a: Tensor) -> Tensor:
    out = 1.0 / (1.0 + np.exp(-a.data))

    def bw(g):
        return (g * out * (1.0 - out),)

    return _node(out, (a,), bw)


def abs_(a: Tensor) -> Tensor:
    def bw(g):
        return (g * np.where(a.data >= 0.0, 1.0, -1.0),)

    return _node(np.abs(a.data), (a,), bw)


# ---------------------------------------------------------------------------
# reductions


def tsum(a: Tensor) -> Tensor:
    def bw(g):
        return (np.broadcast_to(g, a.data.shape).copy(),)

    return _node(np.asarray(a.data.sum()), (a,), bw)


def sum_axis(a: Tensor, axis: int) -> Tensor:
    def bw(g):
        return (np.repeat(np.expand_dims(g, axis), a.data.shape[axis], axis=axis),)

    return _node(a.data.sum(axis=axis), (a,), bw)


def mean(a: Tensor) -> Tensor:
    n = a.data.size

    def bw(g):
        return (np.broadcast_to(g / n, a.data.shape).copy(),)

    return _node(np.asarray(a.data.mean()), (a,), bw)


# ---------------------------------------------------------------------------
# softmax


def softmax(logits: Tensor, mask: np.ndarray | None = None) -> Tensor:
    """Row-wise softmax, numerically stabilized by max subtraction.

    `mask` marks available entries; masked-out entries come back exactly 0
    and get no gradient.  A row with no available entry is an error.
    """
    x = logits.data
    squeeze = x.ndim == 1
    if squeeze:
        x = x[None, :]
    if mask is not None:
        m = np.asarray(mask, dtype=bool)
        if squeeze and m.ndim == 1:
            m = m[None, :]
        if m.shape != x.shape:
            raise ValueError(f"mask shape {m.shape} does not match logits {x.shape}")
        if not m.any(axis=1).all():
            raise ValueError("softmax mask leaves no available entry in some row")
        shifted = np.where(m, x, -np.inf)
        mx = shifted.max(axis=1, keepdims=True)
        e = np.where(m, np.exp(x - mx), 0.0)
    else:
        mx = x.max(axis=1, keepdims=True)
        e = np.exp(x - mx)
    p = e / e.sum(axis=1, keepdims=True)
    if squeeze:
        p = p[0]

    def bw(g):
        gp = g[None, :] if squeeze else g
        pp = p[None, :] if squeeze else p
        dot = (gp * pp).sum(axis=1, keepdims=True)
        gx = pp * (gp - dot)
        return (gx[0] if squeeze else gx,)

    return _node(p, (logits,), bw)


# ---------------------------------------------------------------------------
# backward pass


def backward(output: Tensor) -> None:
    """Accumulate d(output)/d(leaf) into `.grad` of every reachable leaf."""
    if output.data.size != 1:
        raise ValueError(f"backward requires a scalar output, got shape {output.data.shape}")
    if not output.requires_grad:
        return

    topo: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(output, False)]
    while stack:
        node, processed = stack.pop()
        if processed:
            topo.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))

    grads: dict[int, np.ndarray] = {id(output): np.ones_like(output.data)}
    leaves: list[Tensor] = []
    for node in reversed(topo):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if node._backward is None:  # leaf
            if node.grad is None:
                node.grad = g.copy()
            else:
                node.grad += g
            leaves.append(node)
            continue
        for parent, pg in zip(node._parents, node._backward(g)):
            if not parent.requires_grad or pg is None:
                continue
            pid = id(parent)
            if pid in grads:
                grads[pid] = grads[pid] + pg
            else:
                grads[pid] = pg
    # NaN/Inf contaminates every product and sum downstream, so checking the
    # accumulated leaf gradients catches bad values anywhere in the backward
    for leaf in leaves:
        _check_finite(leaf.grad, "gradient")


def zero_grad(params) -> None:
    """Reset gradients of an iterable (or dict) of leaf tensors."""
    it = params.values() if isinstance(params, dict) else params
    for p in it:
        p.grad = None
