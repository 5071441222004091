"""Taped reverse-mode automatic differentiation over numpy arrays.

The op set is deliberately small: matmul, softmax, log-softmax, layer-norm,
tanh, gelu, add, mul, sum/mean reductions (mean pooling), concatenate, plus
the structural ops (reshape, transpose) and stop_gradient needed to express
straight-through estimators. Everything runs in float64 on the CPU with a
fixed reduction order, so gradients are bit-reproducible for a fixed input.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.special import erf

_INV_SQRT2 = 1.0 / math.sqrt(2.0)
_INV_SQRT2PI = 1.0 / math.sqrt(2.0 * math.pi)


def _unbroadcast(grad, shape):
    """Sum `grad` down to `shape`, undoing numpy broadcasting."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


class Tensor:
    """A node in the computation graph.

    `value` is always a float64 ndarray. Gradients accumulate into `grad`
    during `backward`. Tensors created from raw arrays are leaves; ops
    record their parents and a closure that routes the incoming gradient.
    """

    __slots__ = ("value", "grad", "parents", "_backward", "requires_grad")

    def __init__(self, value, parents=(), backward=None, requires_grad=False):
        self.value = np.asarray(value, dtype=np.float64)
        self.grad = None
        self.parents = parents
        self._backward = backward
        self.requires_grad = requires_grad or any(p.requires_grad for p in parents)

    @property
    def shape(self):
        return self.value.shape

    @property
    def ndim(self):
        return self.value.ndim

    def __repr__(self):
        return f"Tensor(shape={self.value.shape}, requires_grad={self.requires_grad})"

    # -- operator sugar -------------------------------------------------
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(self, other)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(self, other)

    def __sub__(self, other):
        return add(self, mul(other, -1.0))

    def __rsub__(self, other):
        return add(mul(self, -1.0), other)

    def __neg__(self):
        return mul(self, -1.0)

    def __truediv__(self, other):
        if isinstance(other, Tensor):
            raise TypeError("tensor/tensor division is outside the op set")
        return mul(self, 1.0 / other)

    def __matmul__(self, other):
        return matmul(self, other)

    def backward(self):
        """Reverse pass from this (scalar) tensor through the tape."""
        if self.value.size != 1:
            raise ValueError("backward() requires a scalar root")
        order = _toposort(self)
        for t in order:
            t.grad = None
        self.grad = np.ones_like(self.value)
        for t in reversed(order):
            if t._backward is not None and t.grad is not None:
                t._backward(t.grad)


def _toposort(root):
    order = []
    seen = set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node.parents:
            if id(p) not in seen and p.requires_grad:
                stack.append((p, False))
    return order


def _accum(t, g):
    if not t.requires_grad:
        return
    if t.grad is None:
        t.grad = g.copy()
    else:
        t.grad += g


def as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(np.asarray(x, dtype=np.float64))


def constant(x):
    """Leaf tensor that never receives a gradient."""
    return Tensor(np.asarray(x, dtype=np.float64))


def parameter(x):
    """Leaf tensor that accumulates a gradient."""
    return Tensor(np.asarray(x, dtype=np.float64), requires_grad=True)


def stop_gradient(x):
    """Detach: same value, no path back through the tape."""
    x = as_tensor(x)
    return Tensor(x.value.copy())


# -- arithmetic ---------------------------------------------------------

def add(a, b):
    a, b = as_tensor(a), as_tensor(b)
    out = Tensor(a.value + b.value, parents=(a, b))

    def backward(g):
        _accum(a, _unbroadcast(g, a.shape))
        _accum(b, _unbroadcast(g, b.shape))

    out._backward = backward
    return out


def mul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    out = Tensor(a.value * b.value, parents=(a, b))

    def backward(g):
        _accum(a, _unbroadcast(g * b.value, a.shape))
        _accum(b, _unbroadcast(g * a.value, b.shape))

    out._backward = backward
    return out


def matmul(a, b):
    """Batched matrix product with numpy broadcasting on leading dims."""
    a, b = as_tensor(a), as_tensor(b)
    out = Tensor(a.value @ b.value, parents=(a, b))

    def backward(g):
        _accum(a, _unbroadcast(g @ np.swapaxes(b.value, -1, -2), a.shape))
        _accum(b, _unbroadcast(np.swapaxes(a.value, -1, -2) @ g, b.shape))

    out._backward = backward
    return out


# -- nonlinearities -----------------------------------------------------

def tanh(x):
    x = as_tensor(x)
    y = np.tanh(x.value)
    out = Tensor(y, parents=(x,))

    def backward(g):
        _accum(x, g * (1.0 - y * y))

    out._backward = backward
    return out


def gelu(x):
    """Exact gaussian error linear unit, 0.5 * x * (1 + erf(x / sqrt(2)))."""
    x = as_tensor(x)
    c = 0.5 * (1.0 + erf(x.value * _INV_SQRT2))
    out = Tensor(x.value * c, parents=(x,))

    def backward(g):
        pdf = _INV_SQRT2PI * np.exp(-0.5 * x.value * x.value)
        _accum(x, g * (c + x.value * pdf))

    out._backward = backward
    return out


def softmax(x, axis=-1):
    x = as_tensor(x)
    shifted = x.value - x.value.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=axis, keepdims=True)
    out = Tensor(y, parents=(x,))

    def backward(g):
        dot = (g * y).sum(axis=axis, keepdims=True)
        _accum(x, (g - dot) * y)

    out._backward = backward
    return out


def log_softmax(x, axis=-1):
    x = as_tensor(x)
    shifted = x.value - x.value.max(axis=axis, keepdims=True)
    logz = np.log(np.exp(shifted).sum(axis=axis, keepdims=True))
    y = shifted - logz
    out = Tensor(y, parents=(x,))

    def backward(g):
        _accum(x, g - np.exp(y) * g.sum(axis=axis, keepdims=True))

    out._backward = backward
    return out


def layer_norm(x, gain, bias, eps=1e-5):
    """Normalize over the last axis, then scale and shift."""
    x, gain, bias = as_tensor(x), as_tensor(gain), as_tensor(bias)
    n = x.shape[-1]
    mu = x.value.mean(axis=-1, keepdims=True)
    xc = x.value - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    out = Tensor(xhat * gain.value + bias.value, parents=(x, gain, bias))

    def backward(g):
        dxhat = g * gain.value
        term = n * dxhat - dxhat.sum(axis=-1, keepdims=True)
        term -= xhat * (dxhat * xhat).sum(axis=-1, keepdims=True)
        _accum(x, inv / n * term)
        reduce_axes = tuple(range(g.ndim - gain.value.ndim))
        _accum(gain, (g * xhat).sum(axis=reduce_axes))
        _accum(bias, g.sum(axis=reduce_axes))

    out._backward = backward
    return out


# -- reductions and structure -------------------------------------------

def tsum(x, axis=None, keepdims=False):
    x = as_tensor(x)
    out = Tensor(x.value.sum(axis=axis, keepdims=keepdims), parents=(x,))

    def backward(g):
        if axis is None:
            _accum(x, np.broadcast_to(g, x.shape).copy())
            return
        if not keepdims:
            g = np.expand_dims(g, axis)
        _accum(x, np.broadcast_to(g, x.shape).copy())

    out._backward = backward
    return out


def tmean(x, axis=None, keepdims=False):
    x = as_tensor(x)
    count = x.value.size if axis is None else x.shape[axis]
    return tsum(x, axis=axis, keepdims=keepdims) * (1.0 / count)


def mean_pool(x, mask=None, axis=1):
    """Mean over one axis; with a boolean `mask`, only masked-in entries count.

    `mask` is a constant array broadcastable to `x` with singleton feature
    dims, e.g. shape (B, N, 1) for x of shape (B, N, D).
    """
    x = as_tensor(x)
    if mask is None:
        return tmean(x, axis=axis)
    m = np.asarray(mask, dtype=np.float64)
    counts = m.sum(axis=axis, keepdims=False)
    counts = np.maximum(counts, 1.0)
    return tsum(mul(x, constant(m)), axis=axis) * constant(1.0 / counts)


def concat(tensors, axis=-1):
    tensors = [as_tensor(t) for t in tensors]
    values = [t.value for t in tensors]
    out = Tensor(np.concatenate(values, axis=axis), parents=tuple(tensors))
    sizes = [v.shape[axis] for v in values]
    splits = np.cumsum(sizes)[:-1]

    def backward(g):
        pieces = np.split(g, splits, axis=axis)
        for t, piece in zip(tensors, pieces):
            _accum(t, piece)

    out._backward = backward
    return out


def reshape(x, shape):
    x = as_tensor(x)
    out = Tensor(x.value.reshape(shape), parents=(x,))

    def backward(g):
        _accum(x, g.reshape(x.shape))

    out._backward = backward
    return out


def transpose(x, axes):
    x = as_tensor(x)
    out = Tensor(np.transpose(x.value, axes), parents=(x,))
    inverse = np.argsort(axes)

    def backward(g):
        _accum(x, np.transpose(g, inverse))

    out._backward = backward
    return out


# -- gradient checking ---------------------------------------------------

def grad_check(f, params, eps=1e-5):
    """Max relative error between analytic and central-difference gradients.

    `f` maps a dict of Tensors (one per entry of `params`) to a scalar
    Tensor. The relative error of a coordinate is |a - n| / max(1, |a|, |n|)
    so that near-zero gradients are compared absolutely.
    """
    tensors = {k: parameter(v) for k, v in params.items()}
    loss = f(tensors)
    loss.backward()
    analytic = {k: (t.grad if t.grad is not None else np.zeros_like(t.value))
                for k, t in tensors.items()}

    worst = 0.0
    for name in params:
        base = np.array(params[name], dtype=np.float64)
        numeric = np.zeros_like(base)
        flat = base.reshape(-1)
        num_flat = numeric.reshape(-1)

        def evaluate():
            inputs = {k: Tensor(base if k == name else params[k]) for k in params}
            return f(inputs).value.item()

        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            up = evaluate()
            flat[i] = orig - eps
            down = evaluate()
            flat[i] = orig
            num_flat[i] = (up - down) / (2.0 * eps)
        a = analytic[name]
        denom = np.maximum(1.0, np.maximum(np.abs(a), np.abs(numeric)))
        worst = max(worst, float(np.max(np.abs(a - numeric) / denom)))
    return worst
