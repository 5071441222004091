"""Gradient correctness of the reverse-mode op set vs central differences."""

import numpy as np
import pytest

from graphbridge import autodiff as ad


def fd_check(f, params, eps=1e-6):
    return ad.grad_check(f, params, eps=eps)


def test_quadratic_toy_loss():
    # ||W x||^2 with fixed x; the canonical smoke test
    rng = np.random.default_rng(0)
    x = rng.standard_normal((3, 1))

    def loss(p):
        y = ad.matmul(p["W"], ad.constant(x))
        return ad.tsum(y * y)

    err = fd_check(loss, {"W": rng.standard_normal((4, 3))})
    assert err < 1e-6


def test_unused_parameter_gets_zero_gradient():
    rng = np.random.default_rng(1)

    def loss(p):
        return ad.tsum(p["a"] * p["a"])

    tensors = {"a": ad.parameter(rng.standard_normal(3)),
               "b": ad.parameter(rng.standard_normal(3))}
    loss(tensors).backward()
    assert tensors["b"].grad is None
    assert np.allclose(tensors["a"].grad, 2 * tensors["a"].value)


@pytest.mark.parametrize("op_name", [
    "add", "mul", "matmul", "tanh", "gelu", "softmax", "log_softmax",
    "layer_norm", "sum", "mean", "concat", "reshape", "transpose",
    "mean_pool",
])
def test_op_gradients(op_name):
    rng = np.random.default_rng(hash(op_name) % 2**32)
    a = rng.standard_normal((2, 3, 4))
    b = rng.standard_normal((2, 3, 4))

    if op_name == "add":
        f = lambda p: ad.tsum(ad.tanh(p["a"] + p["b"]))
        params = {"a": a, "b": rng.standard_normal((3, 4))}  # broadcast path
    elif op_name == "mul":
        f = lambda p: ad.tsum(ad.tanh(p["a"] * p["b"]))
        params = {"a": a, "b": rng.standard_normal(4)}
    elif op_name == "matmul":
        f = lambda p: ad.tsum(ad.tanh(ad.matmul(p["a"], p["b"])))
        params = {"a": a, "b": rng.standard_normal((4, 2))}
    elif op_name == "tanh":
        f = lambda p: ad.tsum(ad.tanh(p["a"]) * ad.constant(b))
        params = {"a": a}
    elif op_name == "gelu":
        f = lambda p: ad.tsum(ad.gelu(p["a"]) * ad.constant(b))
        params = {"a": a}
    elif op_name == "softmax":
        f = lambda p: ad.tsum(ad.softmax(p["a"], axis=-1) * ad.constant(b))
        params = {"a": a}
    elif op_name == "log_softmax":
        f = lambda p: ad.tsum(ad.log_softmax(p["a"], axis=-1) * ad.constant(b))
        params = {"a": a}
    elif op_name == "layer_norm":
        f = lambda p: ad.tsum(
            ad.layer_norm(p["a"], p["g"], p["b"]) * ad.constant(b))
        params = {"a": a, "g": rng.standard_normal(4), "b": rng.standard_normal(4)}
    elif op_name == "sum":
        f = lambda p: ad.tsum(ad.tanh(ad.tsum(p["a"], axis=1)))
        params = {"a": a}
    elif op_name == "mean":
        f = lambda p: ad.tsum(ad.tanh(ad.tmean(p["a"], axis=0)))
        params = {"a": a}
    elif op_name == "concat":
        f = lambda p: ad.tsum(ad.tanh(ad.concat([p["a"], p["b"]], axis=-1)))
        params = {"a": a, "b": b}
    elif op_name == "reshape":
        f = lambda p: ad.tsum(ad.tanh(ad.reshape(p["a"], (2, 12))))
        params = {"a": a}
    elif op_name == "transpose":
        f = lambda p: ad.tsum(ad.tanh(ad.transpose(p["a"], (2, 0, 1))) * ad.constant(
            np.transpose(b, (2, 0, 1))))
        params = {"a": a}
    elif op_name == "mean_pool":
        mask = np.array([[1, 1, 0], [1, 0, 0]], dtype=float)[:, :, None]
        f = lambda p: ad.tsum(ad.tanh(ad.mean_pool(p["a"], mask, axis=1)))
        params = {"a": a}
    else:
        raise AssertionError(op_name)

    assert fd_check(f, params) < 1e-6


def test_stop_gradient_blocks_backward():
    a = ad.parameter(np.array([1.0, 2.0]))
    out = ad.tsum(ad.stop_gradient(a) * a)
    out.backward()
    assert np.allclose(a.grad, a.value)  # only the live branch contributes


def test_broadcast_unbroadcast_shapes():
    a = ad.parameter(np.ones((1, 4)))
    b = ad.parameter(np.ones((3, 1)))
    out = ad.tsum(a + b)
    out.backward()
    assert a.grad.shape == (1, 4) and np.allclose(a.grad, 3.0)
    assert b.grad.shape == (3, 1) and np.allclose(b.grad, 4.0)


def test_backward_requires_scalar_root():
    a = ad.parameter(np.ones(3))
    with pytest.raises(ValueError):
        (a * 2.0).backward()


def test_shared_subexpression_accumulates():
    a = ad.parameter(np.array([3.0]))
    out = ad.tsum(a * a)
    out.backward()
    assert np.allclose(a.grad, 6.0)
