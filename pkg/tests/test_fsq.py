"""Quantizer behavior: worked example, ranges, equivariance, snapping."""

import numpy as np
import pytest

from graphbridge import autodiff as ad
from graphbridge.errors import NumericError, PreconditionError
from graphbridge.fsq import (LatentSet, QuantizationSpec, enumerate_lattice,
                             nearest_lattice, quantize, ste_combine)

SPEC6 = QuantizationSpec((5,) * 6)


def test_worked_example():
    z = np.array([[-1.1, -1.7, -0.01, 0.1, 3.2, 0.6]])
    expected = np.array([[-2.0, -2.0, 0.0, 0.0, 2.0, 1.0]])
    assert np.array_equal(quantize(z, SPEC6), expected)


def test_zero_maps_to_zero():
    assert np.array_equal(quantize(np.zeros((3, 6)), SPEC6), np.zeros((3, 6)))


def test_saturation_bound():
    z = np.full((1, 6), 10.0)
    out = quantize(z, SPEC6)
    assert np.all(out == 2.0)  # (5/2) tanh < 2.5, rounds to at most 2


def test_output_range_random():
    rng = np.random.default_rng(0)
    spec = QuantizationSpec((3, 5, 7))
    z = rng.standard_normal((50, 3)) * 5
    out = quantize(z, spec)
    assert np.all(np.abs(out) <= spec.half_spans)
    assert np.array_equal(out, np.round(out))


def test_permutation_equivariance_exact():
    rng = np.random.default_rng(1)
    z = rng.standard_normal((8, 6))
    perm = rng.permutation(8)
    assert np.array_equal(quantize(z[perm], SPEC6), quantize(z, SPEC6)[perm])


def test_rejects_nonfinite():
    z = np.zeros((2, 6))
    z[0, 0] = np.nan
    with pytest.raises(NumericError):
        quantize(z, SPEC6)


def test_rejects_even_or_small_levels():
    with pytest.raises(PreconditionError):
        QuantizationSpec((4, 5))
    with pytest.raises(PreconditionError):
        QuantizationSpec((1,))


def test_enumerate_lattice_small():
    assert np.array_equal(enumerate_lattice(QuantizationSpec((3,))),
                          [[-1.0], [0.0], [1.0]])
    assert enumerate_lattice(QuantizationSpec((3, 3))).shape == (9, 2)
    assert enumerate_lattice(SPEC6).shape == (15625, 6)


def test_enumerate_lattice_cap():
    with pytest.raises(PreconditionError):
        enumerate_lattice(SPEC6, cap=100)


def test_enumerate_lattice_lexicographic_and_distinct():
    pts = enumerate_lattice(QuantizationSpec((3, 5)))
    assert len(np.unique(pts, axis=0)) == 15
    order = np.lexsort((pts[:, 1], pts[:, 0]))
    assert np.array_equal(order, np.arange(15))


def test_nearest_lattice_values():
    spec = QuantizationSpec((5,))
    vals = np.array([[1.4], [2.9], [-0.5], [0.5], [-2.6]])
    out = nearest_lattice(vals, spec)
    assert np.array_equal(out.ravel(), [1.0, 2.0, 0.0, 0.0, -2.0])


def test_nearest_lattice_idempotent_and_fixes_quantize():
    rng = np.random.default_rng(2)
    z = rng.standard_normal((20, 6)) * 3
    q = quantize(z, SPEC6)
    assert np.array_equal(nearest_lattice(q, SPEC6), q)
    snapped = nearest_lattice(z, SPEC6)
    assert np.array_equal(nearest_lattice(snapped, SPEC6), snapped)


def test_ste_forward_equals_quantized():
    rng = np.random.default_rng(3)
    raw = rng.standard_normal((4, 6))
    q = quantize(raw, SPEC6)
    out = ste_combine(ad.parameter(raw), q)
    assert np.array_equal(out.value, q)


def test_ste_identity_when_equal():
    raw = np.zeros((2, 6))
    out = ste_combine(ad.parameter(raw), raw)
    assert np.array_equal(out.value, raw)


def test_ste_gradient_is_identity():
    # finite differences of a loss through the STE should see the raw path
    rng = np.random.default_rng(4)
    raw = rng.standard_normal((2, 2))
    target = rng.standard_normal((2, 2))
    # a fixed "quantized" surrogate keeps the loss differentiable in raw
    q = np.round(raw)

    def loss(p):
        combined = p["raw"] + ad.constant(q - raw)  # same algebra as ste_combine
        diff = combined - ad.constant(target)
        return ad.tsum(diff * diff)

    tensors = {"raw": ad.parameter(raw)}
    out_t = ste_combine(tensors["raw"], q)
    diff = out_t - ad.constant(target)
    ad.tsum(diff * diff).backward()
    analytic = tensors["raw"].grad
    assert analytic is not None
    err = ad.grad_check(loss, {"raw": raw})
    assert err < 1e-6
    expected = 2.0 * (q - target)
    assert np.allclose(analytic, expected)


def test_ste_shape_mismatch():
    with pytest.raises(PreconditionError):
        ste_combine(ad.parameter(np.zeros((2, 6))), np.zeros((3, 6)))


def test_latent_set_on_lattice():
    ls = LatentSet(np.array([[1.0, -2.0, 0.0, 2.0, 1.0, 0.0]]), quantized=True)
    assert ls.on_lattice(SPEC6)
    assert not LatentSet(np.array([[0.5] * 6])).on_lattice(SPEC6)
