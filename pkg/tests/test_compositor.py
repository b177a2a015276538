import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from stencilforge.compositor import (
    composite,
    layer_affine_decomposition,
    over,
    palette_weight_maps,
)


def test_over():
    np.testing.assert_array_equal(over((0.2, 0.2, 0.2), (1, 0, 0), 1), (1, 0, 0))
    np.testing.assert_array_equal(over((0.2, 0.2, 0.2), (1, 0, 0), 0), (0.2, 0.2, 0.2))
    np.testing.assert_array_equal(over((0, 0, 0), (1, 1, 1), 0.5), (0.5, 0.5, 0.5))


def test_composite_constant_cases():
    out = composite(np.ones((1, 3, 4)), [[0, 0, 0], [0.3, 0.6, 0.9]])
    np.testing.assert_allclose(out, np.broadcast_to([0.3, 0.6, 0.9], (3, 4, 3)))
    out = composite(np.zeros((2, 2, 2)), [[0.1] * 3, [1, 0, 0], [0, 1, 0]])
    np.testing.assert_allclose(out, 0.1)


def test_composite_hand_recursion():
    stack = np.full((2, 1, 1), 0.5)
    out = composite(stack, np.array([0.0, 1.0, 0.0]))
    assert out[0, 0, 0] == pytest.approx(0.25, abs=1e-15)


def test_composite_mismatch():
    with pytest.raises(ValueError):
        composite(np.zeros((2, 2, 2)), np.zeros((2, 3)))
    with pytest.raises(ValueError):
        composite(np.full((1, 2, 2), 1.2), np.zeros((2, 3)))


def test_affine_trivial_cases(rng):
    pal = rng.random((2, 3))
    slope, icpt = layer_affine_decomposition(rng.random((1, 3, 3)), pal, 1)
    np.testing.assert_allclose(slope, np.broadcast_to(pal[1] - pal[0], (3, 3, 3)))
    np.testing.assert_allclose(icpt, np.broadcast_to(pal[0], (3, 3, 3)))
    with pytest.raises(IndexError):
        layer_affine_decomposition(rng.random((2, 2, 2)), rng.random((3, 3)), 3)
    with pytest.raises(IndexError):
        layer_affine_decomposition(rng.random((2, 2, 2)), rng.random((3, 3)), 0)


def test_weight_maps_trivial():
    w = palette_weight_maps(np.zeros((3, 2, 2)))
    np.testing.assert_array_equal(w[0], 1)
    np.testing.assert_array_equal(w[1:], 0)
    w = palette_weight_maps(np.ones((3, 2, 2)))
    np.testing.assert_array_equal(w[3], 1)
    np.testing.assert_array_equal(w[:3], 0)


@settings(max_examples=60, deadline=None)
@given(L=st.integers(1, 4), H=st.integers(1, 4), W=st.integers(1, 4), seed=st.integers(0, 2**32 - 1))
def test_affine_and_weights_reproduce_composite(L, H, W, seed):
    r = np.random.default_rng(seed)
    stack = r.random((L, H, W))
    pal = r.random((L + 1, 3))
    ref = composite(stack, pal)
    for l in range(1, L + 1):
        slope, icpt = layer_affine_decomposition(stack, pal, l)
        np.testing.assert_allclose(slope * stack[l - 1][:, :, None] + icpt, ref, atol=1e-12, rtol=0)
    w = palette_weight_maps(stack)
    np.testing.assert_allclose(w.sum(axis=0), 1.0, atol=1e-12, rtol=0)
    assert w.min() >= 0
    np.testing.assert_allclose(np.einsum("ihw,ic->hwc", w, pal), ref, atol=1e-12, rtol=0)
