import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from flowparse.grid import InvalidArgument, argmax_labels, sample_bilinear, warp


def brute_bilinear(grid, x, y):
    """Sum over the four neighbours with weights (1-|x'-xq|)(1-|y'-yq|), border-clamped."""
    h, w = grid.shape[:2]
    x = min(max(x, 0.0), w - 1)
    y = min(max(y, 0.0), h - 1)
    total = np.zeros(grid.shape[2])
    for qy in {int(np.floor(y)), min(int(np.floor(y)) + 1, h - 1)}:
        for qx in {int(np.floor(x)), min(int(np.floor(x)) + 1, w - 1)}:
            wgt = max(0.0, 1 - abs(x - qx)) * max(0.0, 1 - abs(y - qy))
            total += grid[qy, qx] * wgt
    return total


def test_sample_midpoint():
    grid = np.array([[0.0, 10.0]])
    assert sample_bilinear(grid, 0.5, 0.0)[0] == pytest.approx(5.0)


def test_sample_lattice_point_returns_stored_value(rng):
    grid = rng.random((4, 5, 3))
    assert np.array_equal(sample_bilinear(grid, 3.0, 2.0), grid[2, 3])


def test_sample_clamps_outside():
    grid = np.array([[0.0, 10.0]])
    assert sample_bilinear(grid, -3.0, 0.0)[0] == 0.0
    assert sample_bilinear(grid, 7.5, -2.0)[0] == 10.0


@pytest.mark.parametrize("x, y", [(np.nan, 0.0), (0.0, np.inf), (-np.inf, 1.0)])
def test_sample_rejects_non_finite(x, y):
    with pytest.raises(InvalidArgument):
        sample_bilinear(np.zeros((2, 2)), x, y)


def test_sample_matches_brute_force(rng):
    grid = rng.random((5, 6, 2))
    for x, y in rng.uniform(-2, 8, size=(50, 2)):
        np.testing.assert_allclose(sample_bilinear(grid, x, y), brute_bilinear(grid, x, y), atol=1e-12)


def test_warp_zero_flow_identity(rng):
    img = rng.random((7, 9, 3)).astype(np.float32)
    assert np.array_equal(warp(img, np.zeros((7, 9, 2))), img)


def test_warp_shift_reconstructs_original(rng):
    original = rng.random((10, 12, 3)).astype(np.float32)
    shifted = np.empty_like(original)
    shifted[:, 2:] = original[:, :-2]
    shifted[:, :2] = original[:, :1]
    flow = np.zeros((10, 12, 2), dtype=np.float32)
    flow[..., 0] = 2.0
    out = warp(shifted, flow)
    np.testing.assert_array_equal(out[:, :-2], original[:, :-2])


def test_warp_probmap_half_pixel():
    p = np.array([[[0.2, 0.8], [0.6, 0.4]],
                  [[0.5, 0.5], [1.0, 0.0]]], dtype=np.float32)
    flow = np.zeros((2, 2, 2), dtype=np.float32)
    flow[0, 0] = (0.5, 0.0)
    out = warp(p, flow, probabilities=True)
    mix = 0.5 * np.array([0.2, 0.8]) + 0.5 * np.array([0.6, 0.4])
    np.testing.assert_allclose(out[0, 0], mix / mix.sum(), atol=1e-7)
    np.testing.assert_allclose(out.sum(axis=2), 1.0, atol=1e-6)


def test_warp_shape_mismatch():
    with pytest.raises(InvalidArgument):
        warp(np.zeros((4, 4, 3)), np.zeros((4, 5, 2)))


def test_argmax_examples():
    p = np.array([[[0.1, 0.7, 0.2], [0.5, 0.5, 0.0], [1 / 3, 1 / 3, 1 / 3]]])
    assert argmax_labels(p).tolist() == [[1, 0, 0]]


images = arrays(np.float32, st.tuples(st.integers(1, 6), st.integers(1, 6), st.just(3)),
                elements=st.floats(0, 1, width=32))


@settings(max_examples=60, deadline=None)
@given(images, st.data())
def test_warp_stays_in_source_range(img, data):
    h, w = img.shape[:2]
    flow = data.draw(arrays(np.float32, (h, w, 2), elements=st.floats(-10, 10, width=32)))
    out = warp(img, flow)
    assert out.min() >= img.min() and out.max() <= img.max()


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2 ** 32 - 1), st.floats(-3, 3), st.floats(-3, 3),
       st.floats(-5, 10), st.floats(-5, 10))
def test_sample_is_linear(seed, a, b, x, y):
    r = np.random.default_rng(seed)
    A, B = r.random((4, 5, 2)), r.random((4, 5, 2))
    lhs = sample_bilinear(a * A + b * B, x, y)
    rhs = a * sample_bilinear(A, x, y) + b * sample_bilinear(B, x, y)
    np.testing.assert_allclose(lhs, rhs, atol=1e-6)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2 ** 32 - 1), st.floats(0.01, 100))
def test_argmax_scale_invariant(seed, scale):
    p = np.random.default_rng(seed).random((3, 4, 5))
    assert np.array_equal(argmax_labels(p), argmax_labels(p * scale))
