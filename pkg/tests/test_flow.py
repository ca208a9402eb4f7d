import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import shifted_pair, textured
from flowparse.flow import FlowConfig, correlation_volume, estimate_flow, median_filter_flow
from flowparse.grid import InvalidArgument, warp

SMALL = FlowConfig(search_radius=2, patch_radius=1, pyramid_levels=1)


def ncc_oracle(a, b, x, y, dx, dy, r):
    """Score of one pixel and one displacement, computed with explicit loops."""
    ga, gb = a.astype(np.float64).mean(axis=2), b.astype(np.float64).mean(axis=2)
    h, w = ga.shape

    def patch(g, cx, cy):
        vals = [g[min(max(cy + j, 0), h - 1), min(max(cx + i, 0), w - 1)]
                for j in range(-r, r + 1) for i in range(-r, r + 1)]
        v = np.array(vals, dtype=np.float64)
        sd = v.std()
        return (v - v.mean()) / sd if sd * sd >= 1e-12 else np.zeros_like(v)

    return float(np.mean(patch(ga, x, y) * patch(gb, x + dx, y + dy)))


def test_correlation_matches_loop_oracle(rng):
    a = rng.random((9, 11, 3)).astype(np.float32)
    b = rng.random((9, 11, 3)).astype(np.float32)
    vol = correlation_volume(a, b, SMALL)
    for _ in range(40):
        y, x, j = rng.integers(9), rng.integers(11), rng.integers(len(vol.offsets))
        dx, dy = vol.offsets[j]
        assert vol.scores[y, x, j] == pytest.approx(ncc_oracle(a, b, x, y, dx, dy, 1), abs=1e-9)


def test_offsets_ordered_for_tie_break():
    offsets = correlation_volume(np.zeros((5, 5, 3)), np.zeros((5, 5, 3)), SMALL).offsets
    assert tuple(offsets[0]) == (0, 0)
    keys = [(dx * dx + dy * dy, dx, dy) for dx, dy in offsets]
    assert keys == sorted(keys)
    assert len(offsets) == 25


def test_self_correlation_peaks_at_zero():
    a = textured(24, 24, seed=3)
    vol = correlation_volume(a, a, SMALL)
    assert np.all(vol.scores[..., 0] >= vol.scores.max(axis=2) - 1e-12)
    assert np.all(vol.best() == 0)


def test_constant_images_give_equal_scores():
    a = np.full((8, 8, 3), 0.4)
    vol = correlation_volume(a, a, SMALL)
    assert np.ptp(vol.scores) == 0
    assert np.all(vol.best() == 0)


def test_unit_shift_best_offset():
    a, b = shifted_pair(24, 24, 1, 0, seed=1)
    best = correlation_volume(a, b, SMALL).best()
    assert np.all(best[4:-4, 4:-4] == (1, 0))


def test_dimension_mismatch():
    with pytest.raises(InvalidArgument):
        correlation_volume(np.zeros((8, 8, 3)), np.zeros((8, 9, 3)))
    with pytest.raises(InvalidArgument):
        estimate_flow(np.zeros((8, 8, 3)), np.zeros((9, 8, 3)))


def test_image_smaller_than_patch():
    with pytest.raises(InvalidArgument):
        estimate_flow(np.zeros((5, 5, 3)), np.zeros((5, 5, 3)))


def test_identical_images_zero_flow():
    a = textured(40, 40, seed=5)
    assert np.all(estimate_flow(a, a) == 0)


def test_shift_2_1_endpoint_error():
    a, b = shifted_pair(64, 64, 2, 1, seed=2)
    flow = estimate_flow(a, b)
    epe = np.hypot(flow[..., 0] - 2, flow[..., 1] - 1)[8:-8, 8:-8]
    assert epe.mean() < 0.5


def test_large_shift_uses_pyramid():
    a, b = shifted_pair(64, 64, -6, 5, seed=4)
    flow = estimate_flow(a, b)
    epe = np.hypot(flow[..., 0] + 6, flow[..., 1] - 5)[8:-8, 8:-8]
    assert epe.mean() < 0.5
    single = estimate_flow(a, b, FlowConfig(pyramid_levels=1))
    assert np.abs(single).max() <= 4.5


def test_half_pixel_shift():
    big = textured(80, 80, seed=9)
    b = warp(big, np.full((80, 80, 2), (-0.5, 0.0), dtype=np.float32))
    flow = estimate_flow(big[8:72, 8:72], b[8:72, 8:72])[8:-8, 8:-8]
    assert abs(flow[..., 0].mean() - 0.5) < 0.25
    assert flow[..., 0].min() >= 0 and flow[..., 0].max() <= 1


def test_no_refinement_gives_integers():
    big = textured(80, 80, seed=9)
    b = warp(big, np.full((80, 80, 2), (-0.5, 0.0), dtype=np.float32))
    flow = estimate_flow(big, b, FlowConfig(subpixel_refine=False))
    assert np.array_equal(flow, np.round(flow))


def test_flow_is_deterministic():
    a, b = shifted_pair(48, 48, 3, -2, seed=6)
    assert np.array_equal(estimate_flow(a, b), estimate_flow(a, b))


@pytest.mark.parametrize("kwargs", [dict(search_radius=0), dict(patch_radius=0),
                                    dict(pyramid_levels=0), dict(median_radius=-1)])
def test_flow_config_validation(kwargs):
    with pytest.raises(InvalidArgument):
        FlowConfig(**kwargs)


def test_total_search_range():
    assert FlowConfig().total_search_range == 28
    assert FlowConfig(pyramid_levels=1).total_search_range == 4


def test_median_radius_zero_is_identity(rng):
    flow = rng.normal(size=(6, 7, 2)).astype(np.float32)
    assert np.array_equal(median_filter_flow(flow, 0), flow)


def test_median_removes_outlier():
    flow = np.full((7, 7, 2), 1.5, dtype=np.float32)
    flow[3, 3] = (9.0, -4.0)
    assert np.all(median_filter_flow(flow, 1) == 1.5)


@settings(max_examples=30, deadline=None)
@given(st.floats(-20, 20, width=32), st.floats(-20, 20, width=32), st.integers(0, 4))
def test_median_keeps_constant_flow(dx, dy, radius):
    flow = np.empty((6, 5, 2), dtype=np.float32)
    flow[...] = (dx, dy)
    assert np.array_equal(median_filter_flow(flow, radius), flow)
