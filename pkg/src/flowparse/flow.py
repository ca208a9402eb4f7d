"""Dense optical flow by correlation matching, coarse to fine.

A flow ``F = estimate_flow(a, b)`` maps pixel coordinates of ``a`` into ``b``:
``a(p)`` is matched with ``b(p + F(p))``, so ``warp(b, F)`` reconstructs ``a``.
"""

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .grid import InvalidArgument, as_image

# candidates within this distance of the best score count as tied
TIE_TOLERANCE = 1e-9
# patches with variance below this are treated as flat (score 0)
FLAT_VARIANCE = 1e-12
# a best score this close to 1 is an exact integer match
PERFECT_MATCH = 1e-9
# cap on gathered patch elements per chunk, keeps memory bounded on large frames
_CHUNK_ELEMENTS = 1 << 22


@dataclass(frozen=True)
class FlowConfig:
    search_radius: int = 4
    patch_radius: int = 3
    pyramid_levels: int = 3
    subpixel_refine: bool = True
    median_radius: int = 2

    def __post_init__(self):
        if self.search_radius < 1:
            raise InvalidArgument("search_radius must be >= 1")
        if self.patch_radius < 1:
            raise InvalidArgument("patch_radius must be >= 1")
        if self.pyramid_levels < 1:
            raise InvalidArgument("pyramid_levels must be >= 1")
        if self.median_radius < 0:
            raise InvalidArgument("median_radius must be >= 0")

    @property
    def total_search_range(self):
        return self.search_radius * (2 ** self.pyramid_levels - 1)


@dataclass(frozen=True)
class CorrelationVolume:
    """Similarity of every pixel of ``a`` against displaced pixels of ``b``.

    ``scores[y, x, j]`` belongs to displacement ``offsets[j] == (dx, dy)``.
    Offsets are ordered by squared length, then ``dx``, then ``dy``, which is
    the tie-break order used by :meth:`best`.
    """

    scores: np.ndarray
    offsets: np.ndarray

    def best(self):
        """Per-pixel best displacement as an ``(H, W, 2)`` integer array."""
        return self.offsets[_best_index(self.scores)]


def _ordered_offsets(radius):
    r = np.arange(-radius, radius + 1)
    dx, dy = np.meshgrid(r, r)
    dx, dy = dx.ravel(), dy.ravel()
    order = np.lexsort((dy, dx, dx * dx + dy * dy))
    return np.stack([dx[order], dy[order]], axis=1)


def _best_index(scores, allowed=None):
    s = scores if allowed is None else np.where(allowed, scores, -np.inf)
    top = s.max(axis=-1, keepdims=True)
    return np.argmax(s >= top - TIE_TOLERANCE, axis=-1)


def grayscale(img):
    return np.asarray(img, dtype=np.float64).mean(axis=2)


def _standardize(stack):
    """Zero-mean, unit-variance per patch along axis 0; flat patches become 0."""
    mean = stack.mean(axis=0)
    centered = stack - mean
    var = (centered * centered).mean(axis=0)
    flat = var < FLAT_VARIANCE
    scale = np.where(flat, 0.0, 1.0 / np.sqrt(np.where(flat, 1.0, var)))
    return centered * scale


def _patch_stack(g, patch_radius, margin=0):
    """Standardized border-clamped patches centred on every pixel of ``g``.

    With ``margin > 0`` the centres extend ``margin`` pixels past each border;
    the result has shape ``(n, H + 2*margin, W + 2*margin)``.
    """
    h, w = g.shape
    r = np.arange(-patch_radius, patch_radius + 1)
    ys = np.arange(-margin, h + margin)
    xs = np.arange(-margin, w + margin)
    rows = np.clip(ys[None, :] + r[:, None], 0, h - 1)
    cols = np.clip(xs[None, :] + r[:, None], 0, w - 1)
    stack = g[rows[:, None, :, None], cols[None, :, None, :]]
    return _standardize(stack.reshape(len(r) ** 2, len(ys), len(xs)))


def _match_scores(a, b, patch_radius, offsets, base=None):
    """Normalized patch correlation of ``a`` at p with ``b`` at ``p + base(p) + d``.

    Both patches are border-clamped, standardized, and multiplied elementwise;
    the score is the mean of those products.
    """
    h, w = a.shape
    ys, xs = np.mgrid[0:h, 0:w]
    if base is not None:
        ys = ys + base[..., 1]
        xs = xs + base[..., 0]
    reach = np.abs(offsets).max()
    margin = int(max(reach - min(ys.min(), xs.min()), ys.max() - h + 1 + reach,
                     xs.max() - w + 1 + reach, 0))
    za = _patch_stack(a, patch_radius)
    zb = _patch_stack(b, patch_radius, margin)
    n = za.shape[0]
    ys = ys + margin
    xs = xs + margin

    scores = np.empty((h, w, len(offsets)))
    for j, (dx, dy) in enumerate(offsets):
        scores[:, :, j] = np.einsum("nhw,nhw->hw", za, zb[:, ys + dy, xs + dx]) / n
    return scores


def _check_pair(a, b):
    a = as_image(a)
    b = as_image(b)
    if a.shape != b.shape:
        raise InvalidArgument(f"image sizes differ: {a.shape[:2]} vs {b.shape[:2]}")
    return a, b


def correlation_volume(a, b, cfg=FlowConfig()):
    a, b = _check_pair(a, b)
    offsets = _ordered_offsets(cfg.search_radius)
    scores = _match_scores(grayscale(a), grayscale(b), cfg.patch_radius, offsets)
    return CorrelationVolume(scores, offsets)


def _downsample(g):
    h, w = g.shape
    g = np.pad(g, ((0, h % 2), (0, w % 2)), mode="edge")
    return 0.25 * (g[0::2, 0::2] + g[1::2, 0::2] + g[0::2, 1::2] + g[1::2, 1::2])


def _upsample_flow(flow, shape):
    up = np.repeat(np.repeat(flow, 2, axis=0), 2, axis=1)
    return 2 * up[: shape[0], : shape[1]]


def _parabola_vertex(left, center, right):
    """Vertex offset of the parabola through (-1, left), (0, center), (1, right)."""
    curv = left - 2.0 * center + right
    ok = curv < 0
    off = np.where(ok, 0.5 * (left - right) / np.where(ok, curv, -1.0), 0.0)
    return np.clip(off, -0.5, 0.5)


_AXIS_NEIGHBOURS = np.array([(-1, 0), (1, 0), (0, -1), (0, 1)])


def _refine(ga, gb, patch_radius, flow, center):
    """Sub-pixel offsets from parabolas through the best score and its 4 axis neighbours."""
    left, right, up, down = np.moveaxis(_match_scores(ga, gb, patch_radius, _AXIS_NEIGHBOURS, flow), -1, 0)
    off = np.stack([_parabola_vertex(left, center, right), _parabola_vertex(up, center, down)], axis=-1)
    # an exact integer match needs no sub-pixel correction
    return np.where((center >= 1.0 - PERFECT_MATCH)[..., None], 0.0, off)


def estimate_flow(a, b, cfg=FlowConfig()):
    """Coarse-to-fine flow from ``a`` to ``b`` (median post-filter not applied)."""
    a, b = _check_pair(a, b)
    h, w = a.shape[:2]
    patch = 2 * cfg.patch_radius + 1
    if h < patch or w < patch:
        raise InvalidArgument(f"image {h}x{w} is smaller than one {patch}x{patch} patch")

    pyramid = [(grayscale(a), grayscale(b))]
    while len(pyramid) < cfg.pyramid_levels:
        ga, gb = pyramid[-1]
        # levels where most patches hit the clamped border mislead every finer level
        if min(ga.shape) // 2 < 3 * patch:
            break
        pyramid.append((_downsample(ga), _downsample(gb)))

    radius = cfg.search_radius
    offsets = _ordered_offsets(radius)
    flow = None
    for level in range(len(pyramid) - 1, -1, -1):
        ga, gb = pyramid[level]
        base = np.zeros(ga.shape + (2,), dtype=np.int64) if flow is None else _upsample_flow(flow, ga.shape)
        scores = _match_scores(ga, gb, cfg.patch_radius, offsets, base)
        best = _best_index(scores)
        flow = base + offsets[best]
        if level == 0 and cfg.subpixel_refine:
            center = np.take_along_axis(scores, best[..., None], axis=2)[..., 0]
            return (flow + _refine(ga, gb, cfg.patch_radius, flow, center)).astype(np.float32)
        if level > 0:
            # coarse outliers would otherwise be doubled into every finer level
            flow = np.stack([ndimage.median_filter(flow[..., c], size=3, mode="nearest")
                             for c in range(2)], axis=-1)
    return flow.astype(np.float32)


def median_filter_flow(flow, radius):
    """Per-component median over a ``(2r+1)^2`` border-clamped window."""
    flow = np.asarray(flow, dtype=np.float32)
    if radius < 0:
        raise InvalidArgument("median radius must be >= 0")
    if radius == 0:
        return flow.copy()
    size = 2 * radius + 1
    return np.stack(
        [ndimage.median_filter(flow[..., c], size=size, mode="nearest") for c in range(2)],
        axis=-1,
    )
