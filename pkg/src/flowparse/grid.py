"""Grid types and the bilinear sampling / warping kernel.

Arrays follow one layout everywhere: ``(H, W, C)`` float32, row-major,
channels interleaved. Images have C == 3 with values in [0, 1]; probability
maps have C == K; flow fields have C == 2 holding ``(dx, dy)``.
"""

import numpy as np


class InvalidArgument(ValueError):
    """Raised when an input violates an operation's preconditions."""


def as_image(img):
    img = np.asarray(img, dtype=np.float32)
    if img.ndim != 3 or img.shape[2] != 3:
        raise InvalidArgument(f"image must be HxWx3, got shape {img.shape}")
    if img.shape[0] < 1 or img.shape[1] < 1:
        raise InvalidArgument("image must be non-empty")
    if not np.all(np.isfinite(img)) or img.min() < 0.0 or img.max() > 1.0:
        raise InvalidArgument("image values must be finite and within [0, 1]")
    return img


def as_probmap(p, atol=1e-5):
    p = np.asarray(p, dtype=np.float32)
    if p.ndim != 3 or p.shape[2] < 1:
        raise InvalidArgument(f"probability map must be HxWxK, got shape {p.shape}")
    if not np.all(np.isfinite(p)) or p.min() < 0.0:
        raise InvalidArgument("probabilities must be finite and nonnegative")
    if not np.allclose(p.sum(axis=2, dtype=np.float64), 1.0, atol=atol, rtol=0):
        raise InvalidArgument("per-pixel probabilities must sum to 1")
    return p


def as_labels(labels, num_classes=None):
    labels = np.asarray(labels)
    if labels.ndim != 2:
        raise InvalidArgument(f"label map must be HxW, got shape {labels.shape}")
    if labels.size and labels.min() < 0:
        raise InvalidArgument("labels must be nonnegative")
    if num_classes is not None and labels.size and labels.max() >= num_classes:
        raise InvalidArgument(f"label {int(labels.max())} out of range for K={num_classes}")
    return labels.astype(np.int64, copy=False)


def as_flow(flow, shape=None):
    flow = np.asarray(flow, dtype=np.float32)
    if flow.ndim != 3 or flow.shape[2] != 2:
        raise InvalidArgument(f"flow must be HxWx2, got shape {flow.shape}")
    if not np.all(np.isfinite(flow)):
        raise InvalidArgument("flow values must be finite")
    if shape is not None and flow.shape[:2] != tuple(shape[:2]):
        raise InvalidArgument(f"flow is {flow.shape[:2]} but source is {tuple(shape[:2])}")
    return flow


def _as_grid(src):
    src = np.asarray(src)
    if src.ndim == 2:
        src = src[:, :, None]
    if src.ndim != 3:
        raise InvalidArgument(f"expected HxW or HxWxC grid, got shape {src.shape}")
    return src


def _bilinear(src, x, y):
    """Vectorised bilinear lookup with border clamping, computed in float64."""
    h, w = src.shape[:2]
    x = np.clip(np.asarray(x, dtype=np.float64), 0.0, w - 1)
    y = np.clip(np.asarray(y, dtype=np.float64), 0.0, h - 1)
    x0 = np.floor(x).astype(np.int64)
    y0 = np.floor(y).astype(np.int64)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    fx = (x - x0)[..., None]
    fy = (y - y0)[..., None]
    s = src.astype(np.float64, copy=False)
    top = s[y0, x0] * (1.0 - fx) + s[y0, x1] * fx
    bottom = s[y1, x0] * (1.0 - fx) + s[y1, x1] * fx
    return top * (1.0 - fy) + bottom * fy


def sample_bilinear(src, x, y):
    """Sample ``src`` at the sub-pixel location ``(x, y)``.

    Coordinates outside ``[0, W-1] x [0, H-1]`` are clamped to the border.
    Returns one value per channel.
    """
    if not (np.isfinite(x) and np.isfinite(y)):
        raise InvalidArgument(f"non-finite sample coordinate ({x}, {y})")
    return _bilinear(_as_grid(src), x, y)


def warp(src, flow, probabilities=False):
    """Backward-warp ``src``: ``out[i] = src(x_i + dx_i, y_i + dy_i)``.

    With ``probabilities=True`` the input is a probability map and every
    output pixel is renormalised to sum to one.
    """
    grid = _as_grid(src)
    h, w, c = grid.shape
    flow = as_flow(flow, shape=grid.shape)
    ys, xs = np.mgrid[0:h, 0:w]
    out = _bilinear(grid, xs + flow[..., 0].astype(np.float64), ys + flow[..., 1].astype(np.float64))
    if probabilities:
        total = out.sum(axis=2, keepdims=True)
        out = np.divide(out, total, out=np.full_like(out, 1.0 / c), where=total > 0)
    out = out.astype(np.float32)
    return out if np.ndim(src) == 3 else out[:, :, 0]


def argmax_labels(p):
    """Per-pixel class index of the maximum probability; ties go to the lowest index."""
    return np.argmax(np.asarray(p), axis=2).astype(np.int64)
