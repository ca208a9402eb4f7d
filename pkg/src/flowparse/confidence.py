"""Flow confidence from appearance-reconstruction residuals."""

import numpy as np

from .grid import InvalidArgument, as_image, warp

# below this mean residual the reconstruction counts as perfect
SIGMA_FLOOR = 1e-8
# keeps confidences strictly positive when exp() underflows
_MIN_CONFIDENCE = np.finfo(np.float32).tiny


def reconstruction_residual(target, source, flow):
    """Per-pixel L1 distance (summed over RGB) between ``target`` and the warped ``source``."""
    target = as_image(target)
    source = as_image(source)
    if target.shape != source.shape:
        raise InvalidArgument(f"target {target.shape[:2]} and source {source.shape[:2]} differ")
    recon = warp(source, flow)
    diff = np.abs(target.astype(np.float64) - recon.astype(np.float64))
    return diff.sum(axis=2).astype(np.float32)


def residual_to_confidence(residual):
    """``exp(-r / (2 sigma^2))`` with ``sigma`` the frame-wide mean residual."""
    r = np.asarray(residual, dtype=np.float64)
    if r.size == 0 or not np.all(np.isfinite(r)) or r.min() < 0:
        raise InvalidArgument("residuals must be finite and nonnegative")
    sigma = r.mean()
    if sigma < SIGMA_FLOOR:
        return np.ones(r.shape, dtype=np.float32)
    conf = np.exp(-r / (2.0 * sigma * sigma))
    return np.maximum(conf, _MIN_CONFIDENCE).astype(np.float32)


def apply_confidence(p, conf):
    """Scale each pixel's class vector by its confidence; not renormalised."""
    p = np.asarray(p, dtype=np.float32)
    conf = np.asarray(conf, dtype=np.float32)
    if conf.shape != p.shape[:2]:
        raise InvalidArgument(f"confidence {conf.shape} does not match map {p.shape[:2]}")
    return p * conf[..., None]
