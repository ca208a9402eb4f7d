"""Deterministic synthetic videos: textured sprites translating over a textured background.

Every frame comes with its label map and the per-pixel velocity of the
topmost sprite (zero on background), so exact ground-truth flow is known.
"""

from dataclasses import dataclass, field

import numpy as np

from .grid import InvalidArgument, as_labels
from .pipeline import VideoSequence

SHAPES = ("rectangle", "ellipse")


@dataclass(frozen=True)
class Sprite:
    shape: str = "rectangle"
    class_index: int = 1
    size: tuple = (16, 16)
    velocity: tuple = (1.0, 0.0)
    color: tuple = (0.8, 0.2, 0.2)
    texture_amplitude: float = 0.3
    position: tuple = None  # top-left at frame 0; drawn from the seed when None


@dataclass(frozen=True)
class SynthConfig:
    width: int = 80
    height: int = 80
    frames: int = 12
    num_classes: int = 4
    sprites: tuple = field(default_factory=tuple)
    background_seed: int = 0
    background_amplitude: float = 0.6
    noise_sigma: float = 0.0
    seed: int = 0
    labeled_index: int = None

    def validate(self):
        if self.width < 1 or self.height < 1 or self.frames < 1:
            raise InvalidArgument("width, height and frames must be positive")
        if self.num_classes < 2:
            raise InvalidArgument("num_classes must be at least 2")
        if self.noise_sigma < 0:
            raise InvalidArgument("noise_sigma must be nonnegative")
        if self.labeled_index is not None and not 0 <= self.labeled_index < self.frames:
            raise InvalidArgument(f"labeled_index {self.labeled_index} outside [0, {self.frames})")
        for i, sp in enumerate(self.sprites):
            if sp.shape not in SHAPES:
                raise InvalidArgument(f"sprite {i}: unknown shape {sp.shape!r}")
            if not 1 <= sp.class_index < self.num_classes:
                raise InvalidArgument(f"sprite {i}: class {sp.class_index} not in [1, {self.num_classes - 1}]")
            w, h = sp.size
            if w < 1 or h < 1:
                raise InvalidArgument(f"sprite {i}: size must be positive")
            if w > self.width or h > self.height:
                raise InvalidArgument(f"sprite {i}: size {w}x{h} exceeds frame {self.width}x{self.height}")


def value_noise(height, width, rng, cells=(1, 2, 4, 8), weights=(0.2, 0.35, 0.3, 0.15)):
    """Multi-octave value noise in [0, 1], shape ``(H, W, 3)``."""
    out = np.zeros((height, width, 3))
    ys = np.arange(height)[:, None]
    xs = np.arange(width)[None, :]
    for cell, wgt in zip(cells, weights):
        grid = rng.random((height // cell + 2, width // cell + 2, 3))
        gy, gx = ys / cell, xs / cell
        y0, x0 = np.floor(gy).astype(int), np.floor(gx).astype(int)
        fy, fx = (gy - y0)[..., None], (gx - x0)[..., None]
        top = grid[y0, x0] * (1 - fx) + grid[y0, x0 + 1] * fx
        bot = grid[y0 + 1, x0] * (1 - fx) + grid[y0 + 1, x0 + 1] * fx
        out += wgt * (top * (1 - fy) + bot * fy)
    return out / sum(weights)


def quantize(img):
    """Snap to 8-bit levels so PNG round-trips are lossless."""
    return (np.rint(np.clip(img, 0.0, 1.0) * 255.0) / 255.0).astype(np.float32)


def _sprite_positions(cfg):
    rng = np.random.default_rng([cfg.seed, 7919])
    positions = []
    for sp in cfg.sprites:
        w, h = sp.size
        drawn = (rng.integers(0, cfg.width - w + 1), rng.integers(0, cfg.height - h + 1))
        positions.append(tuple(float(v) for v in (sp.position if sp.position is not None else drawn)))
    return positions


def _sprite_mask(sp, lx, ly):
    w, h = sp.size
    inside = (lx >= 0) & (lx < w) & (ly >= 0) & (ly < h)
    if sp.shape == "ellipse":
        cx, cy = (w - 1) / 2.0, (h - 1) / 2.0
        inside &= ((lx - cx) / (w / 2.0)) ** 2 + ((ly - cy) / (h / 2.0)) ** 2 <= 1.0
    return inside


def _lookup(tex, lx, ly):
    h, w = tex.shape[:2]
    lx = np.clip(lx, 0, w - 1)
    ly = np.clip(ly, 0, h - 1)
    x0 = np.minimum(np.floor(lx).astype(int), w - 2)
    y0 = np.minimum(np.floor(ly).astype(int), h - 2)
    fx, fy = (lx - x0)[..., None], (ly - y0)[..., None]
    top = tex[y0, x0] * (1 - fx) + tex[y0, x0 + 1] * fx
    bot = tex[y0 + 1, x0] * (1 - fx) + tex[y0 + 1, x0 + 1] * fx
    return top * (1 - fy) + bot * fy


def generate(cfg):
    """Render ``cfg`` into a :class:`VideoSequence` with labels and velocity fields."""
    cfg.validate()
    H, W = cfg.height, cfg.width
    bg_rng = np.random.default_rng(cfg.background_seed)
    background = 0.5 + cfg.background_amplitude * (value_noise(H, W, bg_rng) - 0.5)

    textures = []
    for i, sp in enumerate(cfg.sprites):
        w, h = sp.size
        noise = value_noise(h + 2, w + 2, np.random.default_rng([cfg.seed, i]))
        textures.append(np.asarray(sp.color, dtype=np.float64) + sp.texture_amplitude * (noise - 0.5))
    positions = _sprite_positions(cfg)

    ys, xs = np.mgrid[0:H, 0:W].astype(np.float64)
    frames, labels, velocities = [], [], []
    for t in range(cfg.frames):
        img = background.copy()
        lab = np.zeros((H, W), dtype=np.int64)
        vel = np.zeros((H, W, 2), dtype=np.float32)
        for sp, tex, (px, py) in zip(cfg.sprites, textures, positions):
            lx = xs - (px + sp.velocity[0] * t)
            ly = ys - (py + sp.velocity[1] * t)
            mask = _sprite_mask(sp, lx, ly)
            img[mask] = _lookup(tex, lx[mask], ly[mask])
            lab[mask] = sp.class_index
            vel[mask] = sp.velocity
        if cfg.noise_sigma > 0:
            img = img + np.random.default_rng([cfg.seed, 104729, t]).normal(0.0, cfg.noise_sigma, img.shape)
        frames.append(quantize(img))
        labels.append(lab)
        velocities.append(vel)

    labeled = cfg.frames // 2 if cfg.labeled_index is None else cfg.labeled_index
    return VideoSequence(
        frames=frames,
        labeled_index=labeled,
        gt_labels=labels[labeled],
        labels=labels,
        velocities=velocities,
    )


def flow_between(seq, t, src):
    """Ground-truth flow mapping frame ``t`` coordinates into frame ``src``.

    Exact wherever the pixel's owner is visible in both frames.
    """
    return ((src - t) * seq.velocities[t]).astype(np.float32)


def corrupt_probmap(gt, error_rate, seed, num_classes, confidence=0.9):
    """Soft one-hot map of ``gt`` with a seeded fraction of pixels flipped to a wrong class."""
    if not 0.0 <= error_rate < 1.0:
        raise InvalidArgument("error_rate must lie in [0, 1)")
    gt = as_labels(gt, num_classes)
    rng = np.random.default_rng(seed)
    flip = rng.random(gt.shape) < error_rate
    wrong = (gt + rng.integers(1, num_classes, size=gt.shape)) % num_classes
    chosen = np.where(flip, wrong, gt)
    rest = (1.0 - confidence) / (num_classes - 1)
    p = np.full(gt.shape + (num_classes,), rest, dtype=np.float32)
    np.put_along_axis(p, chosen[..., None], np.float32(confidence), axis=2)
    return p
