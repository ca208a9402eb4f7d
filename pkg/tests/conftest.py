import numpy as np
import pytest
from scipy import ndimage

from flowparse.synth import SynthConfig, generate, quantize

# acceptance outcomes, printed once at the end of the run
ACCEPTANCE_RESULTS = {}


def textured(height, width, seed=0):
    """A background-only synthetic frame: dense multi-scale texture."""
    return generate(SynthConfig(width=width, height=height, frames=1, background_seed=seed)).frames[0]


def blurred_noise(height, width, seed=0):
    r = np.random.default_rng(seed)
    x = r.random((height, width, 3))
    x = np.stack([ndimage.gaussian_filter(x[..., c], 1.2) for c in range(3)], axis=-1)
    return quantize((x - x.min()) / (x.max() - x.min()))


def blobs(height, width, seed=0):
    """Flat grey canvas covered with random coloured discs (large flat areas)."""
    r = np.random.default_rng(seed)
    img = np.full((height, width, 3), 0.5)
    yy, xx = np.mgrid[:height, :width]
    for _ in range(height * width // 40):
        cx, cy, rad = r.uniform(0, width), r.uniform(0, height), r.uniform(1.5, 4)
        img[(xx - cx) ** 2 + (yy - cy) ** 2 < rad ** 2] = r.random(3)
    return quantize(img)


TEXTURES = {"value_noise": textured, "blurred_noise": blurred_noise, "blobs": blobs}


def shifted_pair(height, width, dx, dy, seed=0, pad=8, texture=textured):
    """``(a, b)`` with ``b(p + (dx, dy)) == a(p)`` and no wrap-around."""
    big = texture(height + 2 * pad, width + 2 * pad, seed)
    a = big[pad:pad + height, pad:pad + width]
    b = big[pad - dy:pad - dy + height, pad - dx:pad - dx + width]
    return a, b


def brute_metrics(pred, gt, k, background=0):
    """Recount every quantity pixel by pixel, independently of the confusion matrix."""
    pred, gt = list(pred.ravel()), list(gt.ravel())
    n = len(pred)
    correct = sum(p == g for p, g in zip(pred, gt))
    fg = [(p, g) for p, g in zip(pred, gt) if g != background]
    fg_acc = 1.0 if not fg else sum(p == g for p, g in fg) / len(fg)
    prec, rec, f1, included = [], [], [], []
    for c in range(k):
        tp = sum(p == c and g == c for p, g in zip(pred, gt))
        npred = sum(p == c for p in pred)
        ngt = sum(g == c for g in gt)
        pc = tp / npred if npred else 0.0
        rc = tp / ngt if ngt else 0.0
        prec.append(pc)
        rec.append(rc)
        f1.append(2 * pc * rc / (pc + rc) if pc + rc else 0.0)
        included.append(npred + ngt > 0)
    mean = lambda v: sum(x for x, i in zip(v, included) if i) / sum(included)  # noqa: E731
    return dict(accuracy=correct / n, fg_accuracy=fg_acc, avg_precision=mean(prec),
                avg_recall=mean(rec), avg_f1=mean(f1), f1=f1)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE_RESULTS):
        ok, line = ACCEPTANCE_RESULTS[key]
        terminalreporter.write_line(f"[{'PASS' if ok else 'FAIL'}] {line}")
