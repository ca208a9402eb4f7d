"""Per-frame parser: softmax regression on 11 hand-crafted pixel features."""

from dataclasses import dataclass

import numpy as np

from .fusion import LOG_FLOOR, TrainConfig, _softmax
from .grid import InvalidArgument, as_image, as_labels

NUM_FEATURES = 11
STD_FLOOR = 1e-6
INIT_SCALE = 0.01


def extract_features(img):
    """RGB, normalised (x, y), and 3x3 border-clamped mean and std of RGB.

    Returns an ``(H, W, 11)`` float64 array.
    """
    img = as_image(img).astype(np.float64)
    h, w = img.shape[:2]
    padded = np.pad(img, ((1, 1), (1, 1), (0, 0)), mode="edge")
    hood = np.stack([padded[dy:dy + h, dx:dx + w] for dy in range(3) for dx in range(3)])
    mean = hood.mean(axis=0)
    std = np.sqrt(((hood - mean) ** 2).mean(axis=0))
    ys, xs = np.mgrid[0:h, 0:w]
    coords = np.stack([xs / w, ys / h], axis=-1)
    return np.concatenate([img, coords, mean, std], axis=2)


@dataclass
class ParserModel:
    matrix: np.ndarray  # K x D
    bias: np.ndarray  # K
    feature_mean: np.ndarray  # D
    feature_std: np.ndarray  # D

    def __post_init__(self):
        for name in ("matrix", "bias", "feature_mean", "feature_std"):
            setattr(self, name, np.asarray(getattr(self, name), dtype=np.float32))
        k, d = self.matrix.shape
        if self.bias.shape != (k,) or self.feature_mean.shape != (d,) or self.feature_std.shape != (d,):
            raise InvalidArgument("inconsistent parser model shapes")

    @property
    def num_classes(self):
        return self.matrix.shape[0]

    @classmethod
    def zeros(cls, k, d=NUM_FEATURES):
        return cls(np.zeros((k, d)), np.zeros(k), np.zeros(d), np.ones(d))

    def __eq__(self, other):
        return isinstance(other, ParserModel) and all(
            np.array_equal(getattr(self, n), getattr(other, n))
            for n in ("matrix", "bias", "feature_mean", "feature_std"))

    def standardize(self, feats):
        return (feats - self.feature_mean.astype(np.float64)) / self.feature_std.astype(np.float64)


def _loss_and_grad(matrix, bias, x, y):
    p = _softmax(x @ matrix.T + bias)
    n = len(y)
    rows = np.arange(n)
    picked = p[rows, y]
    loss = float(-np.log(np.maximum(picked, LOG_FLOOR)).mean())
    d = p
    d[rows, y] -= 1.0
    d[picked < LOG_FLOOR] = 0.0
    d /= n
    return loss, d.T @ x, d.sum(axis=0)


def _training_pixels(frames, num_classes):
    feats, labels = [], []
    for img, gt in frames:
        f = extract_features(img)
        gt = as_labels(gt, num_classes)
        if gt.shape != f.shape[:2]:
            raise InvalidArgument(f"labels {gt.shape} do not match image {f.shape[:2]}")
        feats.append(f.reshape(-1, f.shape[2]))
        labels.append(gt.ravel())
    return np.concatenate(feats), np.concatenate(labels)


def train_parser_frames(frames, cfg, num_classes, history=None):
    """Fit the parser on several ``(image, labels)`` pairs at once."""
    if not frames:
        raise InvalidArgument("parser training needs at least one labeled frame")
    x, y = _training_pixels(frames, num_classes)
    if x.size == 0:
        raise InvalidArgument("parser training needs a non-empty image")
    mean = x.mean(axis=0).astype(np.float32)
    std = np.maximum(x.std(axis=0), STD_FLOOR).astype(np.float32)
    xs = (x - mean.astype(np.float64)) / std.astype(np.float64)

    rng = np.random.default_rng(cfg.seed)
    start = ParserModel(INIT_SCALE * rng.standard_normal((num_classes, x.shape[1])),
                        np.zeros(num_classes), mean, std)
    matrix = start.matrix.astype(np.float64)
    bias = start.bias.astype(np.float64)
    if cfg.learning_rate == 0:
        return start
    for epoch in range(cfg.epochs):
        loss, g_m, g_b = _loss_and_grad(matrix, bias, xs, y)
        if history is not None:
            history.append((epoch, loss))
        matrix -= cfg.learning_rate * g_m
        bias -= cfg.learning_rate * g_b
    return ParserModel(matrix, bias, mean, std)


def train_parser(img, gt, cfg=TrainConfig(), num_classes=None):
    gt = as_labels(gt)
    if gt.size == 0:
        raise InvalidArgument("cannot train on an empty image")
    k = int(gt.max()) + 1 if num_classes is None else num_classes
    return train_parser_frames([(img, gt)], cfg, k)


def parse_frame(model, img):
    feats = model.standardize(extract_features(img))
    logits = feats @ model.matrix.astype(np.float64).T + model.bias.astype(np.float64)
    return _softmax(logits).astype(np.float32)


def parser_loss(model, img, gt):
    x = model.standardize(extract_features(img)).reshape(-1, NUM_FEATURES)
    gt = as_labels(gt, model.num_classes)
    return _loss_and_grad(model.matrix.astype(np.float64), model.bias.astype(np.float64), x, gt.ravel())[0]


def parser_gradient_check(model, img, gt, step=1e-4):
    """Max relative error of the analytic parser gradient against central differences."""
    k, d = model.matrix.shape
    x = model.standardize(extract_features(img)).reshape(-1, d)
    y = as_labels(gt, k).ravel()
    m0 = model.matrix.astype(np.float64)
    b0 = model.bias.astype(np.float64)
    _, g_m, g_b = _loss_and_grad(m0, b0, x, y)
    analytic = np.concatenate([g_m.ravel(), g_b])

    def loss_at(theta):
        p = _softmax(x @ theta[: k * d].reshape(k, d).T + theta[k * d:])
        return -np.log(np.maximum(p[np.arange(len(y)), y], LOG_FLOOR)).mean()

    params = np.concatenate([m0.ravel(), b0])
    numeric = np.empty_like(params)
    for i in range(params.size):
        hi, lo = params.copy(), params.copy()
        hi[i] += step
        lo[i] -= step
        numeric[i] = (loss_at(hi) - loss_at(lo)) / (2 * step)
    denom = np.maximum(np.abs(analytic) + np.abs(numeric), 1e-8)
    return float(np.max(np.abs(analytic - numeric) / denom))
