"""Temporal fusion: a 1x1 linear layer + softmax over (long, short, current) class maps."""

import csv
from dataclasses import dataclass, field, replace

import numpy as np

from .grid import InvalidArgument, as_labels

VARIANTS = ("l", "s", "l+c", "s+c", "l+s", "l+s+c")
BLOCKS = ("long", "short", "current")
LOG_FLOOR = 1e-12


def variant_branches(variant):
    """Active warped branches of an ablation variant, e.g. ``'l+s+c'`` -> {'long', 'short'}."""
    if variant not in VARIANTS:
        raise InvalidArgument(f"unknown variant {variant!r}; expected one of {', '.join(VARIANTS)}")
    parts = variant.split("+")
    return frozenset(name for key, name in (("l", "long"), ("s", "short")) if key in parts)


def variant_uses_confidence(variant):
    variant_branches(variant)
    return variant.endswith("+c")


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.1
    epochs: int = 500
    deep_supervision_weight: float = 1.0
    seed: int = 0
    variant: str = "l+s+c"

    def __post_init__(self):
        if not self.learning_rate >= 0:
            raise InvalidArgument("learning_rate must be nonnegative")
        if self.epochs < 1:
            raise InvalidArgument("epochs must be >= 1")
        if self.deep_supervision_weight < 0:
            raise InvalidArgument("deep_supervision_weight must be >= 0")
        variant_branches(self.variant)


@dataclass
class FusionWeights:
    matrix: np.ndarray  # K x 3K, input blocks ordered (long, short, current)
    bias: np.ndarray  # K

    def __post_init__(self):
        self.matrix = np.asarray(self.matrix, dtype=np.float32)
        self.bias = np.asarray(self.bias, dtype=np.float32)
        k = self.bias.shape[0]
        if self.matrix.shape != (k, 3 * k):
            raise InvalidArgument(f"matrix must be {k}x{3 * k}, got {self.matrix.shape}")
        if not (np.all(np.isfinite(self.matrix)) and np.all(np.isfinite(self.bias))):
            raise InvalidArgument("fusion weights must be finite")

    @property
    def num_classes(self):
        return self.bias.shape[0]

    @classmethod
    def zeros(cls, k):
        return cls(np.zeros((k, 3 * k)), np.zeros(k))

    @classmethod
    def gaussian(cls, k, seed):
        rng = np.random.default_rng(seed)
        return cls(rng.standard_normal((k, 3 * k)), rng.standard_normal(k))

    @classmethod
    def pass_through(cls, k, scale=50.0):
        """Weights that copy the current frame's map into the logits."""
        matrix = np.zeros((k, 3 * k))
        matrix[:, 2 * k:] = scale * np.eye(k)
        return cls(matrix, np.zeros(k))

    def __eq__(self, other):
        return (isinstance(other, FusionWeights)
                and np.array_equal(self.matrix, other.matrix)
                and np.array_equal(self.bias, other.bias))


@dataclass
class FusionInput:
    rough_t: np.ndarray
    warped_long: np.ndarray = None
    warped_short: np.ndarray = None
    active_branches: frozenset = field(default_factory=lambda: frozenset({"long", "short"}))

    @property
    def num_classes(self):
        return self.rough_t.shape[2]

    def branch(self, name):
        arr = self.warped_long if name == "long" else self.warped_short
        if name not in self.active_branches or arr is None:
            return None
        if arr.shape != self.rough_t.shape:
            raise InvalidArgument(f"{name} map {arr.shape} does not match current map {self.rough_t.shape}")
        return arr

    def stacked(self):
        """``(H, W, 3K)`` input with inactive branches zero-filled."""
        blocks = []
        for name in ("long", "short"):
            arr = self.branch(name)
            blocks.append(np.zeros_like(self.rough_t, dtype=np.float64) if arr is None
                          else np.asarray(arr, dtype=np.float64))
        blocks.append(np.asarray(self.rough_t, dtype=np.float64))
        return np.concatenate(blocks, axis=2)


def _softmax(logits):
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def _forward(matrix, bias, x):
    return _softmax(x @ np.asarray(matrix, dtype=np.float64).T + np.asarray(bias, dtype=np.float64))


def fuse_forward(w, inp):
    if w.num_classes != inp.num_classes:
        raise InvalidArgument(f"weights have K={w.num_classes}, input has K={inp.num_classes}")
    return _forward(w.matrix, w.bias, inp.stacked()).astype(np.float32)


def _cross_entropy(p, y):
    """Mean of ``-log(max(p[y], floor))`` over pixels."""
    picked = np.take_along_axis(p.reshape(-1, p.shape[-1]), y.reshape(-1, 1), axis=1)[:, 0]
    return float(-np.log(np.maximum(picked, LOG_FLOOR)).mean())


def _renormalize(p):
    p = np.asarray(p, dtype=np.float64)
    total = p.sum(axis=-1, keepdims=True)
    return np.divide(p, total, out=np.full_like(p, 1.0 / p.shape[-1]), where=total > 0)


def _aux_loss(aux_long, aux_short, gt, cfg):
    active = variant_branches(cfg.variant)
    total = 0.0
    for name, aux in (("long", aux_long), ("short", aux_short)):
        if name in active and aux is not None:
            total += _cross_entropy(_renormalize(aux), gt)
    return cfg.deep_supervision_weight * total


def fusion_loss(pred, aux_long, aux_short, gt, cfg):
    """Cross-entropy of ``pred`` plus weighted deep-supervision terms on the warped maps."""
    pred = np.asarray(pred, dtype=np.float64)
    gt = as_labels(gt, pred.shape[2])
    if gt.shape != pred.shape[:2]:
        raise InvalidArgument(f"labels {gt.shape} do not match prediction {pred.shape[:2]}")
    return _cross_entropy(pred, gt) + _aux_loss(aux_long, aux_short, gt, cfg)


def _loss_and_grad(matrix, bias, x, y):
    """Main cross-entropy term and its gradient for pixels ``x`` (N x 3K), labels ``y``."""
    p = _forward(matrix, bias, x)
    n, k = p.shape
    rows = np.arange(n)
    picked = p[rows, y]
    loss = float(-np.log(np.maximum(picked, LOG_FLOOR)).mean())
    dlogits = p.copy()
    dlogits[rows, y] -= 1.0
    # floored pixels contribute a constant, hence no gradient
    dlogits[picked < LOG_FLOOR] = 0.0
    dlogits /= n
    return loss, dlogits.T @ x, dlogits.sum(axis=0)


def _flatten(dataset, cfg):
    if not dataset:
        raise InvalidArgument("fusion training needs at least one example")
    k = dataset[0][0].num_classes
    active = variant_branches(cfg.variant)
    xs, ys, aux = [], [], 0.0
    for inp, gt in dataset:
        if inp.num_classes != k:
            raise InvalidArgument("all fusion examples must share K")
        inp = replace(inp, active_branches=active)
        gt = as_labels(gt, k)
        xs.append(inp.stacked().reshape(-1, 3 * k))
        ys.append(gt.ravel())
        aux += _aux_loss(inp.warped_long, inp.warped_short, gt, cfg) * gt.size
    x = np.concatenate(xs)
    return k, x, np.concatenate(ys), aux / len(x)


def train_fusion(dataset, cfg, init=None, history=None):
    """Full-batch gradient descent on the fusion loss.

    Starts from ``init`` or from seeded standard-normal weights and returns the
    iterate with the lowest training loss. If ``history`` is a list, one
    ``(epoch, loss)`` pair is appended per evaluated iterate.
    """
    k, x, y, aux = _flatten(dataset, cfg)
    start = init if init is not None else FusionWeights.gaussian(k, cfg.seed)
    if start.num_classes != k:
        raise InvalidArgument(f"initial weights have K={start.num_classes}, data has K={k}")
    matrix = start.matrix.astype(np.float64)
    bias = start.bias.astype(np.float64)

    best_loss, best = None, (matrix, bias)
    for epoch in range(cfg.epochs + 1):
        loss, g_m, g_b = _loss_and_grad(matrix, bias, x, y)
        loss += aux
        if history is not None:
            history.append((epoch, loss))
        if best_loss is None or loss < best_loss:
            best_loss, best = loss, (matrix.copy(), bias.copy())
        if epoch == cfg.epochs or cfg.learning_rate == 0:
            break
        matrix = matrix - cfg.learning_rate * g_m
        bias = bias - cfg.learning_rate * g_b

    result = FusionWeights(*best)
    # float32 storage can nudge the loss; never return something worse than the start
    if _loss_and_grad(result.matrix, result.bias, x, y)[0] > _loss_and_grad(start.matrix, start.bias, x, y)[0]:
        return FusionWeights(start.matrix.copy(), start.bias.copy())
    return result


def fusion_dataset_loss(w, dataset, cfg):
    k, x, y, aux = _flatten(dataset, cfg)
    return _loss_and_grad(w.matrix, w.bias, x, y)[0] + aux


def gradient_check(w, inp, gt, cfg=TrainConfig(), step=1e-4):
    """Max relative error between the analytic gradient and central differences."""
    k = w.num_classes
    inp = replace(inp, active_branches=variant_branches(cfg.variant))
    gt = as_labels(gt, k)
    x = inp.stacked().reshape(-1, 3 * k)
    _, g_m, g_b = _loss_and_grad(w.matrix, w.bias, x, gt.ravel())
    analytic = np.concatenate([g_m.ravel(), g_b])

    params = np.concatenate([w.matrix.ravel(), w.bias]).astype(np.float64)

    def loss_at(theta):
        pred = _forward(theta[: 3 * k * k].reshape(k, 3 * k), theta[3 * k * k:], x)
        return fusion_loss(pred.reshape(gt.shape + (k,)), inp.branch("long"), inp.branch("short"), gt, cfg)

    numeric = np.empty_like(params)
    for i in range(params.size):
        hi, lo = params.copy(), params.copy()
        hi[i] += step
        lo[i] -= step
        numeric[i] = (loss_at(hi) - loss_at(lo)) / (2 * step)
    denom = np.maximum(np.abs(analytic) + np.abs(numeric), 1e-8)
    return float(np.max(np.abs(analytic - numeric) / denom))


def export_weights(w, class_names=None):
    """Per output class: its 3K input weights and, for each block, the strongest input."""
    k = w.num_classes
    names = list(class_names) if class_names is not None else [f"class{c}" for c in range(k)]
    if len(names) != k:
        raise InvalidArgument(f"expected {k} class names, got {len(names)}")
    rows = []
    for c in range(k):
        weights = w.matrix[c].astype(np.float64)
        blocks = {}
        for b, block in enumerate(BLOCKS):
            vals = weights[b * k:(b + 1) * k]
            blocks[block] = {
                "argmax": int(np.argmax(vals)),
                "max": float(vals.max()),
                "flat": bool(np.all(vals == vals[0])),
            }
        rows.append({"class_index": c, "class_name": names[c], "weights": weights, "blocks": blocks})
    return rows


def write_weights_csv(path, rows):
    with open(path, "w", newline="", encoding="utf-8") as f:
        out = csv.writer(f, lineterminator="\n")
        out.writerow(["class_name", "block", "input_index", "weight"])
        for row in rows:
            k = len(row["weights"]) // 3
            for b, block in enumerate(BLOCKS):
                for i in range(k):
                    out.writerow([row["class_name"], block, i, f"{row['weights'][b * k + i]:.6f}"])
