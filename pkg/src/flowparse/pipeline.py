"""Sliding-window inference and staged training.

For a frame ``t`` with enough history the window is the triplet
``(t - l, t - s, t)``. Rough maps of the two earlier frames are warped into
frame ``t`` along estimated flow, optionally weighted by flow confidence, and
fused with the rough map of ``t``. The first ``l`` frames fall back to the
rough parse alone.
"""

from dataclasses import dataclass, field, replace

import numpy as np

from .confidence import apply_confidence, reconstruction_residual, residual_to_confidence
from .flow import FlowConfig, estimate_flow, median_filter_flow
from .fusion import (FusionInput, TrainConfig, fuse_forward, train_fusion,
                     variant_branches, variant_uses_confidence)
from .grid import InvalidArgument, argmax_labels, as_labels, warp
from .parser import ParserModel, parse_frame, train_parser_frames


@dataclass(frozen=True)
class PipelineConfig:
    l: int = 3
    s: int = 1
    variant: str = "l+s+c"
    flow: FlowConfig = field(default_factory=FlowConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    # residuals enter the confidence mapping in 8-bit intensity levels
    residual_scale: float = 255.0

    def __post_init__(self):
        if self.residual_scale <= 0:
            raise InvalidArgument("residual_scale must be positive")
        if not self.l > self.s >= 1:
            raise InvalidArgument(f"need l > s >= 1, got l={self.l}, s={self.s}")
        variant_branches(self.variant)


INDOOR = PipelineConfig(l=3, s=1)
OUTDOOR = PipelineConfig(l=2, s=1)
PRESETS = {"indoor": INDOOR, "outdoor": OUTDOOR}


@dataclass
class VideoSequence:
    frames: list
    labeled_index: int
    gt_labels: np.ndarray
    labels: list = None  # per-frame ground truth, synthetic data only
    velocities: list = None  # per-frame velocity fields, synthetic data only
    name: str = "video"

    def __post_init__(self):
        if not self.frames:
            raise InvalidArgument("a video needs at least one frame")
        if not 0 <= self.labeled_index < len(self.frames):
            raise InvalidArgument(f"labeled index {self.labeled_index} outside [0, {len(self.frames)})")
        shape = np.shape(self.frames[0])
        if any(np.shape(f) != shape for f in self.frames):
            raise InvalidArgument("all frames must share dimensions")
        self.gt_labels = as_labels(self.gt_labels)
        if self.gt_labels.shape != shape[:2]:
            raise InvalidArgument(f"labels {self.gt_labels.shape} do not match frames {shape[:2]}")

    def __len__(self):
        return len(self.frames)


def select_triplet(t, cfg, n):
    """``(t - l, t - s, t)`` when ``t >= l``; ``None`` means parse ``t`` on its own."""
    if not 0 <= t < n:
        raise InvalidArgument(f"frame {t} outside [0, {n})")
    if t < cfg.l:
        return None
    return (t - cfg.l, t - cfg.s, t)


def _rough_source(parser):
    if isinstance(parser, ParserModel):
        return lambda t, img: parse_frame(parser, img)
    if callable(parser):
        return parser
    raise InvalidArgument("parser must be a ParserModel or a callable (t, image) -> ProbMap")


class FrameCache:
    """Per-video cache of rough maps, flows and confidences, keyed by frame index."""

    def __init__(self, frames, parser, flow_cfg=FlowConfig(), residual_scale=255.0):
        self.frames = frames
        self.flow_cfg = flow_cfg
        self.residual_scale = residual_scale
        self._rough_fn = _rough_source(parser)
        self._rough = {}
        self._flows = {}
        self._conf = {}
        self.rough_computed = 0
        self.rough_hits = 0

    def rough(self, t):
        if t in self._rough:
            self.rough_hits += 1
        else:
            self._rough[t] = np.asarray(self._rough_fn(t, self.frames[t]), dtype=np.float32)
            self.rough_computed += 1
        return self._rough[t]

    def flow(self, t, src):
        """Flow mapping frame ``t`` into frame ``src``."""
        key = (t, src)
        if key not in self._flows:
            f = estimate_flow(self.frames[t], self.frames[src], self.flow_cfg)
            self._flows[key] = median_filter_flow(f, self.flow_cfg.median_radius)
        return self._flows[key]

    def confidence(self, t, src):
        key = (t, src)
        if key not in self._conf:
            res = reconstruction_residual(self.frames[t], self.frames[src], self.flow(t, src))
            self._conf[key] = residual_to_confidence(res * np.float32(self.residual_scale))
        return self._conf[key]

    def fusion_input(self, triplet, variant):
        long_t, short_t, t = triplet
        active = variant_branches(variant)
        weighted = variant_uses_confidence(variant)
        warped = {}
        conf_means = {}
        for name, src in (("long", long_t), ("short", short_t)):
            if name not in active:
                continue
            p = warp(self.rough(src), self.flow(t, src), probabilities=True)
            if weighted:
                conf = self.confidence(t, src)
                conf_means[name] = float(conf.mean(dtype=np.float64))
                p = apply_confidence(p, conf)
            warped[name] = p
        inp = FusionInput(self.rough(t), warped.get("long"), warped.get("short"), active)
        return inp, conf_means


@dataclass
class FrameDiagnostics:
    t: int
    fallback: bool
    long_confidence_mean: float = None
    short_confidence_mean: float = None
    rough_cache_hits: int = 0


def parse_video(seq, parser, fusion, cfg, cache=None):
    """Label every frame of ``seq``; returns ``(label_maps, diagnostics)``."""
    if isinstance(parser, ParserModel) and parser.num_classes != fusion.num_classes:
        raise InvalidArgument(f"parser has K={parser.num_classes}, fusion has K={fusion.num_classes}")
    cache = cache or FrameCache(seq.frames, parser, cfg.flow, cfg.residual_scale)
    outputs, diagnostics = [], []
    for t in range(len(seq)):
        hits_before = cache.rough_hits
        triplet = select_triplet(t, cfg, len(seq))
        if triplet is None:
            rough = cache.rough(t)
            _check_k(rough, fusion)
            outputs.append(argmax_labels(rough))
            diagnostics.append(FrameDiagnostics(t, True, rough_cache_hits=cache.rough_hits - hits_before))
            continue
        inp, conf = cache.fusion_input(triplet, cfg.variant)
        _check_k(inp.rough_t, fusion)
        outputs.append(argmax_labels(fuse_forward(fusion, inp)))
        diagnostics.append(FrameDiagnostics(
            t, False, conf.get("long"), conf.get("short"), cache.rough_hits - hits_before))
    return outputs, diagnostics


def _check_k(rough, fusion):
    if rough.shape[2] != fusion.num_classes:
        raise InvalidArgument(f"rough map has K={rough.shape[2]}, fusion has K={fusion.num_classes}")


def fusion_examples(videos, parser, cfg):
    """One ``(FusionInput, labels)`` pair per video whose labeled frame has a full window."""
    examples = []
    for seq in videos:
        triplet = select_triplet(seq.labeled_index, cfg, len(seq))
        if triplet is None:
            continue
        inp, _ = FrameCache(seq.frames, parser, cfg.flow, cfg.residual_scale).fusion_input(triplet, cfg.variant)
        examples.append((inp, seq.gt_labels))
    return examples


def train_pipeline(videos, cfg, num_classes=None, history=None):
    """Staged training: parser on the labeled frames, then two fusion rounds.

    The flow configuration is fixed throughout. The second fusion round starts
    from the first round's best weights, so its best loss is never higher.
    ``history`` (a list) receives ``(stage, epoch, loss)`` tuples for both
    fusion rounds.
    """
    if not videos:
        raise InvalidArgument("no training videos")
    k = num_classes or max(int(v.gt_labels.max()) for v in videos) + 1
    train_cfg = replace(cfg.train, variant=cfg.variant)
    parser = train_parser_frames([(v.frames[v.labeled_index], v.gt_labels) for v in videos], train_cfg, k)

    examples = fusion_examples(videos, parser, cfg)
    if not examples:
        raise InvalidArgument(
            f"no video has a labeled frame with index >= l={cfg.l}; relax l or label a later frame")

    fusion = None
    for stage in ("fusion", "finetune"):
        log = []
        fusion = train_fusion(examples, train_cfg, init=fusion, history=log)
        if history is not None:
            history.extend((stage, epoch, loss) for epoch, loss in log)
    return parser, fusion
