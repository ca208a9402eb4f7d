"""Command-line entry point: ``flowparse <subcommand> ...``.

Exit codes: 0 success, 2 usage or configuration error, 3 data error.
"""

import argparse
import csv
import sys
from pathlib import Path

import numpy as np

from . import io
from .benchmark import run_ablation
from .confidence import reconstruction_residual, residual_to_confidence
from .config import Config, ConfigError
from .evaluation import compute_metrics, confusion, table_csv
from .flow import estimate_flow, median_filter_flow
from .fusion import VARIANTS, export_weights, write_weights_csv
from .grid import InvalidArgument
from .manifest import ManifestError, read_manifest, write_synthetic_dataset
from .pipeline import parse_video, train_pipeline
from .synth import generate

EXIT_OK, EXIT_USAGE, EXIT_DATA = 0, 2, 3

# fixed overlay colours, class 0 (background) first
PALETTE = np.array([
    (0, 0, 0), (230, 25, 75), (60, 180, 75), (255, 225, 25), (0, 130, 200), (245, 130, 48),
    (145, 30, 180), (70, 240, 240), (240, 50, 230), (210, 245, 60), (250, 190, 212),
    (0, 128, 128), (220, 190, 255), (170, 110, 40), (255, 250, 200), (128, 0, 0),
], dtype=np.float32) / 255.0


class DataError(Exception):
    pass


def _palette(k):
    return PALETTE[np.arange(k) % len(PALETTE)]


def overlay(frame, labels, k):
    return 0.5 * np.asarray(frame, dtype=np.float32) + 0.5 * _palette(k)[labels]


def _fmt(v):
    return "" if v is None else f"{v:.6f}"


def cmd_synth(args):
    cfg = Config.load(args.config)
    videos = [(f"video{i:03d}", generate(c)) for i, c in enumerate(cfg.synth())]
    manifest = write_synthetic_dataset(args.out, videos)
    print(f"wrote {len(videos)} video(s); manifest {manifest}")


def _load_videos(manifest):
    try:
        return [e.load() for e in read_manifest(manifest)]
    except (OSError, ValueError) as exc:
        if isinstance(exc, ManifestError):
            raise
        raise DataError(str(exc)) from exc


def cmd_train(args):
    cfg = Config.load(args.config).pipeline(args.variant)
    videos = _load_videos(args.manifest)
    history = []
    parser, fusion = train_pipeline(videos, cfg, num_classes=args.classes, history=history)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    io.write_parser_model(out / "parser.svpm", parser)
    io.write_fusion_weights(out / "fusion.svpw", fusion)
    with open(out / "loss.csv", "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["stage", "epoch", "loss", "best_so_far"])
        best = float("inf")
        for stage, epoch, loss in history:
            best = min(best, loss)
            w.writerow([stage, epoch, f"{loss:.8f}", f"{best:.8f}"])
    print(f"trained K={fusion.num_classes} on {len(videos)} video(s); best fusion loss {best:.6f}")


def cmd_parse(args):
    cfg = Config.load(args.config).pipeline(args.variant)
    models = Path(args.models)
    try:
        parser = io.read_parser_model(models / "parser.svpm")
        fusion = io.read_fusion_weights(models / "fusion.svpw")
    except OSError as exc:
        raise DataError(str(exc)) from exc
    if parser.num_classes != fusion.num_classes:
        raise InvalidArgument(f"parser has K={parser.num_classes}, fusion has K={fusion.num_classes}")
    out = Path(args.out)
    rows = []
    for entry in read_manifest(args.manifest):
        try:
            seq = entry.load()
        except OSError as exc:
            raise DataError(str(exc)) from exc
        labels, diags = parse_video(seq, parser, fusion, cfg)
        label_dir = out / "labels" / entry.name
        overlay_dir = out / "overlays" / entry.name
        label_dir.mkdir(parents=True, exist_ok=True)
        overlay_dir.mkdir(parents=True, exist_ok=True)
        for t, lab in enumerate(labels):
            io.write_labels(label_dir / f"{t:04d}.png", lab)
            io.write_png_image(overlay_dir / f"{t:04d}.png", overlay(seq.frames[t], lab, fusion.num_classes))
        rows.extend((entry.name, d) for d in diags)
    with open(out / "diagnostics.csv", "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["video", "frame", "fallback", "long_confidence_mean", "short_confidence_mean",
                    "rough_cache_hits"])
        for name, d in rows:
            w.writerow([name, d.t, int(d.fallback), _fmt(d.long_confidence_mean),
                        _fmt(d.short_confidence_mean), d.rough_cache_hits])
    print(f"parsed {len(rows)} frame(s) with variant {cfg.variant}")


def _label_files(root):
    root = Path(root)
    return {p.relative_to(root).as_posix(): p for p in sorted(root.rglob("*"))
            if p.suffix.lower() in (".png", ".pgm")}


def cmd_eval(args):
    preds = _label_files(args.pred)
    gts = _label_files(args.gt)
    if not preds:
        raise DataError(f"no label maps under {args.pred}")
    missing = sorted(set(preds) - set(gts))
    if missing:
        raise DataError(f"no ground truth for {missing[0]}" + (f" (+{len(missing) - 1} more)" if len(missing) > 1 else ""))
    pairs = {}
    for rel, path in preds.items():
        pred, gt = io.read_labels(path), io.read_labels(gts[rel])
        if pred.shape != gt.shape:
            raise InvalidArgument(f"{rel}: prediction {pred.shape} vs ground truth {gt.shape}")
        pairs[rel] = (pred, gt)
    k = args.classes or max(int(max(p.max(), g.max())) for p, g in pairs.values()) + 1
    names = args.names.split(",") if args.names else [f"class{c}" for c in range(k)]
    if len(names) != k:
        raise InvalidArgument(f"{len(names)} class names for K={k}")

    groups = {}
    for rel, (pred, gt) in pairs.items():
        group = rel.split("/")[0] if "/" in rel else "all"
        groups.setdefault(group, np.zeros((k, k), dtype=np.int64))
        groups[group] += confusion(pred, gt, k)
    opts = dict(background_class=args.background, include_background=not args.exclude_background)
    rows = [(name, compute_metrics(c, **opts)) for name, c in sorted(groups.items())]
    if len(rows) > 1:
        rows.append(("all", compute_metrics(sum(groups.values()), **opts)))
    text = table_csv(rows, names)
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        Path(args.out).write_text(text, encoding="utf-8")
    sys.stdout.write(text)


def _read_image(path):
    try:
        return io.read_png_image(path)
    except OSError as exc:
        raise DataError(str(exc)) from exc


def cmd_flow(args):
    cfg = Config.load(args.config).flow()
    a, b = _read_image(args.image_a), _read_image(args.image_b)
    flow = median_filter_flow(estimate_flow(a, b, cfg), cfg.median_radius)
    io.write_flo(args.out, flow)


def cmd_confidence(args):
    cfg = Config.load(args.config).pipeline()
    a, b = _read_image(args.image_a), _read_image(args.image_b)
    try:
        flow = io.read_flo(args.flow)
    except OSError as exc:
        raise DataError(str(exc)) from exc
    res = reconstruction_residual(a, b, flow)
    conf = residual_to_confidence(res * np.float32(cfg.residual_scale))
    io.write_gray_png(args.out, conf)
    if args.raw:
        io.write_probmap(args.raw, conf)


def cmd_export_weights(args):
    try:
        weights = io.read_fusion_weights(args.model)
    except OSError as exc:
        raise DataError(str(exc)) from exc
    names = args.names.split(",") if args.names else None
    write_weights_csv(args.out, export_weights(weights, names))


def cmd_ablation(args):
    result = run_ablation(n_test=args.videos, n_train=args.train_videos, seed=args.seed,
                          error_rate=args.error_rate)
    lines = ["method,mean_avg_f1", f"rough,{result.mean('rough'):.4f}"]
    lines += [f"fused {v},{result.mean(v):.4f}" for v in result.variant_f1]
    text = "\n".join(lines) + "\n"
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    sys.stdout.write(text)


def build_parser():
    p = argparse.ArgumentParser(prog="flowparse", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth", help="generate a synthetic dataset")
    s.add_argument("--config", required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("train", help="train parser and fusion from a manifest")
    s.add_argument("--manifest", required=True)
    s.add_argument("--config")
    s.add_argument("--variant", choices=VARIANTS)
    s.add_argument("--classes", type=int, help="number of classes (default: from labels)")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("parse", help="label every frame of the videos in a manifest")
    s.add_argument("--manifest", required=True)
    s.add_argument("--models", required=True, help="directory with parser.svpm and fusion.svpw")
    s.add_argument("--variant", choices=VARIANTS)
    s.add_argument("--config")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_parse)

    s = sub.add_parser("eval", help="score predicted label maps against ground truth")
    s.add_argument("--pred", required=True)
    s.add_argument("--gt", required=True)
    s.add_argument("--classes", type=int)
    s.add_argument("--names", help="comma-separated class names")
    s.add_argument("--background", type=int, default=0)
    s.add_argument("--exclude-background", action="store_true",
                   help="leave the background class out of the averaged metrics")
    s.add_argument("--out")
    s.set_defaults(func=cmd_eval)

    s = sub.add_parser("flow", help="estimate flow from image A to image B")
    s.add_argument("image_a")
    s.add_argument("image_b")
    s.add_argument("out")
    s.add_argument("--config")
    s.set_defaults(func=cmd_flow)

    s = sub.add_parser("confidence", help="render flow confidence of A reconstructed from B")
    s.add_argument("image_a")
    s.add_argument("image_b")
    s.add_argument("flow")
    s.add_argument("out")
    s.add_argument("--raw", help="also write the confidence as a K=1 SVPP map")
    s.add_argument("--config")
    s.set_defaults(func=cmd_confidence)

    s = sub.add_parser("export-weights", help="dump fusion weights as CSV")
    s.add_argument("model")
    s.add_argument("out")
    s.add_argument("--names", help="comma-separated class names")
    s.set_defaults(func=cmd_export_weights)

    s = sub.add_parser("ablation", help="run the synthetic ablation benchmark")
    s.add_argument("--videos", type=int, default=10)
    s.add_argument("--train-videos", type=int, default=4)
    s.add_argument("--error-rate", type=float, default=0.25)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out")
    s.set_defaults(func=cmd_ablation)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        args.func(args)
    except (DataError, io.FormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (ConfigError, ManifestError, InvalidArgument) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
