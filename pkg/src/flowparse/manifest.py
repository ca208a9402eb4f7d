"""Plain-text dataset manifests.

One block per video; paths are relative to the manifest file::

    video walk01
    labeled 6 labels/walk01/0006.png
    frame frames/walk01/0000.png
    frame frames/walk01/0001.png
    ...
    gt_label 0 labels/walk01/0000.png      # optional, synthetic data
    gt_flow 0 flows/walk01/0000.flo        # optional, synthetic data
    end

Blank lines and ``#`` comments are ignored.
"""

from dataclasses import dataclass, field
from pathlib import Path

from . import io
from .grid import InvalidArgument
from .pipeline import VideoSequence


class ManifestError(InvalidArgument):
    pass


@dataclass
class VideoEntry:
    name: str
    frames: list = field(default_factory=list)
    labeled_index: int = None
    label_path: Path = None
    gt_labels: dict = field(default_factory=dict)
    gt_flows: dict = field(default_factory=dict)

    def load(self):
        frames = [io.read_png_image(p) for p in self.frames]
        gt = io.read_labels(self.label_path)
        labels = None
        if self.gt_labels and len(self.gt_labels) == len(frames):
            labels = [io.read_labels(self.gt_labels[t]) for t in range(len(frames))]
        return VideoSequence(frames=frames, labeled_index=self.labeled_index, gt_labels=gt,
                             labels=labels, name=self.name)


def read_manifest(path):
    path = Path(path)
    root = path.parent
    entries, current = [], None

    def fail(no, msg):
        raise ManifestError(f"{path}:{no}: {msg}")

    for no, raw in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, _, rest = line.partition(" ")
        rest = rest.strip()
        if key == "video":
            if current is not None:
                fail(no, "previous video block not closed with 'end'")
            current = VideoEntry(rest or f"video{len(entries)}")
            continue
        if current is None:
            fail(no, f"'{key}' outside a video block")
        if key == "frame":
            current.frames.append(root / rest)
        elif key in ("labeled", "gt_label", "gt_flow"):
            index, _, rel = rest.partition(" ")
            try:
                index = int(index)
            except ValueError:
                fail(no, f"expected a frame index, got {index!r}")
            if not rel.strip():
                fail(no, f"'{key}' needs a path")
            target = root / rel.strip()
            if key == "labeled":
                current.labeled_index, current.label_path = index, target
            elif key == "gt_label":
                current.gt_labels[index] = target
            else:
                current.gt_flows[index] = target
        elif key == "end":
            if current.labeled_index is None:
                fail(no, f"video {current.name!r} has no labeled frame")
            if not current.frames:
                fail(no, f"video {current.name!r} has no frames")
            if not 0 <= current.labeled_index < len(current.frames):
                fail(no, f"labeled index {current.labeled_index} outside the {len(current.frames)} frames")
            entries.append(current)
            current = None
        else:
            fail(no, f"unknown directive {key!r}")
    if current is not None:
        raise ManifestError(f"{path}: video {current.name!r} not closed with 'end'")
    if not entries:
        raise ManifestError(f"{path}: no videos")
    return entries


def write_manifest(path, entries):
    path = Path(path)
    root = path.parent

    def rel(p):
        return Path(p).relative_to(root).as_posix()

    lines = []
    for e in entries:
        lines.append(f"video {e.name}")
        lines.append(f"labeled {e.labeled_index} {rel(e.label_path)}")
        lines.extend(f"frame {rel(p)}" for p in e.frames)
        lines.extend(f"gt_label {t} {rel(p)}" for t, p in sorted(e.gt_labels.items()))
        lines.extend(f"gt_flow {t} {rel(p)}" for t, p in sorted(e.gt_flows.items()))
        lines.append("end")
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def write_synthetic_dataset(out_dir, videos):
    """Write ``(name, VideoSequence)`` pairs as PNG frames, label maps, .flo velocities and a manifest.

    The ``.flo`` file of frame ``t`` holds its per-pixel velocity: the flow
    from frame ``t`` to frame ``t + 1`` wherever the owner stays visible.
    """
    out_dir = Path(out_dir)
    entries = []
    for name, seq in videos:
        dirs = {k: out_dir / k / name for k in ("frames", "labels", "flows")}
        for d in dirs.values():
            d.mkdir(parents=True, exist_ok=True)
        entry = VideoEntry(name, labeled_index=seq.labeled_index)
        for t, frame in enumerate(seq.frames):
            fp = dirs["frames"] / f"{t:04d}.png"
            io.write_png_image(fp, frame)
            entry.frames.append(fp)
            if seq.labels is not None:
                lp = dirs["labels"] / f"{t:04d}.png"
                io.write_labels(lp, seq.labels[t])
                entry.gt_labels[t] = lp
            if seq.velocities is not None:
                vp = dirs["flows"] / f"{t:04d}.flo"
                io.write_flo(vp, seq.velocities[t])
                entry.gt_flows[t] = vp
        if seq.labeled_index in entry.gt_labels:
            entry.label_path = entry.gt_labels[seq.labeled_index]
        else:
            entry.label_path = dirs["labels"] / f"{seq.labeled_index:04d}.png"
            io.write_labels(entry.label_path, seq.gt_labels)
        entries.append(entry)
    manifest = out_dir / "manifest.txt"
    write_manifest(manifest, entries)
    return manifest
