"""Readers and writers for every on-disk format the package touches.

Binary containers are little-endian throughout:

* ``.flo``  Middlebury flow: float32 magic 202021.25, int32 width, int32 height,
  then row-major interleaved ``(dx, dy)`` float32.
* ``SVPP``  probability map: u32 width, height, K, then H*W*K float32.
* ``SVPW``  fusion weights: u32 K, then the K x 3K matrix and K biases.
* ``SVPM``  parser model: u32 K, u32 D, then matrix, bias, feature mean, feature std.
"""

import struct
from pathlib import Path

import numpy as np
from PIL import Image as PILImage

from .grid import InvalidArgument

FLO_MAGIC = 202021.25
_F32 = np.dtype("<f4")


class FormatError(InvalidArgument):
    """Raised when a file does not match the expected container layout."""


def read_png_image(path):
    with PILImage.open(path) as im:
        arr = np.asarray(im.convert("RGB"), dtype=np.uint8)
    return (arr.astype(np.float32) / np.float32(255.0))


def to_uint8(values):
    return np.clip(np.rint(np.asarray(values, dtype=np.float64) * 255.0), 0, 255).astype(np.uint8)


def write_png_image(path, img):
    PILImage.fromarray(to_uint8(img), mode="RGB").save(path, format="PNG")


def write_gray_png(path, values):
    """Write values in [0, 1] as 8-bit grayscale (``round(255 * v)``)."""
    PILImage.fromarray(to_uint8(values), mode="L").save(path, format="PNG")


def read_labels(path):
    """Read a label map from an 8-bit PNG or a binary PGM; pixel value is the class."""
    with PILImage.open(path) as im:
        if im.mode not in ("L", "P", "I", "I;16"):
            raise FormatError(f"{path}: label maps must be single-channel, got mode {im.mode}")
        arr = np.asarray(im)
    return arr.astype(np.int64)


def write_labels(path, labels):
    labels = np.asarray(labels)
    if labels.size and (labels.min() < 0 or labels.max() > 255):
        raise InvalidArgument("label values must fit in 8 bits")
    path = Path(path)
    fmt = "PPM" if path.suffix.lower() == ".pgm" else "PNG"
    PILImage.fromarray(labels.astype(np.uint8), mode="L").save(path, format=fmt)


# --- Middlebury flow -------------------------------------------------------

def write_flo(path, flow):
    flow = np.asarray(flow, dtype=_F32)
    h, w = flow.shape[:2]
    with open(path, "wb") as f:
        f.write(struct.pack("<fii", FLO_MAGIC, w, h))
        f.write(flow.astype(_F32).tobytes())


def read_flo(path):
    data = Path(path).read_bytes()
    if len(data) < 12:
        raise FormatError(f"{path}: truncated .flo header")
    magic, w, h = struct.unpack_from("<fii", data)
    if magic != FLO_MAGIC:
        raise FormatError(f"{path}: bad .flo magic {magic}")
    if w < 0 or h < 0 or len(data) != 12 + 8 * w * h:
        raise FormatError(f"{path}: .flo payload does not match {w}x{h}")
    return np.frombuffer(data, dtype=_F32, offset=12).reshape(h, w, 2).astype(np.float32)


# --- SVP* containers -------------------------------------------------------

def _read_container(path, magic, n_header):
    data = Path(path).read_bytes()
    head = 4 + 4 * n_header
    if len(data) < head or data[:4] != magic:
        raise FormatError(f"{path}: expected {magic.decode()} container")
    header = struct.unpack_from(f"<{n_header}I", data, 4)
    return header, data[head:]


def _floats(payload, count, path):
    if len(payload) != 4 * count:
        raise FormatError(f"{path}: expected {count} floats, found {len(payload) / 4:g}")
    return np.frombuffer(payload, dtype=_F32).astype(np.float32)


def write_probmap(path, p):
    p = np.asarray(p, dtype=np.float32)
    if p.ndim == 2:
        p = p[:, :, None]
    h, w, k = p.shape
    with open(path, "wb") as f:
        f.write(b"SVPP" + struct.pack("<3I", w, h, k))
        f.write(p.astype(_F32).tobytes())


def read_probmap(path):
    (w, h, k), payload = _read_container(path, b"SVPP", 3)
    return _floats(payload, w * h * k, path).reshape(h, w, k)


def write_fusion_weights(path, weights):
    k = weights.num_classes
    with open(path, "wb") as f:
        f.write(b"SVPW" + struct.pack("<I", k))
        f.write(np.asarray(weights.matrix, dtype=_F32).tobytes())
        f.write(np.asarray(weights.bias, dtype=_F32).tobytes())


def read_fusion_weights(path):
    from .fusion import FusionWeights

    (k,), payload = _read_container(path, b"SVPW", 1)
    vals = _floats(payload, k * 3 * k + k, path)
    return FusionWeights(vals[: 3 * k * k].reshape(k, 3 * k), vals[3 * k * k:])


def write_parser_model(path, model):
    k, d = model.matrix.shape
    with open(path, "wb") as f:
        f.write(b"SVPM" + struct.pack("<2I", k, d))
        for arr in (model.matrix, model.bias, model.feature_mean, model.feature_std):
            f.write(np.asarray(arr, dtype=_F32).tobytes())


def read_parser_model(path):
    from .parser import ParserModel

    (k, d), payload = _read_container(path, b"SVPM", 2)
    vals = _floats(payload, k * d + k + 2 * d, path)
    matrix = vals[: k * d].reshape(k, d)
    rest = vals[k * d:]
    return ParserModel(matrix, rest[:k], rest[k: k + d], rest[k + d:])
