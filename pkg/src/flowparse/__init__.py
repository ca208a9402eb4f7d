"""Label propagation through video: warp rough per-frame parses along optical
flow, weight them by reconstruction confidence and fuse them with a 1x1 layer."""

from .grid import InvalidArgument, argmax_labels, sample_bilinear, warp

__version__ = "0.1.0"

__all__ = ["InvalidArgument", "argmax_labels", "sample_bilinear", "warp", "__version__"]
