"""Zero-shot (sub)cellular segmentation and hit-validation analytics."""

from ._core import (
    Error,
    __version__,
    dice,
    fit_hill,
    graph_metadata,
    iou,
    region_props,
    run,
    segment,
    write_synthetic_plate,
    z_prime,
)

__all__ = [
    "Error",
    "__version__",
    "dice",
    "fit_hill",
    "graph_metadata",
    "iou",
    "region_props",
    "run",
    "segment",
    "write_synthetic_plate",
    "z_prime",
]
