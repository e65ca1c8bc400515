"""proposalbench: object-proposal generators and a synthetic robustness benchmark."""

from proposalbench.core import (
    BoundingBox,
    DecodeError,
    ImageBuffer,
    ParameterError,
    ProposalSet,
    ScoredBox,
    box_intersection_area,
    iou,
    load_image,
    save_png,
)

__all__ = [
    "BoundingBox",
    "DecodeError",
    "ImageBuffer",
    "ParameterError",
    "ProposalSet",
    "ScoredBox",
    "box_intersection_area",
    "iou",
    "load_image",
    "save_png",
]

__version__ = "0.1.0"
