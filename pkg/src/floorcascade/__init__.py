"""Partial-to-complete floorplan reconstruction: encoding, cascaded decoding, losses, metrics, refinement."""

from .core import (
    BBox,
    Component,
    ComponentType,
    Floorplan,
    RasterStack,
    bbox_of,
    connected_components,
    iou_boxes,
    iou_masks,
    load_plan,
    plan_from_dict,
    plan_to_dict,
    rasterize,
    save_plan,
)
from .errors import FloorplanError

__version__ = "0.1.0"
