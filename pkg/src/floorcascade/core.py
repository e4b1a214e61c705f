"""Floorplan representations, the component taxonomy and elementary geometry.

Conventions used throughout the package:

* Raster masks are ``(height, width)`` boolean arrays indexed ``mask[y, x]``.
* Pixel ``(x, y)`` covers the unit square ``[x, x+1] x [y, y+1]``.
* Polygons are filled with the even-odd rule, sampling pixel centers.
* Doors are stamped as 2x2 blocks anchored at ``(floor(x), floor(y))``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from scipy import ndimage

from .errors import BadDims, EmptyMask, FloorplanError, OutOfCanvas

NUM_CHANNELS = 14
NUM_CLASSES = 15
DOOR_STAMP = 2

_FOUR_CONNECTED = np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]], dtype=bool)


class ComponentType(Enum):
    LIVING_ROOM = "living-room"
    KITCHEN = "kitchen"
    WESTERN_STYLE_ROOM = "western-style-room"
    BATHROOM = "bathroom"
    BALCONY = "balcony"
    CORRIDOR = "corridor"
    JAPANESE_STYLE_ROOM = "japanese-style-room"
    WASHROOM = "washroom"
    TOILET = "toilet"
    CLOSET = "closet"
    STANDARD_DOOR = "standard-door"
    ENTRANCE_DOOR = "entrance-door"
    CLOSET_DOOR = "closet-door"
    OPEN_PORTAL = "open-portal"
    NO_COMPONENT = "no-component"

    @property
    def index(self) -> int:
        """Class index in ``[0, 15)``; equals the raster channel for real components."""
        return _TYPE_INDEX[self]

    @property
    def channel(self) -> int:
        if self is ComponentType.NO_COMPONENT:
            raise ValueError("no-component has no raster channel")
        return _TYPE_INDEX[self]

    @property
    def is_room(self) -> bool:
        return _TYPE_INDEX[self] < 10

    @property
    def is_door(self) -> bool:
        return 10 <= _TYPE_INDEX[self] < 14

    @classmethod
    def from_index(cls, index: int) -> "ComponentType":
        return _ALL_TYPES[index]

    @classmethod
    def from_label(cls, label: str) -> "ComponentType":
        try:
            return cls(label)
        except ValueError:
            raise FloorplanError(f"unknown component type {label!r}") from None


_ALL_TYPES = tuple(ComponentType)
_TYPE_INDEX = {t: i for i, t in enumerate(_ALL_TYPES)}
ROOM_TYPES = _ALL_TYPES[:10]
DOOR_TYPES = _ALL_TYPES[10:14]


@dataclass(frozen=True)
class BBox:
    """Axis-aligned box in normalized image coordinates (center, width, height)."""

    cx: float
    cy: float
    w: float
    h: float

    def as_array(self) -> np.ndarray:
        return np.array([self.cx, self.cy, self.w, self.h], dtype=np.float64)

    def corners(self) -> tuple[float, float, float, float]:
        return (self.cx - self.w / 2, self.cy - self.h / 2,
                self.cx + self.w / 2, self.cy + self.h / 2)

    @classmethod
    def from_array(cls, values: Sequence[float]) -> "BBox":
        cx, cy, w, h = (float(v) for v in values)
        return cls(cx, cy, w, h)


@dataclass(frozen=True, eq=False)
class Component:
    """A room or door.

    Exactly one of ``polygon`` (rooms), ``center`` (doors) or ``mask`` is set.
    ``mask`` holds a full-canvas boolean raster and is used for components
    reconstructed by the decoder, whose shapes are not polygons.
    """

    type: ComponentType
    visible: bool = True
    polygon: tuple[tuple[float, float], ...] | None = None
    center: tuple[float, float] | None = None
    mask: np.ndarray | None = field(default=None, repr=False)
    score: float | None = None

    def __post_init__(self):
        if self.type is ComponentType.NO_COMPONENT:
            raise FloorplanError("a component cannot have type no-component")
        given = [g is not None for g in (self.polygon, self.center, self.mask)]
        if sum(given) != 1:
            raise FloorplanError("component needs exactly one of polygon/center/mask")
        if self.polygon is not None:
            poly = tuple((float(x), float(y)) for x, y in self.polygon)
            if self.type.is_door:
                raise FloorplanError("door geometry must be a center point")
            _check_simple_polygon(poly)
            object.__setattr__(self, "polygon", poly)
        if self.center is not None:
            if self.type.is_room:
                raise FloorplanError("room geometry must be a polygon or mask")
            object.__setattr__(self, "center", (float(self.center[0]), float(self.center[1])))
        if self.mask is not None:
            m = np.array(self.mask, dtype=bool)
            if m.ndim != 2:
                raise BadDims("component mask must be 2-D")
            m.setflags(write=False)
            object.__setattr__(self, "mask", m)

    def __eq__(self, other):
        if not isinstance(other, Component):
            return NotImplemented
        if (self.type, self.visible, self.polygon, self.center, self.score) != (
                other.type, other.visible, other.polygon, other.center, other.score):
            return False
        if (self.mask is None) != (other.mask is None):
            return False
        return self.mask is None or np.array_equal(self.mask, other.mask)

    __hash__ = None


@dataclass(frozen=True)
class Floorplan:
    id: str
    canvas: tuple[int, int]
    components: tuple[Component, ...] = ()

    def __post_init__(self):
        w, h = (int(v) for v in self.canvas)
        if w <= 0 or h <= 0:
            raise BadDims("canvas dimensions must be positive")
        object.__setattr__(self, "canvas", (w, h))
        object.__setattr__(self, "components", tuple(self.components))

    @property
    def width(self) -> int:
        return self.canvas[0]

    @property
    def height(self) -> int:
        return self.canvas[1]

    @property
    def rooms(self) -> list[Component]:
        return [c for c in self.components if c.type.is_room]

    @property
    def doors(self) -> list[Component]:
        return [c for c in self.components if c.type.is_door]

    def visible_part(self) -> "Floorplan":
        return replace(self, components=tuple(c for c in self.components if c.visible))

    def with_components(self, components: Iterable[Component]) -> "Floorplan":
        return replace(self, components=tuple(components))


@dataclass(frozen=True, eq=False)
class RasterStack:
    """Fourteen binary channels stored as a ``(14, height, width)`` bool array."""

    data: np.ndarray = field(repr=False)

    def __post_init__(self):
        d = np.asarray(self.data)
        if d.ndim != 3 or d.shape[0] != NUM_CHANNELS:
            raise BadDims(f"raster stack must have shape (14, H, W), got {d.shape}")
        d = d.astype(bool, copy=True)
        d.setflags(write=False)
        object.__setattr__(self, "data", d)

    @property
    def width(self) -> int:
        return self.data.shape[2]

    @property
    def height(self) -> int:
        return self.data.shape[1]

    def channel(self, kind: ComponentType) -> np.ndarray:
        return self.data[kind.channel]

    def pixel_counts(self) -> list[int]:
        return [int(c.sum()) for c in self.data]

    def union(self) -> np.ndarray:
        return self.data.any(axis=0)

    @classmethod
    def zeros(cls, width: int, height: int) -> "RasterStack":
        return cls(np.zeros((NUM_CHANNELS, height, width), dtype=bool))

    def __eq__(self, other):
        if not isinstance(other, RasterStack):
            return NotImplemented
        return self.data.shape == other.data.shape and bool(np.array_equal(self.data, other.data))

    __hash__ = None


# --------------------------------------------------------------------------
# geometry


def _segments_cross(p1, p2, q1, q2) -> bool:
    def orient(a, b, c):
        v = (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
        return (v > 0) - (v < 0)

    def on_segment(a, b, c):
        return (min(a[0], b[0]) <= c[0] <= max(a[0], b[0])
                and min(a[1], b[1]) <= c[1] <= max(a[1], b[1]))

    o1, o2 = orient(p1, p2, q1), orient(p1, p2, q2)
    o3, o4 = orient(q1, q2, p1), orient(q1, q2, p2)
    if o1 != o2 and o3 != o4:
        return True
    return ((o1 == 0 and on_segment(p1, p2, q1)) or (o2 == 0 and on_segment(p1, p2, q2))
            or (o3 == 0 and on_segment(q1, q2, p1)) or (o4 == 0 and on_segment(q1, q2, p2)))


def _check_simple_polygon(poly: Sequence[tuple[float, float]]) -> None:
    n = len(poly)
    if n < 3:
        raise FloorplanError("room polygon needs at least 3 vertices")
    if polygon_area(poly) == 0:
        raise FloorplanError("room polygon has zero area")
    for i in range(n):
        a1, a2 = poly[i], poly[(i + 1) % n]
        for j in range(i + 1, n):
            if j == i or (j + 1) % n == i or j == (i + 1) % n:
                continue
            if _segments_cross(a1, a2, poly[j], poly[(j + 1) % n]):
                raise FloorplanError("room polygon is self-intersecting")


def polygon_area(poly: Sequence[tuple[float, float]]) -> float:
    """Signed shoelace area."""
    pts = np.asarray(poly, dtype=np.float64)
    x, y = pts[:, 0], pts[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))


def fill_polygon(poly: Sequence[tuple[float, float]], width: int, height: int) -> np.ndarray:
    """Scanline fill with the even-odd rule, sampling pixel centers."""
    pts = np.asarray(poly, dtype=np.float64)
    x0, y0 = pts[:, 0], pts[:, 1]
    x1, y1 = np.roll(x0, -1), np.roll(y0, -1)
    ymin = max(0, int(math.floor(y0.min())))
    ymax = min(height, int(math.ceil(y0.max())))
    mask = np.zeros((height, width), dtype=bool)
    if ymax <= ymin:
        return mask
    yc = np.arange(ymin, ymax, dtype=np.float64)[:, None] + 0.5
    lo, hi = np.minimum(y0, y1), np.maximum(y0, y1)
    hits = (lo <= yc) & (yc < hi)
    with np.errstate(divide="ignore", invalid="ignore"):
        t = (yc - y0) / (y1 - y0)
    xc = np.where(hits, x0 + t * (x1 - x0), 0.0)
    # first pixel whose center lies at or right of the crossing toggles parity
    k = np.clip(np.ceil(xc - 0.5), 0, width).astype(np.int64)
    rows, edges = np.nonzero(hits)
    toggles = np.zeros((ymax - ymin, width + 1), dtype=np.int64)
    np.add.at(toggles, (rows, k[rows, edges]), 1)
    inside = (np.cumsum(toggles, axis=1)[:, :width] % 2).astype(bool)
    mask[ymin:ymax] = inside
    return mask


def door_pixels(center: tuple[float, float], width: int, height: int) -> np.ndarray:
    mask = np.zeros((height, width), dtype=bool)
    x, y = int(math.floor(center[0])), int(math.floor(center[1]))
    mask[max(y, 0):max(y + DOOR_STAMP, 0), max(x, 0):max(x + DOOR_STAMP, 0)] = True
    return mask


def _check_in_canvas(comp: Component, width: int, height: int) -> None:
    if comp.polygon is not None:
        pts = np.asarray(comp.polygon)
        if pts.min() < 0 or pts[:, 0].max() > width or pts[:, 1].max() > height:
            raise OutOfCanvas(f"{comp.type.value} polygon leaves the {width}x{height} canvas")
    elif comp.center is not None:
        x, y = comp.center
        if not (0 <= x < width and 0 <= y < height):
            raise OutOfCanvas(f"{comp.type.value} door at {comp.center} is off the canvas")
    elif comp.mask.shape != (height, width):
        raise OutOfCanvas(f"mask shape {comp.mask.shape} does not match canvas {width}x{height}")


def component_mask(comp: Component, canvas: tuple[int, int]) -> np.ndarray:
    width, height = canvas
    _check_in_canvas(comp, width, height)
    if comp.polygon is not None:
        return fill_polygon(comp.polygon, width, height)
    if comp.center is not None:
        return door_pixels(comp.center, width, height)
    return comp.mask.copy()


def rasterize(plan: Floorplan, visible_only: bool = False) -> RasterStack:
    data = np.zeros((NUM_CHANNELS, plan.height, plan.width), dtype=bool)
    for comp in plan.components:
        if visible_only and not comp.visible:
            continue
        data[comp.type.channel] |= component_mask(comp, plan.canvas)
    return RasterStack(data)


def bbox_of(mask: np.ndarray) -> BBox:
    mask = np.asarray(mask, dtype=bool)
    if mask.ndim != 2:
        raise BadDims("bbox_of expects a 2-D mask")
    ys, xs = np.nonzero(mask)
    if xs.size == 0:
        raise EmptyMask("cannot take the bounding box of an empty mask")
    height, width = mask.shape
    x0, x1 = xs.min(), xs.max() + 1
    y0, y1 = ys.min(), ys.max() + 1
    return BBox((x0 + x1) / 2 / width, (y0 + y1) / 2 / height,
                (x1 - x0) / width, (y1 - y0) / height)


def iou_boxes(a: BBox, b: BBox) -> float:
    ax0, ay0, ax1, ay1 = a.corners()
    bx0, by0, bx1, by1 = b.corners()
    iw = max(0.0, min(ax1, bx1) - max(ax0, bx0))
    ih = max(0.0, min(ay1, by1) - max(ay0, by0))
    inter = iw * ih
    # areas from the same corners as the overlap so that a == b gives exactly 1
    union = (ax1 - ax0) * (ay1 - ay0) + (bx1 - bx0) * (by1 - by0) - inter
    return inter / union if union > 0 else 0.0


def iou_masks(a: np.ndarray, b: np.ndarray) -> float:
    a = np.asarray(a, dtype=bool)
    b = np.asarray(b, dtype=bool)
    if a.shape != b.shape:
        raise BadDims(f"mask shapes differ: {a.shape} vs {b.shape}")
    union = int(np.count_nonzero(a | b))
    if union == 0:
        raise EmptyMask("IoU of two empty masks is undefined")
    return np.count_nonzero(a & b) / union


def connected_components(mask: np.ndarray) -> list[np.ndarray]:
    """4-connected components in raster order of their first pixel."""
    labels, n = ndimage.label(np.asarray(mask, dtype=bool), structure=_FOUR_CONNECTED)
    return [labels == k for k in range(1, n + 1)]


def boundary_pixels(mask: np.ndarray) -> np.ndarray:
    """Mask pixels 4-adjacent to a non-mask pixel (the canvas edge counts as outside)."""
    mask = np.asarray(mask, dtype=bool)
    eroded = ndimage.binary_erosion(mask, structure=_FOUR_CONNECTED, border_value=0)
    return mask & ~eroded


# --------------------------------------------------------------------------
# JSON


def encode_mask(mask: np.ndarray) -> list[list[int]]:
    """Row runs ``[y, x_start, length]`` of set pixels."""
    runs = []
    padded = np.zeros((mask.shape[0], mask.shape[1] + 2), dtype=np.int8)
    padded[:, 1:-1] = mask
    diff = np.diff(padded, axis=1)
    for y in np.nonzero(diff.any(axis=1))[0]:
        starts = np.nonzero(diff[y] == 1)[0]
        ends = np.nonzero(diff[y] == -1)[0]
        runs.extend([int(y), int(s), int(e - s)] for s, e in zip(starts, ends))
    return runs


def decode_mask(runs: Sequence[Sequence[int]], width: int, height: int) -> np.ndarray:
    mask = np.zeros((height, width), dtype=bool)
    for y, x, n in runs:
        if not (0 <= y < height and 0 <= x and x + n <= width):
            raise OutOfCanvas(f"mask run {(y, x, n)} leaves the canvas")
        mask[y, x:x + n] = True
    return mask


def _num(v: float):
    return int(v) if float(v).is_integer() else float(v)


def component_to_dict(comp: Component) -> dict:
    out = {"type": comp.type.value, "visible": comp.visible}
    if comp.polygon is not None:
        out["polygon"] = [[_num(x), _num(y)] for x, y in comp.polygon]
    elif comp.center is not None:
        out["center"] = [_num(comp.center[0]), _num(comp.center[1])]
    else:
        out["mask"] = {"rle": encode_mask(comp.mask)}
    if comp.score is not None:
        out["score"] = comp.score
    return out


def component_from_dict(d: dict, canvas: tuple[int, int]) -> Component:
    try:
        kind = ComponentType.from_label(d["type"])
        visible = bool(d.get("visible", True))
        score = d.get("score")
        if "polygon" in d:
            return Component(kind, visible, polygon=tuple(tuple(p) for p in d["polygon"]), score=score)
        if "center" in d:
            return Component(kind, visible, center=tuple(d["center"]), score=score)
        if "mask" in d:
            mask = decode_mask(d["mask"]["rle"], *canvas)
            return Component(kind, visible, mask=mask, score=score)
    except (KeyError, TypeError, ValueError) as exc:
        raise FloorplanError(f"malformed component {d!r}: {exc}") from None
    raise FloorplanError(f"component {d!r} has no polygon, center or mask")


def plan_to_dict(plan: Floorplan) -> dict:
    return {
        "id": plan.id,
        "canvas": [plan.width, plan.height],
        "components": [component_to_dict(c) for c in plan.components],
    }


def plan_from_dict(d: dict) -> Floorplan:
    if "plan" in d and "components" not in d:
        d = d["plan"]
    try:
        canvas = (int(d["canvas"][0]), int(d["canvas"][1]))
        comps = [component_from_dict(c, canvas) for c in d["components"]]
        return Floorplan(str(d["id"]), canvas, tuple(comps))
    except (KeyError, TypeError, IndexError) as exc:
        raise FloorplanError(f"malformed floorplan JSON: {exc}") from None


def load_plan(path: str | Path) -> Floorplan:
    with open(path, encoding="utf-8") as fh:
        return plan_from_dict(json.load(fh))


def save_plan(plan: Floorplan, path: str | Path) -> None:
    Path(path).write_text(json.dumps(plan_to_dict(plan)), encoding="utf-8")
