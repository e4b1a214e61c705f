"""Input normalization, augmentation and the three encoder branch inputs."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .core import (
    DOOR_STAMP,
    Component,
    Floorplan,
    RasterStack,
    boundary_pixels,
    component_mask,
    door_pixels,
    fill_polygon,
    rasterize,
)
from .errors import BadConfig, EmptyInput

TEST_FIT, TEST_CANVAS = 200, 800
TRAIN_FIT, TRAIN_CANVAS = 100, 256
INCIDENCE_RADIUS = 4.0

REGIMES = {"test": (TEST_FIT, TEST_CANVAS), "train": (TRAIN_FIT, TRAIN_CANVAS)}


@dataclass(frozen=True)
class Frame:
    """Similarity transform ``p' = (p - origin) * scale + offset`` into a square canvas."""

    scale: float
    origin: tuple[float, float]
    offset: tuple[float, float]
    canvas: int

    def apply(self, x: float, y: float) -> tuple[float, float]:
        return ((x - self.origin[0]) * self.scale + self.offset[0],
                (y - self.origin[1]) * self.scale + self.offset[1])

    def to_dict(self) -> dict:
        return {"scale": self.scale, "origin": list(self.origin),
                "offset": list(self.offset), "canvas": self.canvas}

    @classmethod
    def from_dict(cls, d: dict) -> "Frame":
        return cls(float(d["scale"]), tuple(d["origin"]), tuple(d["offset"]), int(d["canvas"]))


def _content_box(plan: Floorplan) -> tuple[int, int, int, int]:
    ys, xs = np.nonzero(rasterize(plan, visible_only=True).union())
    if xs.size == 0:
        raise EmptyInput(f"plan {plan.id!r} has no visible component")
    return int(xs.min()), int(ys.min()), int(xs.max()) + 1, int(ys.max()) + 1


def fit_frame(plan: Floorplan, fit: int, canvas: int, max_rounds: int = 6) -> Frame:
    """Frame mapping the visible content box to a ``fit``-sided square centered in ``canvas``.

    Door stamps keep their 2x2 size under scaling, so a door on the content
    edge shifts the measured extent; the scale is corrected on the rasterized
    result until the longer side equals ``fit`` (or rounds stop improving).
    """
    visible = plan.visible_part()
    x0, y0, x1, y1 = _content_box(visible)
    margin = (canvas - fit) // 2
    frame = Frame(fit / max(x1 - x0, y1 - y0), (x0, y0), (margin, margin), canvas)
    best = None
    for _ in range(max_rounds):
        bx0, by0, bx1, by1 = _content_box(transform_plan(visible, frame))
        side = max(bx1 - bx0, by1 - by0)
        if best is None or abs(side - fit) < best[0]:
            best = (abs(side - fit), frame)
        if side == fit:
            break
        frame = replace(frame, scale=frame.scale * fit / side)
    frame = best[1]
    bx0, by0, bx1, by1 = _content_box(transform_plan(visible, frame))
    # odd remainders: floor on the top/left side
    dx = (canvas - (bx1 - bx0)) // 2 - bx0
    dy = (canvas - (by1 - by0)) // 2 - by0
    return replace(frame, offset=(frame.offset[0] + dx, frame.offset[1] + dy))


def _resample_mask(mask: np.ndarray, frame: Frame) -> np.ndarray:
    """Nearest-neighbor pull of a source mask into the frame's canvas."""
    n = frame.canvas
    centers = np.arange(n) + 0.5
    sx = np.floor((centers - frame.offset[0]) / frame.scale + frame.origin[0]).astype(np.int64)
    sy = np.floor((centers - frame.offset[1]) / frame.scale + frame.origin[1]).astype(np.int64)
    h, w = mask.shape
    okx = (sx >= 0) & (sx < w)
    oky = (sy >= 0) & (sy < h)
    out = np.zeros((n, n), dtype=bool)
    out[np.ix_(oky, okx)] = mask[np.ix_(sy[oky], sx[okx])]
    return out


def transform_plan(plan: Floorplan, frame: Frame) -> Floorplan:
    """Map every component into ``frame``.

    Room polygons that leave the canvas become clipped masks; doors whose
    stamp leaves the canvas are dropped.
    """
    n = frame.canvas
    out: list[Component] = []
    for comp in plan.components:
        if comp.polygon is not None:
            poly = tuple(frame.apply(x, y) for x, y in comp.polygon)
            pts = np.asarray(poly)
            if pts.min() >= 0 and pts.max() <= n:
                out.append(Component(comp.type, comp.visible, polygon=poly, score=comp.score))
            else:
                mask = fill_polygon(poly, n, n)
                if mask.any():
                    out.append(Component(comp.type, comp.visible, mask=mask, score=comp.score))
        elif comp.center is not None:
            # map the stamp's geometric center, then re-anchor a fresh 2x2 stamp
            half = DOOR_STAMP / 2
            cx, cy = frame.apply(math.floor(comp.center[0]) + half, math.floor(comp.center[1]) + half)
            ax, ay = math.floor(cx - half), math.floor(cy - half)
            if 0 <= ax <= n - DOOR_STAMP and 0 <= ay <= n - DOOR_STAMP:
                out.append(Component(comp.type, comp.visible, center=(ax, ay), score=comp.score))
        else:
            mask = _resample_mask(comp.mask, frame)
            if mask.any():
                out.append(Component(comp.type, comp.visible, mask=mask, score=comp.score))
    return Floorplan(plan.id, (n, n), tuple(out))


def normalize_plan(plan: Floorplan, regime: str = "test") -> tuple[Floorplan, Frame]:
    try:
        fit, canvas = REGIMES[regime]
    except KeyError:
        raise BadConfig(f"unknown regime {regime!r}") from None
    frame = fit_frame(plan, fit, canvas)
    return transform_plan(plan, frame), frame


def normalize_test(plan: Floorplan) -> RasterStack:
    return rasterize(normalize_plan(plan, "test")[0], visible_only=True)


def normalize_train(plan: Floorplan) -> RasterStack:
    return rasterize(normalize_plan(plan, "train")[0], visible_only=True)


# --------------------------------------------------------------------------
# augmentation


@dataclass(frozen=True)
class AugmentConfig:
    seed: int = 0
    flip_prob: float = 0.5
    rot_prob: float = 0.5
    crop_prob: float = 1.0
    crop_min: float = 0.6
    crop_max: float = 1.0

    def __post_init__(self):
        for name in ("flip_prob", "rot_prob", "crop_prob"):
            p = getattr(self, name)
            if not 0.0 <= p <= 1.0:
                raise BadConfig(f"{name} must lie in [0, 1], got {p}")
        if not 0.0 < self.crop_min <= self.crop_max <= 1.0:
            raise BadConfig("crop side fractions must satisfy 0 < min <= max <= 1")


def crop_resize(data: np.ndarray, x0: int, y0: int, cw: int, ch: int) -> np.ndarray:
    """Crop ``data[..., y0:y0+ch, x0:x0+cw]`` and resize back, nearest neighbor."""
    h, w = data.shape[-2:]
    sx = x0 + np.minimum((np.arange(w) * cw) // w, cw - 1)
    sy = y0 + np.minimum((np.arange(h) * ch) // h, ch - 1)
    return data[..., sy[:, None], sx[None, :]]


def hflip(data: np.ndarray) -> np.ndarray:
    return data[..., ::-1]


def rot90(data: np.ndarray, k: int) -> np.ndarray:
    """Rotate the spatial axes by ``k`` quarter turns (counter-clockwise on screen for k=1)."""
    return np.rot90(data, k=k, axes=(-2, -1))


def augment(stack: RasterStack, cfg: AugmentConfig) -> RasterStack:
    rng = np.random.default_rng(cfg.seed)
    # draws happen unconditionally so each decision is stable under config changes
    u_crop, u_flip, u_rot, u_dir = rng.random(4)
    fx, fy, px, py = rng.random(4)
    data = stack.data
    h, w = data.shape[-2:]
    if u_crop < cfg.crop_prob:
        span = cfg.crop_max - cfg.crop_min
        cw = max(1, round(w * (cfg.crop_min + span * fx)))
        ch = max(1, round(h * (cfg.crop_min + span * fy)))
        x0 = int(px * (w - cw + 1))
        y0 = int(py * (h - ch + 1))
        data = crop_resize(data, x0, y0, cw, ch)
    if u_flip < cfg.flip_prob:
        data = hflip(data)
    if u_rot < cfg.rot_prob:
        data = rot90(data, 1 if u_dir < 0.5 else -1)
    return RasterStack(np.ascontiguousarray(data))


# --------------------------------------------------------------------------
# branch inputs


@dataclass(frozen=True, eq=False)
class BranchInputs:
    room_images: tuple[RasterStack, ...]
    both_images: tuple[RasterStack, ...]
    door_image: RasterStack
    incident_doors: tuple[tuple[int, ...], ...] = ()


def _door_point(comp: Component) -> tuple[float, float]:
    half = DOOR_STAMP / 2
    return math.floor(comp.center[0]) + half, math.floor(comp.center[1]) + half


def distance_to_boundary(point: tuple[float, float], room: Component, canvas: tuple[int, int]) -> float:
    px, py = point
    if room.polygon is not None:
        a = np.asarray(room.polygon, dtype=np.float64)
        b = np.roll(a, -1, axis=0)
        d = b - a
        t = ((px - a[:, 0]) * d[:, 0] + (py - a[:, 1]) * d[:, 1]) / np.maximum((d ** 2).sum(axis=1), 1e-12)
        t = np.clip(t, 0.0, 1.0)
        qx, qy = a[:, 0] + t * d[:, 0], a[:, 1] + t * d[:, 1]
        return float(np.hypot(qx - px, qy - py).min())
    ys, xs = np.nonzero(boundary_pixels(component_mask(room, canvas)))
    if xs.size == 0:
        return math.inf
    # distance to the boundary pixel squares
    dx = np.maximum(np.maximum(xs - px, px - (xs + 1)), 0.0)
    dy = np.maximum(np.maximum(ys - py, py - (ys + 1)), 0.0)
    return float(np.hypot(dx, dy).min())


def incident_doors(plan: Floorplan, room: Component, radius: float = INCIDENCE_RADIUS) -> list[int]:
    """Indices (into ``plan.components``) of doors whose center lies within ``radius`` of the room outline."""
    return [i for i, c in enumerate(plan.components)
            if c.type.is_door and c.center is not None
            and distance_to_boundary(_door_point(c), room, plan.canvas) <= radius]


def split_branches(plan: Floorplan, radius: float = INCIDENCE_RADIUS) -> BranchInputs:
    """Per-room, per-room-with-doors, and all-doors stacks from the visible part of ``plan``."""
    visible = plan.visible_part()
    rooms = visible.rooms
    if not rooms:
        raise EmptyInput(f"plan {plan.id!r} has no visible room")
    w, h = plan.canvas
    door_stack = np.zeros((14, h, w), dtype=bool)
    door_masks = {}
    for i, c in enumerate(visible.components):
        if c.type.is_door:
            door_masks[i] = door_pixels(c.center, w, h) if c.center is not None else component_mask(c, plan.canvas)
            door_stack[c.type.channel] |= door_masks[i]
    room_images, both_images, incidences = [], [], []
    for room in rooms:
        data = np.zeros((14, h, w), dtype=bool)
        data[room.type.channel] = component_mask(room, plan.canvas)
        room_images.append(RasterStack(data))
        doors = incident_doors(visible, room, radius)
        for i in doors:
            data[visible.components[i].type.channel] |= door_masks[i]
        both_images.append(RasterStack(data))
        incidences.append(tuple(doors))
    return BranchInputs(tuple(room_images), tuple(both_images), RasterStack(door_stack), tuple(incidences))
