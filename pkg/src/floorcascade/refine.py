"""Post-refinement heuristics around a pluggable mask refiner, and rectilinear polygonization."""

from __future__ import annotations

from typing import Callable

import numpy as np
from scipy import ndimage

from .core import (
    Component,
    Floorplan,
    boundary_pixels,
    component_mask,
    connected_components,
    door_pixels,
    iou_masks,
)
from .errors import EmptyMask, FloorplanError, NoRooms

IOU_GATE = 0.5

Refiner = Callable[[np.ndarray], np.ndarray]


def identity_refiner(mask: np.ndarray) -> np.ndarray:
    return mask.copy()


def morph_refiner(mask: np.ndarray) -> np.ndarray:
    """Morphological close then open with a 3x3 square."""
    se = np.ones((3, 3), dtype=bool)
    closed = ndimage.binary_closing(mask, structure=se)
    return ndimage.binary_opening(closed, structure=se)


REFINERS: dict[str, Refiner] = {"identity": identity_refiner, "morph": morph_refiner}


def _iou(a: np.ndarray, b: np.ndarray) -> float:
    try:
        return iou_masks(a, b)
    except EmptyMask:
        return 1.0


def keep_best_component(refined: np.ndarray, original: np.ndarray) -> np.ndarray:
    """The connected piece of ``refined`` with the highest IoU against ``original``."""
    parts = connected_components(refined)
    if not parts:
        return np.asarray(original, dtype=bool).copy()
    scores = [_iou(p, original) for p in parts]
    return parts[int(np.argmax(scores))]


def iou_gate(refined: np.ndarray, previous: np.ndarray, original: np.ndarray) -> np.ndarray:
    """Accept ``refined`` only while it keeps IoU >= 0.5 with ``original``."""
    return refined if _iou(refined, original) >= IOU_GATE else previous


def snap_anchor(door: np.ndarray, boundary: np.ndarray) -> tuple[int, int]:
    """Boundary pixel nearest the door's center of mass; ties by smallest (x, y)."""
    ys, xs = np.nonzero(door)
    cx, cy = xs.mean(), ys.mean()
    by, bx = np.nonzero(boundary)
    d2 = (bx - cx) ** 2 + (by - cy) ** 2
    k = np.lexsort((by, bx, d2))[0]
    return int(bx[k]), int(by[k])


def snap_doors(doors: list[np.ndarray], rooms: list[np.ndarray]) -> list[np.ndarray]:
    """Re-anchor every door's 2x2 stamp on the nearest room-boundary pixel."""
    boundary = None
    for room in rooms:
        b = boundary_pixels(room)
        boundary = b if boundary is None else boundary | b
    if boundary is None or not boundary.any():
        raise NoRooms("door snapping needs at least one nonempty room")
    h, w = boundary.shape
    out = []
    for door in doors:
        if not np.any(door):
            out.append(np.asarray(door, dtype=bool).copy())
            continue
        x, y = snap_anchor(door, boundary)
        out.append(door_pixels((x, y), w, h))
    return out


def refine_iterate(plan: Floorplan, refiner: Refiner = identity_refiner, steps: int = 1) -> Floorplan:
    """Run ``steps`` refinement rounds with the per-component heuristics, then snap doors.

    Rooms come back as mask components, doors as center points on a room boundary.
    """
    if steps < 0:
        raise ValueError("steps must be non-negative")
    originals = [component_mask(c, plan.canvas) for c in plan.components]
    current = [m.copy() for m in originals]
    for _ in range(steps):
        for k, original in enumerate(originals):
            candidate = keep_best_component(refiner(current[k]), original)
            current[k] = iou_gate(candidate, current[k], original)
    door_idx = [k for k, c in enumerate(plan.components) if c.type.is_door]
    room_idx = [k for k, c in enumerate(plan.components) if c.type.is_room]
    if door_idx:
        snapped = snap_doors([current[k] for k in door_idx], [current[k] for k in room_idx])
        for k, m in zip(door_idx, snapped):
            current[k] = m
    comps = []
    for k, c in enumerate(plan.components):
        if c.type.is_door:
            ys, xs = np.nonzero(current[k])
            if xs.size == 0:
                continue
            comps.append(Component(c.type, c.visible, center=(int(xs.min()), int(ys.min())), score=c.score))
        elif current[k].any():
            comps.append(Component(c.type, c.visible, mask=current[k], score=c.score))
    return plan.with_components(comps)


# --------------------------------------------------------------------------
# polygonization

# clockwise (screen coordinates) pixel sides, emitted when the neighbor is empty
_SIDES = (
    ((0, -1), (0, 0), (1, 0)),   # top
    ((1, 0), (1, 0), (1, 1)),    # right
    ((0, 1), (1, 1), (0, 1)),    # bottom
    ((-1, 0), (0, 1), (0, 0)),   # left
)


def _trace_loops(mask: np.ndarray) -> list[list[tuple[int, int]]]:
    h, w = mask.shape
    padded = np.pad(mask, 1)
    outgoing: dict[tuple[int, int], list[tuple[int, int]]] = {}
    for (nx, ny), a, b in _SIDES:
        neighbor = padded[1 + ny:1 + ny + h, 1 + nx:1 + nx + w]
        ys, xs = np.nonzero(mask & ~neighbor)
        for x, y in zip(xs.tolist(), ys.tolist()):
            start = (x + a[0], y + a[1])
            outgoing.setdefault(start, []).append((b[0] - a[0], b[1] - a[1]))
    loops = []
    while outgoing:
        start = min(outgoing)
        pos, heading = start, None
        loop = []
        while True:
            options = outgoing.get(pos)
            if not options:
                break
            if heading is None or len(options) == 1:
                step = options[0]
            else:
                # hug the interior: right turn, then straight, then left
                dx, dy = heading
                prefs = [(-dy, dx), (dx, dy), (dy, -dx)]
                step = next(s for s in prefs if s in options)
            options.remove(step)
            if not options:
                del outgoing[pos]
            loop.append(pos)
            heading = step
            pos = (pos[0] + step[0], pos[1] + step[1])
            if pos == start and start not in outgoing:
                break
        loops.append(loop)
    return loops


def _drop_collinear(poly: list[tuple[int, int]]) -> list[tuple[int, int]]:
    changed = True
    pts = list(poly)
    while changed and len(pts) > 4:
        changed = False
        out = []
        n = len(pts)
        for i in range(n):
            a, b, c = pts[i - 1], pts[i], pts[(i + 1) % n]
            if b == a:
                changed = True
                continue
            u, v = (b[0] - a[0], b[1] - a[1]), (c[0] - b[0], c[1] - b[1])
            if u[0] * v[1] - u[1] * v[0] == 0 and u[0] * v[0] + u[1] * v[1] > 0:
                changed = True
                continue
            out.append(b)
        pts = out
    return pts


def _shoelace(pts) -> float:
    a = np.asarray(pts, dtype=np.float64)
    return 0.5 * float(np.dot(a[:, 0], np.roll(a[:, 1], -1)) - np.dot(np.roll(a[:, 0], -1), a[:, 1]))


def _remove_jogs(pts: list[tuple[int, int]], tolerance: float) -> list[tuple[int, int]]:
    """Flatten staircase steps shorter than ``tolerance`` by sliding the shorter flank."""
    while len(pts) > 4:
        n = len(pts)
        best = None
        for i in range(n):
            p0, p1, p2, p3 = pts[i - 1], pts[i], pts[(i + 1) % n], pts[(i + 2) % n]
            jog = (p2[0] - p1[0], p2[1] - p1[1])
            length = abs(jog[0]) + abs(jog[1])
            if length >= tolerance:
                continue
            e0 = (p1[0] - p0[0], p1[1] - p0[1])
            e1 = (p3[0] - p2[0], p3[1] - p2[1])
            same_dir = e0[0] * e1[0] + e0[1] * e1[1] > 0
            if same_dir and (best is None or length < best[0]):
                best = (length, i, jog, abs(e0[0]) + abs(e0[1]), abs(e1[0]) + abs(e1[1]))
        if best is None:
            break
        _, i, jog, l0, l1 = best
        pts = list(pts)
        if l0 <= l1:
            for k in (i - 1, i):
                pts[k % n] = (pts[k % n][0] + jog[0], pts[k % n][1] + jog[1])
        else:
            for k in (i + 1, i + 2):
                pts[k % n] = (pts[k % n][0] - jog[0], pts[k % n][1] - jog[1])
        pts = _drop_collinear(pts)
    return pts


def polygon_loops(mask: np.ndarray, tolerance: float = 1.0) -> list[list[tuple[int, int]]]:
    """Outer ring first, then one ring per hole, each a rectilinear vertex list."""
    mask = np.asarray(mask, dtype=bool)
    if not mask.any():
        raise EmptyMask("cannot polygonize an empty mask")
    if len(connected_components(mask)) != 1:
        raise FloorplanError("polygonize expects a single connected component")
    loops = sorted(_trace_loops(mask), key=lambda lp: -abs(_shoelace(lp)))
    out = []
    for loop in loops:
        pts = _drop_collinear(loop)
        if tolerance > 1:
            pts = _remove_jogs(pts, tolerance)
        out.append(pts)
    return out


def _bridge(ring: list[tuple[int, int]], hole: list[tuple[int, int]]) -> list[tuple[int, int]]:
    """Splice ``hole`` into ``ring`` along a vertical cut up from its top-left corner."""
    k = min(range(len(hole)), key=lambda i: (hole[i][1], hole[i][0]))
    hx, hy = hole[k]
    best = None
    n = len(ring)
    for i in range(n):
        (x0, y0), (x1, y1) = ring[i], ring[(i + 1) % n]
        if y0 == y1 and min(x0, x1) <= hx <= max(x0, x1) and y0 < hy:
            y = y0
        elif x0 == x1 == hx and min(y0, y1) < hy:
            y = min(max(y0, y1), hy)
        else:
            continue
        if best is None or y > best[0]:
            best = (y, i)
    if best is None:
        raise FloorplanError("hole is not enclosed by the outer boundary")
    y, i = best
    cut = (hx, y)
    spliced = hole[k:] + hole[:k] + [(hx, hy)]
    out = ring[:i + 1] + [cut] + spliced + [cut] + ring[i + 1:]
    # collapse repeated points produced when the cut lands on a vertex
    return [p for j, p in enumerate(out) if p != out[j - 1]]


def polygonize(mask: np.ndarray, tolerance: float = 1.0) -> list[tuple[int, int]]:
    """Boundary of a single 4-connected blob as one rectilinear ring.

    Vertices sit on pixel corners; steps shorter than ``tolerance`` pixels are
    flattened, so at the default tolerance the outline is exact. Holes are
    joined to the outer ring by zero-width vertical cuts; the result is then
    only weakly simple, but its even-odd fill still reproduces the mask.
    """
    outer, *holes = polygon_loops(mask, tolerance)
    ring = outer
    for hole in sorted(holes, key=lambda h: min((y, x) for x, y in h)):
        ring = _bridge(ring, hole)
    return ring
