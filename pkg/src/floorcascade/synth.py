"""Seeded synthetic floorplans: recursive rectangle splits, doors on shared walls."""

from __future__ import annotations

from collections import deque

import numpy as np

from .core import Component, ComponentType, Floorplan
from .errors import BadConfig

GRID = 8
MIN_SIDE = 16

# rough category frequencies for rooms other than the single living room
ROOM_FREQUENCIES = {
    ComponentType.KITCHEN: 0.10,
    ComponentType.WESTERN_STYLE_ROOM: 0.28,
    ComponentType.BATHROOM: 0.08,
    ComponentType.BALCONY: 0.07,
    ComponentType.CORRIDOR: 0.10,
    ComponentType.JAPANESE_STYLE_ROOM: 0.05,
    ComponentType.WASHROOM: 0.08,
    ComponentType.TOILET: 0.08,
    ComponentType.CLOSET: 0.16,
}
OPEN_PORTAL_PROB = 0.2


def _split_rooms(rng, footprint, n_rooms):
    rects = [footprint]
    while len(rects) < n_rooms:
        order = sorted(range(len(rects)), key=lambda i: (-(rects[i][2] - rects[i][0]) * (rects[i][3] - rects[i][1]), i))
        for i in order:
            x0, y0, x1, y1 = rects[i]
            w, h = x1 - x0, y1 - y0
            vertical = w > h or (w == h and rng.random() < 0.5)
            span = w if vertical else h
            cuts = (span - 2 * MIN_SIDE) // GRID + 1
            if cuts <= 0:
                vertical = not vertical
                span = w if vertical else h
                cuts = (span - 2 * MIN_SIDE) // GRID + 1
            if cuts > 0:
                break
        else:
            raise BadConfig(f"cannot split the footprint into {n_rooms} rooms")
        at = MIN_SIDE + GRID * int(rng.integers(cuts))
        if vertical:
            a, b = (x0, y0, x0 + at, y1), (x0 + at, y0, x1, y1)
        else:
            a, b = (x0, y0, x1, y0 + at), (x0, y0 + at, x1, y1)
        rects[i:i + 1] = [a, b]
    return rects


def _shared_wall(a, b):
    """``(axis, coord, lo, hi)`` of the wall two rectangles share, or None."""
    for p, q in ((a, b), (b, a)):
        if p[2] == q[0]:
            lo, hi = max(p[1], q[1]), min(p[3], q[3])
            if hi - lo >= GRID:
                return ("x", p[2], lo, hi)
        if p[3] == q[1]:
            lo, hi = max(p[0], q[0]), min(p[2], q[2])
            if hi - lo >= GRID:
                return ("y", p[3], lo, hi)
    return None


def _door_anchor(wall) -> tuple[int, int]:
    """2x2 stamp anchor straddling the wall at its midpoint."""
    axis, coord, lo, hi = wall
    mid = (lo + hi) // 2
    return (coord - 1, mid - 1) if axis == "x" else (mid - 1, coord - 1)


def _exterior_wall(rect, footprint):
    x0, y0, x1, y1 = rect
    fx0, fy0, fx1, fy1 = footprint
    if x0 == fx0:
        return ("x", x0, y0, y1)
    if y0 == fy0:
        return ("y", y0, x0, x1)
    if x1 == fx1:
        return ("x", x1, y0, y1)
    if y1 == fy1:
        return ("y", y1, x0, x1)
    return None


def _rect_polygon(r):
    x0, y0, x1, y1 = r
    return ((x0, y0), (x1, y0), (x1, y1), (x0, y1))


def gen_synthetic(seed: int, n_rooms: int, n_doors: int, canvas: int = 256) -> tuple[Floorplan, Floorplan]:
    """Return ``(partial, full)`` plans.

    ``full`` carries visibility flags on every component; ``partial`` holds
    only its visible components. The visible rooms form a door-connected
    subset and a door is visible iff it touches a visible room.
    """
    if not 2 <= n_rooms <= 20:
        raise BadConfig(f"n_rooms must lie in [2, 20], got {n_rooms}")
    if n_doors < n_rooms - 1:
        raise BadConfig(f"{n_doors} doors cannot connect {n_rooms} rooms")
    if canvas < 8 * GRID or canvas % GRID:
        raise BadConfig(f"canvas must be a multiple of {GRID} and at least {8 * GRID}")
    rng = np.random.default_rng(seed)

    margin = 2 * GRID
    usable = (canvas - 2 * margin) // GRID
    fw = GRID * int(rng.integers(max(usable // 2, 1), usable + 1))
    fh = GRID * int(rng.integers(max(usable // 2, 1), usable + 1))
    fx = margin + GRID * int(rng.integers((canvas - 2 * margin - fw) // GRID + 1))
    fy = margin + GRID * int(rng.integers((canvas - 2 * margin - fh) // GRID + 1))
    footprint = (fx, fy, fx + fw, fy + fh)
    rects = _split_rooms(rng, footprint, n_rooms)

    walls = {}
    for i in range(n_rooms):
        for j in range(i + 1, n_rooms):
            wall = _shared_wall(rects[i], rects[j])
            if wall is not None:
                walls[(i, j)] = wall
    edges = list(walls)
    n_entrance = 1 if n_doors > len(edges) else 0
    if n_doors > len(edges) + 1:
        raise BadConfig(f"only {len(edges) + 1} door sites for {n_doors} doors")

    # random spanning tree, then extra walls until the door budget is spent
    order = [edges[k] for k in rng.permutation(len(edges))]
    parent = list(range(n_rooms))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    tree, rest = [], []
    for i, j in order:
        ri, rj = find(i), find(j)
        if ri != rj:
            parent[ri] = rj
            tree.append((i, j))
        else:
            rest.append((i, j))
    door_edges = tree + rest[:n_doors - n_entrance - len(tree)]

    areas = [(r[2] - r[0]) * (r[3] - r[1]) for r in rects]
    kinds = list(ROOM_FREQUENCIES)
    probs = np.array([ROOM_FREQUENCIES[k] for k in kinds])
    draws = rng.choice(len(kinds), size=n_rooms, p=probs / probs.sum())
    types = [kinds[d] for d in draws]
    types[int(np.argmax(areas))] = ComponentType.LIVING_ROOM

    adjacency = {i: [] for i in range(n_rooms)}
    for i, j in door_edges:
        adjacency[i].append(j)
        adjacency[j].append(i)
    n_visible = int(rng.integers(1, n_rooms))
    start = int(rng.integers(n_rooms))
    visible, queue = {start}, deque([start])
    while queue and len(visible) < n_visible:
        cur = queue.popleft()
        for nb in rng.permutation(sorted(adjacency[cur])).tolist():
            if nb not in visible and len(visible) < n_visible:
                visible.add(nb)
                queue.append(nb)

    comps = [Component(types[i], i in visible, polygon=_rect_polygon(rects[i])) for i in range(n_rooms)]
    for i, j in door_edges:
        if ComponentType.CLOSET in (types[i], types[j]):
            kind = ComponentType.CLOSET_DOOR
        elif rng.random() < OPEN_PORTAL_PROB:
            kind = ComponentType.OPEN_PORTAL
        else:
            kind = ComponentType.STANDARD_DOOR
        comps.append(Component(kind, i in visible or j in visible, center=_door_anchor(walls[(i, j)])))
    if n_entrance:
        hosts = [i for i in range(n_rooms) if _exterior_wall(rects[i], footprint) is not None]
        host = hosts[int(rng.integers(len(hosts)))]
        comps.append(Component(ComponentType.ENTRANCE_DOOR, host in visible,
                               center=_door_anchor(_exterior_wall(rects[host], footprint))))

    full = Floorplan(f"synth-{seed}", (canvas, canvas), tuple(comps))
    partial = full.with_components(c for c in comps if c.visible)
    return partial, full
