"""SVG rendering, PGM/PPM raster export and matplotlib report figures."""

from __future__ import annotations

from pathlib import Path
from xml.sax.saxutils import escape

import numpy as np

from .core import ComponentType, Floorplan, RasterStack, component_mask, connected_components

# fixed per-channel colors, indexed by channel (rooms 0-9, doors 10-13)
COLOR_TABLE: dict[ComponentType, tuple[int, int, int]] = {
    ComponentType.LIVING_ROOM: (238, 77, 77),
    ComponentType.KITCHEN: (195, 33, 96),
    ComponentType.WESTERN_STYLE_ROOM: (255, 215, 0),
    ComponentType.BATHROOM: (65, 105, 225),
    ComponentType.BALCONY: (50, 205, 50),
    ComponentType.CORRIDOR: (255, 165, 0),
    ComponentType.JAPANESE_STYLE_ROOM: (139, 69, 19),
    ComponentType.WASHROOM: (0, 206, 209),
    ComponentType.TOILET: (147, 112, 219),
    ComponentType.CLOSET: (128, 128, 128),
    ComponentType.STANDARD_DOOR: (0, 0, 0),
    ComponentType.ENTRANCE_DOOR: (220, 20, 60),
    ComponentType.CLOSET_DOOR: (64, 64, 64),
    ComponentType.OPEN_PORTAL: (0, 128, 128),
}
BACKGROUND = (255, 255, 255)


def hex_color(kind: ComponentType) -> str:
    return "#%02x%02x%02x" % COLOR_TABLE[kind]


def _fmt(v: float) -> str:
    return str(int(v)) if float(v).is_integer() else f"{v:.3f}".rstrip("0").rstrip(".")


def _path_data(loops) -> str:
    parts = []
    for loop in loops:
        head, *tail = loop
        parts.append(f"M{_fmt(head[0])} {_fmt(head[1])}"
                     + "".join(f"L{_fmt(x)} {_fmt(y)}" for x, y in tail) + "Z")
    return "".join(parts)


def room_outlines(comp, canvas) -> list[list[tuple[float, float]]]:
    if comp.polygon is not None:
        return [list(comp.polygon)]
    from .refine import polygon_loops

    return [loop for part in connected_components(component_mask(comp, canvas))
            for loop in polygon_loops(part)]


def render_svg(plan: Floorplan) -> str:
    w, h = plan.canvas
    lines = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">',
        f'<rect class="canvas" x="0" y="0" width="{w}" height="{h}" fill="#ffffff"/>',
    ]
    for comp in plan.rooms:
        style = "" if comp.visible else ' fill-opacity="0.6" stroke-dasharray="4 2"'
        lines.append(f'<path class="room" data-type="{escape(comp.type.value)}" '
                     f'd="{_path_data(room_outlines(comp, plan.canvas))}" '
                     f'fill="{hex_color(comp.type)}" fill-rule="evenodd" stroke="#000000" '
                     f'stroke-width="1"{style}/>')
    for comp in plan.doors:
        ys, xs = np.nonzero(component_mask(comp, plan.canvas))
        if xs.size == 0:
            continue
        x0, y0 = int(xs.min()), int(ys.min())
        lines.append(f'<rect class="door" data-type="{escape(comp.type.value)}" x="{x0}" y="{y0}" '
                     f'width="{int(xs.max()) + 1 - x0}" height="{int(ys.max()) + 1 - y0}" '
                     f'fill="{hex_color(comp.type)}"/>')
    lines.append("</svg>")
    return "\n".join(lines) + "\n"


# --------------------------------------------------------------------------
# raster export


def write_pgm(mask: np.ndarray, path: str | Path) -> None:
    """Binary PGM (P5), 255 for set pixels."""
    h, w = mask.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write((np.asarray(mask, dtype=bool).astype(np.uint8) * 255).tobytes())


def read_pnm(path: str | Path) -> np.ndarray:
    """Read a binary P5/P6 file written by this module."""
    raw = Path(path).read_bytes()
    fields, pos = [], 0
    while len(fields) < 4:
        while raw[pos:pos + 1].isspace():
            pos += 1
        end = pos
        while not raw[end:end + 1].isspace():
            end += 1
        fields.append(raw[pos:end].decode("ascii"))
        pos = end
    pos += 1
    magic, w, h = fields[0], int(fields[1]), int(fields[2])
    depth = 3 if magic == "P6" else 1
    data = np.frombuffer(raw[pos:pos + w * h * depth], dtype=np.uint8)
    return data.reshape(h, w, depth) if depth == 3 else data.reshape(h, w)


def composite(stack: RasterStack) -> np.ndarray:
    """RGB image; rooms are painted first, doors on top, higher channels win."""
    img = np.empty((stack.height, stack.width, 3), dtype=np.uint8)
    img[:] = BACKGROUND
    for kind, color in COLOR_TABLE.items():
        img[stack.channel(kind)] = color
    return img


def write_ppm(image: np.ndarray, path: str | Path) -> None:
    h, w, _ = image.shape
    with open(path, "wb") as fh:
        fh.write(f"P6\n{w} {h}\n255\n".encode("ascii"))
        fh.write(np.ascontiguousarray(image, dtype=np.uint8).tobytes())


def export_raster(stack: RasterStack, out_dir: str | Path, stem: str) -> list[Path]:
    """One PGM per channel plus a composite PPM; returns written paths."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    for kind in COLOR_TABLE:
        p = out_dir / f"{stem}.{kind.channel:02d}-{kind.value}.pgm"
        write_pgm(stack.channel(kind), p)
        paths.append(p)
    p = out_dir / f"{stem}.composite.ppm"
    write_ppm(composite(stack), p)
    paths.append(p)
    return paths


# --------------------------------------------------------------------------
# figures


def _pyplot():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    return plt


def plot_floorplan(plan: Floorplan, path: str | Path, title: str | None = None) -> Path:
    from .core import rasterize

    plt = _pyplot()
    img = composite(rasterize(plan))
    fig, ax = plt.subplots(figsize=(5, 5))
    ax.imshow(img, interpolation="nearest")
    ax.set_xticks([])
    ax.set_yticks([])
    ax.set_title(title or plan.id, fontsize=10)
    fig.savefig(path, dpi=120, bbox_inches="tight", metadata={"Software": None})
    plt.close(fig)
    return Path(path)


def plot_metrics(rows: list[dict], path: str | Path) -> Path:
    """Grouped bars of mean precision/recall/F1 for rooms and doors."""
    plt = _pyplot()
    keys = ["room_precision", "room_recall", "room_f1", "door_precision", "door_recall", "door_f1"]
    means = [float(np.mean([r[k] for r in rows])) if rows else 0.0 for k in keys]
    fig, ax = plt.subplots(figsize=(6, 3.5))
    x = np.arange(3)
    ax.bar(x - 0.2, means[:3], width=0.4, label="rooms", color="#4c72b0")
    ax.bar(x + 0.2, means[3:], width=0.4, label="doors", color="#dd8452")
    ax.set_xticks(x)
    ax.set_xticklabels(["precision", "recall", "F1"])
    ax.set_ylim(0, 1)
    ax.set_ylabel("mean over samples")
    ax.set_title(f"{len(rows)} samples")
    ax.legend(frameon=False)
    fig.savefig(path, dpi=120, bbox_inches="tight", metadata={"Software": None})
    plt.close(fig)
    return Path(path)
