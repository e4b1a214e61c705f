"""Three cascaded Transformer decoders and the shared type/box/mask heads."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import Component, ComponentType, Floorplan
from .encoder import _sub
from .errors import BadDims, EmptyInput, TooManyDoors
from .nn import layer_norm, linear, multi_head_attention, relu, softmax
from .weights import STAGES, WeightBundle

MASK_THRESHOLD = 0.0
NO_COMPONENT = ComponentType.NO_COMPONENT.index


@dataclass(frozen=True, eq=False)
class CascadePrediction:
    stage: int
    queries: np.ndarray          # (n, d) decoder outputs
    type_logits: np.ndarray      # (n, 15)
    boxes: np.ndarray            # (n, 4) normalized cx, cy, w, h
    mask_logits_lowres: np.ndarray  # (n, H/32, W/32)
    upsample: int = 32

    def __len__(self) -> int:
        return self.queries.shape[0]

    def mask_logits(self, i: int | None = None) -> np.ndarray:
        """Nearest-neighbor upsampled mask logits at canvas resolution."""
        low = self.mask_logits_lowres if i is None else self.mask_logits_lowres[i]
        k = self.upsample
        return np.repeat(np.repeat(low, k, axis=-2), k, axis=-1)

    def probabilities(self) -> np.ndarray:
        return softmax(self.type_logits.astype(np.float64), axis=-1)


@dataclass(frozen=True, eq=False)
class ReconstructedComponent:
    type: ComponentType
    mask: np.ndarray
    bbox: np.ndarray
    score: float


def decoder_layer_forward(tgt: np.ndarray, mem: np.ndarray, w: dict[str, np.ndarray],
                          n_heads: int, apply_norm: bool = True,
                          trace: dict | None = None) -> np.ndarray:
    """Self-attention, add&norm, cross-attention onto memory, add&norm, MLP, add&norm."""
    if tgt.shape[-1] != mem.shape[-1]:
        raise BadDims(f"query dim {tgt.shape[-1]} differs from memory dim {mem.shape[-1]}")

    def norm(x, k):
        return layer_norm(x, w[f"norm{k}.weight"], w[f"norm{k}.bias"]) if apply_norm else x

    sa = multi_head_attention(tgt, tgt, tgt, _sub(w, "self_attn"), n_heads)
    x = norm(tgt + sa, 1)
    ca = multi_head_attention(x, mem, mem, _sub(w, "cross_attn"), n_heads,
                              return_weights=trace is not None)
    if trace is not None:
        ca, trace["cross_attention"] = ca
    x = norm(x + ca, 2)
    ff = linear(relu(linear(x, w["linear1.weight"], w["linear1.bias"])),
                w["linear2.weight"], w["linear2.bias"])
    return norm(x + ff, 3)


def decoder_stack(tgt: np.ndarray, mem: np.ndarray, weights: WeightBundle, stage: str) -> np.ndarray:
    cfg = weights.config
    x = tgt
    for i in range(cfg.decoder_layers):
        x = decoder_layer_forward(x, mem, weights.group(f"decoder.{stage}.{i}"), cfg.n_heads)
    return x


def prediction_heads(embedding: np.ndarray, mem: np.ndarray, weights: WeightBundle,
                     grid: tuple[int, int]) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Type logits, sigmoid boxes and low-resolution mask logits for ``(n, d)`` embeddings.

    The mask head scores every memory token against a projected query; the
    resulting attention map is reshaped to the ``(rows, cols)`` feature grid.
    """
    emb = np.atleast_2d(embedding)
    logits = linear(emb, weights["head.type.weight"], weights["head.type.bias"])
    h = relu(linear(emb, weights["head.bbox.0.weight"], weights["head.bbox.0.bias"]))
    h = relu(linear(h, weights["head.bbox.1.weight"], weights["head.bbox.1.bias"]))
    raw = linear(h, weights["head.bbox.2.weight"], weights["head.bbox.2.bias"])
    boxes = 1.0 / (1.0 + np.exp(-raw.astype(np.float64)))
    q = linear(emb, weights["head.mask.weight"], weights["head.mask.bias"])
    rows, cols = grid
    if mem.shape[0] != rows * cols:
        raise BadDims(f"memory has {mem.shape[0]} tokens, grid is {rows}x{cols}")
    masks = (q @ mem.T) / np.sqrt(mem.shape[1]).astype(q.dtype)
    return logits, boxes, masks.reshape(-1, rows, cols)


def query_counts(n_visible_doors: int, weights: WeightBundle | None = None) -> tuple[int, int, int]:
    if weights is not None:
        extra2, extra3 = weights.config.n_indirect_queries, weights.config.n_door_queries
    else:
        extra2 = extra3 = 15
    return n_visible_doors, n_visible_doors + extra2, n_visible_doors + extra2 + extra3


def cascade_forward(mem: np.ndarray, n_visible_doors: int, weights: WeightBundle,
                    grid: tuple[int, int] | None = None) -> tuple[CascadePrediction, ...]:
    cfg = weights.config
    if n_visible_doors > cfg.n_direct_queries:
        raise TooManyDoors(f"{n_visible_doors} visible doors exceed the "
                           f"{cfg.n_direct_queries} direct-room query embeddings")
    if n_visible_doors < 1:
        raise EmptyInput("the direct-room cascade needs at least one visible door")
    if mem.ndim != 2 or mem.shape[1] != cfg.d_model:
        raise BadDims(f"memory must be (n, {cfg.d_model}), got {mem.shape}")
    if grid is None:
        side = int(round(np.sqrt(mem.shape[0])))
        grid = (side, side)
    fresh = {
        "direct": weights["query.direct"][:n_visible_doors],
        "indirect": weights["query.indirect"],
        "door": weights["query.door"],
    }
    outputs = []
    previous = np.zeros((0, cfg.d_model), dtype=np.float32)
    for k, stage in enumerate(STAGES, start=1):
        tgt = np.concatenate([previous, fresh[stage]], axis=0)
        out = decoder_stack(tgt, mem, weights, stage)
        logits, boxes, masks = prediction_heads(out, mem, weights, grid)
        outputs.append(CascadePrediction(k, out, logits, boxes, masks, upsample=cfg.stride))
        previous = out
    return tuple(outputs)


def reconstruct(pred: CascadePrediction) -> list[ReconstructedComponent]:
    """Argmax type per query and its thresholded mask; no-component and empty masks are dropped."""
    probs = pred.probabilities()
    out = []
    for i in range(len(pred)):
        k = int(np.argmax(pred.type_logits[i]))
        if k == NO_COMPONENT:
            continue
        mask = pred.mask_logits(i) > MASK_THRESHOLD
        if not mask.any():
            continue
        out.append(ReconstructedComponent(ComponentType.from_index(k), mask,
                                          pred.boxes[i].copy(), float(probs[i, k])))
    return out


def assemble_floorplan(input_plan: Floorplan, stage3: CascadePrediction) -> Floorplan:
    """Visible input components plus every stage-3 reconstruction.

    Reconstructed rooms keep their thresholded mask. Reconstructed doors are
    reduced to a 2x2 stamp at the mask's center of mass.
    """
    width, height = input_plan.canvas
    comps = [c for c in input_plan.components if c.visible]
    for rc in reconstruct(stage3):
        mask = rc.mask[:height, :width]
        if mask.shape != (height, width):
            raise BadDims(f"mask {rc.mask.shape} smaller than canvas {width}x{height}")
        if not mask.any():
            continue
        if rc.type.is_door:
            ys, xs = np.nonzero(mask)
            cx = min(max(int(np.floor(xs.mean())), 0), width - 2)
            cy = min(max(int(np.floor(ys.mean())), 0), height - 2)
            comps.append(Component(rc.type, False, center=(cx, cy), score=rc.score))
        else:
            comps.append(Component(rc.type, False, mask=mask, score=rc.score))
    return input_plan.with_components(comps)
