"""End-to-end glue between plans on disk and the network, losses and metrics."""

from __future__ import annotations

import numpy as np

from .core import Floorplan, plan_from_dict, plan_to_dict
from .decoder import CascadePrediction, assemble_floorplan, cascade_forward
from .encoder import encode
from .errors import FloorplanError, InvariantViolation
from .losses import cascade_targets, loss_total, target_arrays
from .metrics import align_evaluate, evaluate
from .raster import Frame, normalize_plan, split_branches, transform_plan
from .weights import WeightBundle


def infer(plan: Floorplan, weights: WeightBundle) -> dict:
    """Normalize the visible part of ``plan``, run encoder and cascades, assemble a prediction.

    The returned dict is a floorplan JSON document (in the normalized frame)
    extended with ``frame``, ``shapes`` and per-stage ``cascades`` outputs.
    """
    cfg = weights.config
    normalized, frame = normalize_plan(plan.visible_part(), "test")
    branches = split_branches(normalized)
    enc = encode(branches, weights)
    rows, cols, dim = enc.feature_shape
    n_doors = len(normalized.doors)
    stages = cascade_forward(enc.memory, n_doors, weights, grid=(rows, cols))
    shapes = {
        "input": [frame.canvas, frame.canvas, 14],
        "feature_map": [rows, cols, dim],
        "encoder_tokens": len(enc.tokens),
        "memory_tokens": int(enc.memory.shape[0]),
        "query_counts": [len(s) for s in stages],
        "type_logits": int(stages[0].type_logits.shape[1]),
        "visible_rooms": len(branches.room_images),
        "visible_doors": n_doors,
    }
    check_shapes(shapes, cfg)
    out = plan_to_dict(assemble_floorplan(normalized, stages[2]))
    out["frame"] = frame.to_dict()
    out["shapes"] = shapes
    out["cascades"] = [cascade_to_dict(s) for s in stages]
    return out


def check_shapes(shapes: dict, cfg) -> None:
    side = shapes["input"][0] // cfg.stride
    y = shapes["visible_doors"]
    expected = {
        "feature_map": [side, side, cfg.d_model],
        "encoder_tokens": 3 * side * side,
        "memory_tokens": side * side,
        "query_counts": [y, y + cfg.n_indirect_queries, y + cfg.n_indirect_queries + cfg.n_door_queries],
        "type_logits": cfg.n_classes,
    }
    for key, value in expected.items():
        if shapes[key] != value:
            raise InvariantViolation(f"{key}: expected {value}, got {shapes[key]}")


def cascade_to_dict(pred: CascadePrediction) -> dict:
    return {
        "stage": pred.stage,
        "type_logits": pred.type_logits.astype(np.float64).tolist(),
        "boxes": pred.boxes.astype(np.float64).tolist(),
        "mask_logits": pred.mask_logits_lowres.astype(np.float64).tolist(),
        "upsample": pred.upsample,
    }


def cascade_from_dict(d: dict) -> CascadePrediction:
    logits = np.asarray(d["type_logits"], dtype=np.float64).reshape(-1, 15)
    n = logits.shape[0]
    boxes = np.asarray(d["boxes"], dtype=np.float64).reshape(n, 4)
    masks = np.asarray(d["mask_logits"], dtype=np.float64)
    if masks.ndim != 3 or masks.shape[0] != n:
        raise FloorplanError(f"stage {d.get('stage')}: mask logits do not match {n} queries")
    return CascadePrediction(int(d["stage"]), np.zeros((n, 0)), logits, boxes, masks, int(d.get("upsample", 32)))


class _UpsampledMasks:
    """Index-on-demand view of a cascade's canvas-resolution mask logits."""

    def __init__(self, pred: CascadePrediction):
        self.pred = pred
        n, h, w = pred.mask_logits_lowres.shape
        self.shape = (n, h * pred.upsample, w * pred.upsample)

    def __getitem__(self, i):
        return self.pred.mask_logits(i)

    def __len__(self):
        return self.shape[0]


def gt_in_frame(pred_doc: dict, gt: Floorplan) -> Floorplan:
    if "frame" in pred_doc:
        return transform_plan(gt, Frame.from_dict(pred_doc["frame"]))
    return gt


def cascade_losses(pred_doc: dict, gt: Floorplan) -> dict:
    """Per-stage loss terms against the stage targets; stages are normalized separately and summed."""
    if "cascades" not in pred_doc:
        raise FloorplanError("prediction file carries no cascade outputs")
    gt = gt_in_frame(pred_doc, gt)
    stages, total = [], 0.0
    for entry in pred_doc["cascades"]:
        pred = cascade_from_dict(entry)
        masks = _UpsampledMasks(pred)
        if masks.shape[1:] != (gt.height, gt.width):
            raise FloorplanError(f"mask logits {masks.shape[1:]} do not cover the {gt.width}x{gt.height} canvas")
        types, boxes, gmasks = target_arrays(cascade_targets(pred.stage, gt), gt.canvas)
        res = loss_total(pred.type_logits, pred.boxes, masks, types, boxes, gmasks,
                         allow_empty=True, with_grad=False)
        d = res.to_dict()
        d["stage"] = pred.stage
        d["targets"] = int(len(types))
        stages.append(d)
        total += res.total
    return {"stages": stages, "total": total}


def evaluate_docs(pred_doc: dict, gt: Floorplan, align: bool = False, exhaustive: bool = False,
                  objective: str = "mean") -> dict:
    pred = plan_from_dict(pred_doc)
    gt = gt_in_frame(pred_doc, gt)
    if align:
        res = align_evaluate(pred, gt, objective=objective, exhaustive=exhaustive)
        return {"id": pred.id, "rooms": res.rooms.to_dict(), "doors": res.doors.to_dict(),
                "translation": list(res.translation), "score": res.score}
    rooms, doors = evaluate(pred, gt)
    return {"id": pred.id, "rooms": rooms.to_dict(), "doors": doors.to_dict()}
