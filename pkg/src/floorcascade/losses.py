"""Set-prediction matching and the type/box/segmentation losses with analytic gradients.

All loss functions return ``(value, gradient)`` where the gradient has the
shape of the prediction input (logits, boxes or mask logits). Computation is
in float64.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .core import BBox, Component, ComponentType, Floorplan, bbox_of, component_mask
from .errors import NoMatches, TooFewQueries
from .hungarian import linear_sum_assignment

NO_COMPONENT = ComponentType.NO_COMPONENT.index

# per-type weights, inversely proportional to training-set frequency
_T = ComponentType
CLASS_WEIGHT_TABLE = (
    (_T.LIVING_ROOM, 1.135),
    (_T.KITCHEN, 3.7),
    (_T.WESTERN_STYLE_ROOM, 0.6),   # "bedroom"
    (_T.TOILET, 0.63),
    (_T.BALCONY, 0.47),
    (_T.CORRIDOR, 1.2),
    (_T.JAPANESE_STYLE_ROOM, 2.2),  # "tatami"
    (_T.WASHROOM, 0.76),
    (_T.BATHROOM, 0.48),
    (_T.CLOSET, 0.18),
    (_T.CLOSET_DOOR, 0.763),
    (_T.OPEN_PORTAL, 0.524),        # "open door"
    (_T.STANDARD_DOOR, 0.33),       # "door"
    (_T.ENTRANCE_DOOR, 0.7),
    (_T.NO_COMPONENT, 0.1),
)

MATCH_COST_CLASS = 1.0
BBOX_L1_WEIGHT = 5.0
BBOX_IOU_WEIGHT = 2.0
SEG_WEIGHT = 5.0
FOCAL_GAMMA = 2.0
FOCAL_ALPHA = 0.25
DICE_EPS = 1e-6
DIRECT_DILATION = 3


def default_class_weights() -> np.ndarray:
    """Weights indexed by class index (``ComponentType.index``)."""
    w = np.zeros(len(ComponentType))
    for kind, value in CLASS_WEIGHT_TABLE:
        w[kind.index] = value
    return w


@dataclass(frozen=True)
class Assignment:
    pairs: tuple[tuple[int, int], ...]

    @property
    def pred_indices(self) -> np.ndarray:
        return np.array([p for p, _ in self.pairs], dtype=np.int64)

    @property
    def gt_indices(self) -> np.ndarray:
        return np.array([g for _, g in self.pairs], dtype=np.int64)

    def __len__(self) -> int:
        return len(self.pairs)


# --------------------------------------------------------------------------
# boxes


def _corners(b: np.ndarray):
    return b[..., 0] - b[..., 2] / 2, b[..., 1] - b[..., 3] / 2, b[..., 0] + b[..., 2] / 2, b[..., 1] + b[..., 3] / 2


def box_iou_matrix(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Pairwise IoU between ``(n, 4)`` and ``(m, 4)`` cx/cy/w/h boxes."""
    a = np.asarray(a, dtype=np.float64)[:, None, :]
    b = np.asarray(b, dtype=np.float64)[None, :, :]
    ax0, ay0, ax1, ay1 = _corners(a)
    bx0, by0, bx1, by1 = _corners(b)
    iw = np.clip(np.minimum(ax1, bx1) - np.maximum(ax0, bx0), 0, None)
    ih = np.clip(np.minimum(ay1, by1) - np.maximum(ay0, by0), 0, None)
    inter = iw * ih
    union = (ax1 - ax0) * (ay1 - ay0) + (bx1 - bx0) * (by1 - by0) - inter
    return np.where(union > 0, inter / np.where(union > 0, union, 1), 0.0)


def box_iou_with_grad(p: np.ndarray, g: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Row-wise IoU of ``(k, 4)`` predicted vs target boxes, and dIoU/dp."""
    p = np.asarray(p, dtype=np.float64)
    g = np.asarray(g, dtype=np.float64)
    px0, py0, px1, py1 = _corners(p)
    gx0, gy0, gx1, gy1 = _corners(g)
    ow = np.minimum(px1, gx1) - np.maximum(px0, gx0)
    oh = np.minimum(py1, gy1) - np.maximum(py0, gy0)
    iw, ih = np.clip(ow, 0, None), np.clip(oh, 0, None)
    inter = iw * ih
    union = (px1 - px0) * (py1 - py0) + (gx1 - gx0) * (gy1 - gy0) - inter
    iou = inter / union

    # derivatives of the overlap extents w.r.t. (cx, w) and (cy, h)
    right_x, left_x = (px1 < gx1).astype(float), (px0 > gx0).astype(float)
    right_y, left_y = (py1 < gy1).astype(float), (py0 > gy0).astype(float)
    on_x, on_y = (ow > 0).astype(float), (oh > 0).astype(float)
    diw = np.stack([right_x - left_x, np.zeros_like(ow), 0.5 * (right_x + left_x), np.zeros_like(ow)], axis=1) * on_x[:, None]
    dih = np.stack([np.zeros_like(oh), right_y - left_y, np.zeros_like(oh), 0.5 * (right_y + left_y)], axis=1) * on_y[:, None]
    dinter = diw * ih[:, None] + dih * iw[:, None]
    darea = np.stack([np.zeros_like(ow), np.zeros_like(ow), p[:, 3], p[:, 2]], axis=1)
    dunion = darea - dinter
    grad = (dinter * union[:, None] - inter[:, None] * dunion) / (union ** 2)[:, None]
    return iou, grad


# --------------------------------------------------------------------------
# matching


def match_cost_matrix(probs: np.ndarray, pred_boxes: np.ndarray,
                      gt_types: np.ndarray, gt_boxes: np.ndarray) -> np.ndarray:
    probs = np.asarray(probs, dtype=np.float64)
    pred_boxes = np.asarray(pred_boxes, dtype=np.float64)
    gt_boxes = np.asarray(gt_boxes, dtype=np.float64).reshape(-1, 4)
    gt_types = np.asarray(gt_types, dtype=np.int64)
    l1 = np.abs(pred_boxes[:, None, :] - gt_boxes[None, :, :]).sum(axis=-1)
    return (-MATCH_COST_CLASS * probs[:, gt_types]
            + BBOX_L1_WEIGHT * l1
            - BBOX_IOU_WEIGHT * box_iou_matrix(pred_boxes, gt_boxes))


def assign(cost: np.ndarray) -> Assignment:
    cost = np.asarray(cost, dtype=np.float64)
    n_pred, n_gt = cost.shape
    if n_gt > n_pred:
        raise TooFewQueries(f"{n_gt} targets but only {n_pred} predictions")
    rows, cols = linear_sum_assignment(cost)
    return Assignment(tuple((int(r), int(c)) for r, c in zip(rows, cols)))


def match_hungarian(preds: list[tuple[np.ndarray, BBox]],
                    gts: list[tuple[ComponentType, BBox]]) -> Assignment:
    """DETR-style bipartite matching on class probability, box L1 and box IoU."""
    if len(gts) > len(preds):
        raise TooFewQueries(f"{len(gts)} targets but only {len(preds)} predictions")
    if not gts:
        return Assignment(())
    probs = np.array([p for p, _ in preds], dtype=np.float64)
    boxes = np.array([b.as_array() for _, b in preds])
    types = np.array([t.index for t, _ in gts])
    gboxes = np.array([b.as_array() for _, b in gts])
    return assign(match_cost_matrix(probs, boxes, types, gboxes))


# --------------------------------------------------------------------------
# losses


def log_softmax(z: np.ndarray) -> np.ndarray:
    m = z.max(axis=-1, keepdims=True)
    return z - m - np.log(np.exp(z - m).sum(axis=-1, keepdims=True))


def type_targets(n_pred: int, assignment: Assignment, gt_types) -> np.ndarray:
    targets = np.full(n_pred, NO_COMPONENT, dtype=np.int64)
    gt_types = np.asarray(gt_types, dtype=np.int64)
    for p, g in assignment.pairs:
        targets[p] = gt_types[g]
    return targets


def loss_type(logits: np.ndarray, assignment: Assignment, gt_types,
              weights: np.ndarray | None = None) -> tuple[float, np.ndarray]:
    """Class-weighted softmax loss averaged over every prediction; unmatched ones target no-component."""
    z = np.asarray(logits, dtype=np.float64)
    w = default_class_weights() if weights is None else np.asarray(weights, dtype=np.float64)
    n = z.shape[0]
    t = type_targets(n, assignment, gt_types)
    logp = log_softmax(z)
    wt = w[t]
    value = float(np.sum(-wt * logp[np.arange(n), t]) / n)
    grad = np.exp(logp)
    grad[np.arange(n), t] -= 1.0
    grad *= (wt / n)[:, None]
    return value, grad


def loss_bbox(pred_boxes: np.ndarray, gt_boxes: np.ndarray,
              assignment: Assignment) -> tuple[float, np.ndarray]:
    """Mean over matched pairs of ``5 * L1 - 2 * IoU``."""
    if len(assignment) == 0:
        raise NoMatches("box loss needs at least one matched pair")
    b = np.asarray(pred_boxes, dtype=np.float64)
    g = np.asarray(gt_boxes, dtype=np.float64).reshape(-1, 4)
    pi, gi = assignment.pred_indices, assignment.gt_indices
    diff = b[pi] - g[gi]
    iou, diou = box_iou_with_grad(b[pi], g[gi])
    k = len(assignment)
    value = float(np.sum(BBOX_L1_WEIGHT * np.abs(diff).sum(axis=1) - BBOX_IOU_WEIGHT * iou) / k)
    grad = np.zeros_like(b)
    np.add.at(grad, pi, (BBOX_L1_WEIGHT * np.sign(diff) - BBOX_IOU_WEIGHT * diou) / k)
    return value, grad


def _log_sigmoid(z: np.ndarray) -> np.ndarray:
    return -np.logaddexp(0.0, -z)


def _sigmoid(z: np.ndarray) -> np.ndarray:
    return np.exp(_log_sigmoid(z))


def focal_loss(z: np.ndarray, target: np.ndarray, gamma: float = FOCAL_GAMMA,
               alpha: float = FOCAL_ALPHA) -> tuple[np.ndarray, np.ndarray]:
    """Per-pixel alpha-balanced focal loss on logits and its derivative."""
    z = np.asarray(z, dtype=np.float64)
    pos = np.asarray(target, dtype=bool)
    sign = np.where(pos, 1.0, -1.0)
    log_pt = _log_sigmoid(sign * z)
    pt = np.exp(log_pt)
    alpha_t = np.where(pos, alpha, 1.0 - alpha)
    q = 1.0 - pt
    loss = -alpha_t * q ** gamma * log_pt
    # dL/dz = -s * alpha_t * (1-pt)^gamma * [(1-pt) - gamma * pt * log(pt)]
    grad = -sign * alpha_t * q ** gamma * (q - gamma * pt * log_pt)
    return loss, grad


def dice_loss(z: np.ndarray, target: np.ndarray, eps: float = DICE_EPS) -> tuple[float, np.ndarray]:
    """Soft dice ``1 - (2 sum(m g) + eps) / (sum(m) + sum(g) + eps)`` with ``m = sigmoid(z)``."""
    z = np.asarray(z, dtype=np.float64)
    g = np.asarray(target, dtype=np.float64)
    m = _sigmoid(z)
    num = 2.0 * np.sum(m * g) + eps
    den = np.sum(m) + np.sum(g) + eps
    value = 1.0 - num / den
    dm = -(2.0 * g * den - num) / den ** 2
    return float(value), dm * m * (1.0 - m)


def loss_seg(mask_logits, gt_masks, assignment: Assignment,
             gamma: float = FOCAL_GAMMA, alpha: float = FOCAL_ALPHA,
             eps: float = DICE_EPS, with_grad: bool = True) -> tuple[float, np.ndarray | None]:
    """``5 / |matches| * sum(dice + mean focal)`` over matched pairs.

    ``mask_logits`` only needs integer indexing, so lazily upsampled logits
    can be scored without materializing every query; pass
    ``with_grad=False`` in that case.
    """
    if len(assignment) == 0:
        raise NoMatches("segmentation loss needs at least one matched pair")
    k = len(assignment)
    scale = SEG_WEIGHT / k
    grad = np.zeros(np.shape(mask_logits)) if with_grad else None
    total = 0.0
    for p, g in assignment.pairs:
        z = np.asarray(mask_logits[p], dtype=np.float64)
        target = np.asarray(gt_masks[g])
        if z.shape != target.shape:
            raise ValueError(f"mask shapes differ: {z.shape} vs {target.shape}")
        d_val, d_grad = dice_loss(z, target, eps)
        f_val, f_grad = focal_loss(z, target, gamma, alpha)
        total += d_val + f_val.sum() / z.size
        if with_grad:
            grad[p] += scale * (d_grad + f_grad / z.size)
    return float(scale * total), grad


@dataclass
class LossBreakdown:
    type: float
    bbox: float
    seg: float
    assignment: Assignment
    grads: dict[str, np.ndarray] = field(repr=False, default_factory=dict)

    @property
    def total(self) -> float:
        return self.type + self.bbox + self.seg

    def to_dict(self) -> dict:
        return {"type": self.type, "bbox": self.bbox, "seg": self.seg, "total": self.total,
                "matches": [list(p) for p in self.assignment.pairs]}


def loss_total(logits, boxes, mask_logits, gt_types, gt_boxes, gt_masks,
               assignment: Assignment | None = None, weights: np.ndarray | None = None,
               allow_empty: bool = False, with_grad: bool = True) -> LossBreakdown:
    """``L_type + L_bbox + L_seg``; matches by Hungarian assignment unless one is given.

    With ``allow_empty`` a target-free set scores box and mask terms as 0
    instead of raising ``NoMatches``.
    """
    logits = np.asarray(logits, dtype=np.float64)
    gt_types = np.asarray(gt_types, dtype=np.int64)
    if assignment is None:
        if len(gt_types):
            probs = np.exp(log_softmax(logits))
            assignment = assign(match_cost_matrix(probs, boxes, gt_types, gt_boxes))
        else:
            assignment = Assignment(())
    t_val, t_grad = loss_type(logits, assignment, gt_types, weights)
    if len(assignment) == 0 and allow_empty:
        b_val, b_grad = 0.0, np.zeros(np.shape(boxes))
        s_val, s_grad = 0.0, (np.zeros(np.shape(mask_logits)) if with_grad else None)
    else:
        b_val, b_grad = loss_bbox(boxes, gt_boxes, assignment)
        s_val, s_grad = loss_seg(mask_logits, gt_masks, assignment, with_grad=with_grad)
    return LossBreakdown(t_val, b_val, s_val, assignment,
                         {"logits": t_grad, "boxes": b_grad, "mask_logits": s_grad})


# --------------------------------------------------------------------------
# cascade targets


def annotate_invisible_rooms(gt: Floorplan) -> dict[int, str]:
    """Map each invisible room's component index to ``"direct"`` or ``"indirect"``.

    A room is direct when its mask, dilated by 3 px (square neighborhood),
    touches a visible door stamp.
    """
    doors = np.zeros((gt.height, gt.width), dtype=bool)
    for c in gt.components:
        if c.visible and c.type.is_door:
            doors |= component_mask(c, gt.canvas)
    size = 2 * DIRECT_DILATION + 1
    out = {}
    for i, c in enumerate(gt.components):
        if c.type.is_room and not c.visible:
            grown = ndimage.binary_dilation(component_mask(c, gt.canvas),
                                            structure=np.ones((size, size), dtype=bool))
            out[i] = "direct" if (grown & doors).any() else "indirect"
    return out


def cascade_target_indices(stage: int, gt: Floorplan) -> list[int]:
    if stage not in (1, 2, 3):
        raise ValueError(f"stage must be 1, 2 or 3, got {stage}")
    labels = annotate_invisible_rooms(gt)
    keep = {1: {"direct"}, 2: {"direct", "indirect"}, 3: {"direct", "indirect"}}[stage]
    out = []
    for i, c in enumerate(gt.components):
        if i in labels and labels[i] in keep:
            out.append(i)
        elif stage == 3 and c.type.is_door and not c.visible:
            out.append(i)
    return out


def cascade_targets(stage: int, gt: Floorplan) -> list[Component]:
    return [gt.components[i] for i in cascade_target_indices(stage, gt)]


def target_arrays(components: list[Component], canvas: tuple[int, int]):
    """Class indices, normalized boxes and masks for a target list."""
    w, h = canvas
    masks = np.zeros((len(components), h, w), dtype=bool)
    types = np.zeros(len(components), dtype=np.int64)
    boxes = np.zeros((len(components), 4))
    for k, c in enumerate(components):
        masks[k] = component_mask(c, canvas)
        types[k] = c.type.index
        boxes[k] = bbox_of(masks[k]).as_array()
    return types, boxes, masks
