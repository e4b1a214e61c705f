"""Greedy IoU matching, precision/recall/F1, and translation-aligned scoring."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import signal

from .core import ComponentType, Floorplan, component_mask
from .errors import BadDims

ROOM_IOU_THRESHOLD = 0.7
DOOR_IOU_THRESHOLD = 0.5
TYPE_AWARE_ROOMS = True
TYPE_AWARE_DOORS = True


@dataclass
class MetricReport:
    precision: float
    recall: float
    f1: float
    matches: list[tuple[int, int, float]] = field(default_factory=list)
    translation: tuple[int, int] | None = None

    def to_dict(self) -> dict:
        d = {"precision": self.precision, "recall": self.recall, "f1": self.f1,
             "matches": [[p, g, iou] for p, g, iou in self.matches]}
        if self.translation is not None:
            d["translation"] = list(self.translation)
        return d


def prf(n_matches: int, n_pred: int, n_gt: int) -> tuple[float, float, float]:
    """Precision, recall and F1 with the empty-side conventions.

    Both sides empty scores 1/1/1; any other empty side scores 0 on the
    undefined ratio.
    """
    if n_pred == 0 and n_gt == 0:
        return 1.0, 1.0, 1.0
    p = n_matches / n_pred if n_pred else 0.0
    r = n_matches / n_gt if n_gt else 0.0
    f = 2 * p * r / (p + r) if p + r > 0 else 0.0
    return p, r, f


def iou_matrix(pred_masks: np.ndarray, gt_masks: np.ndarray) -> np.ndarray:
    """Pairwise mask IoU; pairs whose union is empty score 0."""
    a = np.asarray(pred_masks, dtype=bool).reshape(len(pred_masks), -1).astype(np.int64)
    b = np.asarray(gt_masks, dtype=bool).reshape(len(gt_masks), -1).astype(np.int64)
    inter = a @ b.T
    union = a.sum(1)[:, None] + b.sum(1)[None, :] - inter
    return np.where(union > 0, inter / np.maximum(union, 1), 0.0)


def greedy_from_matrix(iou: np.ndarray, threshold: float,
                       eligible: np.ndarray | None = None) -> list[tuple[int, int, float]]:
    """Repeatedly take the highest-IoU remaining pair above ``threshold``.

    Ties go to the lower prediction index, then the lower GT index.
    """
    iou = np.asarray(iou, dtype=np.float64)
    ok = iou > threshold
    if eligible is not None:
        ok &= eligible
    pi, gi = np.nonzero(ok)
    order = np.lexsort((gi, pi, -iou[pi, gi]))
    used_p, used_g, out = set(), set(), []
    for k in order:
        p, g = int(pi[k]), int(gi[k])
        if p in used_p or g in used_g:
            continue
        used_p.add(p)
        used_g.add(g)
        out.append((p, g, float(iou[p, g])))
    return out


def greedy_match(preds: list[tuple[ComponentType, np.ndarray]],
                 gts: list[tuple[ComponentType, np.ndarray]],
                 iou_threshold: float, type_aware: bool = True) -> list[tuple[int, int, float]]:
    if not preds or not gts:
        return []
    iou = iou_matrix(np.stack([m for _, m in preds]), np.stack([m for _, m in gts]))
    eligible = None
    if type_aware:
        eligible = np.array([[tp is tg for tg, _ in gts] for tp, _ in preds], dtype=bool)
    return greedy_from_matrix(iou, iou_threshold, eligible)


def _category(plan: Floorplan, rooms: bool) -> tuple[list[int], list[tuple[ComponentType, np.ndarray]]]:
    idx = [i for i, c in enumerate(plan.components) if (c.type.is_room if rooms else c.type.is_door)]
    return idx, [(plan.components[i].type, component_mask(plan.components[i], plan.canvas)) for i in idx]


def _report(matches, pred_idx, gt_idx, translation=None) -> MetricReport:
    p, r, f = prf(len(matches), len(pred_idx), len(gt_idx))
    return MetricReport(p, r, f, [(pred_idx[a], gt_idx[b], iou) for a, b, iou in matches], translation)


def evaluate(pred_plan: Floorplan, gt_plan: Floorplan) -> tuple[MetricReport, MetricReport]:
    """Room and door reports; matches refer to component indices in each plan."""
    if pred_plan.canvas != gt_plan.canvas:
        raise BadDims(f"canvas mismatch: {pred_plan.canvas} vs {gt_plan.canvas}")
    out = []
    for rooms, thr, aware in ((True, ROOM_IOU_THRESHOLD, TYPE_AWARE_ROOMS),
                              (False, DOOR_IOU_THRESHOLD, TYPE_AWARE_DOORS)):
        pi, pm = _category(pred_plan, rooms)
        gi, gm = _category(gt_plan, rooms)
        out.append(_report(greedy_match(pm, gm, thr, aware), pi, gi))
    return out[0], out[1]


# --------------------------------------------------------------------------
# translation search


def batched_greedy(iou: np.ndarray, threshold: float) -> tuple[np.ndarray, np.ndarray, list]:
    """Greedy matching for a stack of ``(S, P, G)`` IoU matrices at once.

    Ineligible pairs must already be set below ``threshold``. Returns per-slice
    match counts, summed matched IoU, and the chosen ``(p, g)`` per round.
    """
    s, p, g = iou.shape
    work = np.where(iou > threshold, iou, -1.0)
    counts = np.zeros(s, dtype=np.int64)
    total = np.zeros(s)
    rounds = []
    rows = np.arange(s)
    for _ in range(min(p, g)):
        flat = work.reshape(s, p * g)
        best = flat.argmax(axis=1)
        val = flat[rows, best]
        active = val > threshold
        if not active.any():
            break
        bp, bg = best // g, best % g
        counts += active
        total += np.where(active, val, 0.0)
        rounds.append((active, bp, bg, val))
        work[rows[active], bp[active], :] = -1.0
        work[rows[active], :, bg[active]] = -1.0
    return counts, total, rounds


def _intersections_full(pm: np.ndarray, gm: np.ndarray) -> np.ndarray:
    """``I[dy + H - 1, dx + W - 1] = |shift(pred, dx, dy) & gt|`` for every shift."""
    return np.rint(signal.correlate(gm.astype(np.float64), pm.astype(np.float64),
                                    mode="full", method="auto")).astype(np.int64)


def _bbox(mask: np.ndarray) -> tuple[int, int, int, int]:
    ys, xs = np.nonzero(mask)
    return int(xs.min()), int(ys.min()), int(xs.max()) + 1, int(ys.max()) + 1


@dataclass
class _Side:
    idx: list[int]
    items: list[tuple[ComponentType, np.ndarray]]
    threshold: float
    type_aware: bool


def _sides(pred_plan: Floorplan, gt_plan: Floorplan):
    out = []
    for rooms, thr, aware in ((True, ROOM_IOU_THRESHOLD, TYPE_AWARE_ROOMS),
                              (False, DOOR_IOU_THRESHOLD, TYPE_AWARE_DOORS)):
        out.append((_Side(*_category(pred_plan, rooms), thr, aware),
                    _Side(*_category(gt_plan, rooms), thr, aware)))
    return out


def _pairs(ps: _Side, gs: _Side):
    for a, (tp, pm) in enumerate(ps.items):
        for b, (tg, gm) in enumerate(gs.items):
            if ps.type_aware and tp is not tg:
                continue
            if pm.any() and gm.any():
                yield a, b, pm, gm


def _sparse_ious(ps: _Side, gs: _Side) -> dict[tuple[int, int], dict[tuple[int, int], float]]:
    """shift -> {(p, g): IoU} for every pair and shift with IoU above threshold.

    Each pair is correlated on its cropped bounding boxes, so only shifts
    where the two boxes overlap are ever visited.
    """
    found: dict[tuple[int, int], dict[tuple[int, int], float]] = {}
    for a, b, pm, gm in _pairs(ps, gs):
        px0, py0, px1, py1 = _bbox(pm)
        gx0, gy0, gx1, gy1 = _bbox(gm)
        pc, gc = pm[py0:py1, px0:px1], gm[gy0:gy1, gx0:gx1]
        inter = _intersections_full(pc, gc)
        iou = inter / (int(pm.sum()) + int(gm.sum()) - inter)
        ey, ex = np.nonzero(iou > ps.threshold)
        # crop-relative shift e maps back to a canvas shift d = e - p0 + g0
        dys = ey - (pc.shape[0] - 1) - py0 + gy0
        dxs = ex - (pc.shape[1] - 1) - px0 + gx0
        for dx, dy, v in zip(dxs.tolist(), dys.tolist(), iou[ey, ex].tolist()):
            found.setdefault((dx, dy), {})[(a, b)] = v
    return found


def _dense_ious(ps: _Side, gs: _Side, width: int, height: int) -> np.ndarray:
    """``(S, P, G)`` IoU for every shift in ``[-(W-1), W-1] x [-(H-1), H-1]``, dy-major."""
    n_shift = (2 * height - 1) * (2 * width - 1)
    out = np.zeros((n_shift, len(ps.items), len(gs.items)))
    for a, b, pm, gm in _pairs(ps, gs):
        inter = _intersections_full(pm, gm)
        out[:, a, b] = (inter / (int(pm.sum()) + int(gm.sum()) - inter)).ravel()
    return out


def _shift_scores(iou: np.ndarray, side: tuple[_Side, _Side]):
    ps, gs = side
    counts, total, rounds = batched_greedy(iou, ps.threshold)
    n_pred, n_gt = len(ps.items), len(gs.items)
    if n_pred == 0 and n_gt == 0:
        f1 = np.ones(len(counts))
    else:
        p = counts / n_pred if n_pred else np.zeros(len(counts))
        r = counts / n_gt if n_gt else np.zeros(len(counts))
        with np.errstate(invalid="ignore", divide="ignore"):
            f1 = np.where(p + r > 0, 2 * p * r / np.where(p + r > 0, p + r, 1), 0.0)
    return f1, total, rounds


def _matches_at(rounds, k: int) -> list[tuple[int, int, float]]:
    return [(int(bp[k]), int(bg[k]), float(val[k])) for active, bp, bg, val in rounds if active[k]]


@dataclass
class AlignResult:
    rooms: MetricReport
    doors: MetricReport
    translation: tuple[int, int]
    score: float


def _select(shifts: list[tuple[int, int]], room_ious: np.ndarray, door_ious: np.ndarray,
            sides, objective: str) -> AlignResult:
    rf1, rtot, rrounds = _shift_scores(room_ious, sides[0])
    df1, dtot, drounds = _shift_scores(door_ious, sides[1])
    score = rf1 if objective == "rooms" else (rf1 + df1) / 2
    iou_sum = rtot if objective == "rooms" else rtot + dtot
    dx = np.array([s[0] for s in shifts])
    dy = np.array([s[1] for s in shifts])
    # best score, then best matched IoU mass, then smallest shift, then (dx, dy)
    k = int(np.lexsort((dy, dx, np.abs(dx) + np.abs(dy), -iou_sum, -score))[0])
    shift = (int(dx[k]), int(dy[k]))
    reports = []
    for side, rounds in zip(sides, (rrounds, drounds)):
        ps, gs = side
        reports.append(_report(_matches_at(rounds, k), ps.idx, gs.idx, shift))
    return AlignResult(reports[0], reports[1], shift, float(score[k]))


def align_evaluate(pred_plan: Floorplan, gt_plan: Floorplan, objective: str = "mean",
                   exhaustive: bool = False) -> AlignResult:
    """Search integer translations of the prediction for the best F1.

    The prediction is shifted on an unbounded plane (no clipping at the
    canvas edge). ``objective`` is ``"mean"`` (room and door F1 averaged) or
    ``"rooms"``. The default search only visits shifts where some eligible
    pair clears its IoU threshold, plus the zero shift; every other shift
    scores no matches, so the result equals the ``exhaustive`` one.
    """
    if pred_plan.canvas != gt_plan.canvas:
        raise BadDims(f"canvas mismatch: {pred_plan.canvas} vs {gt_plan.canvas}")
    if objective not in ("mean", "rooms"):
        raise ValueError(f"unknown objective {objective!r}")
    sides = _sides(pred_plan, gt_plan)
    width, height = pred_plan.canvas
    if exhaustive:
        shifts = [(dx, dy) for dy in range(-(height - 1), height)
                  for dx in range(-(width - 1), width)]
        dense = [_dense_ious(ps, gs, width, height) for ps, gs in sides]
        return _select(shifts, dense[0], dense[1], sides, objective)
    sparse = [_sparse_ious(ps, gs) for ps, gs in sides]
    shifts = sorted(set(sparse[0]) | set(sparse[1]) | {(0, 0)})
    stacks = []
    for (ps, gs), found in zip(sides, sparse):
        arr = np.zeros((len(shifts), len(ps.items), len(gs.items)))
        for k, s in enumerate(shifts):
            for (a, b), v in found.get(s, {}).items():
                arr[k, a, b] = v
        stacks.append(arr)
    return _select(shifts, stacks[0], stacks[1], sides, objective)
