import numpy as np
import pytest

from floorcascade.core import BBox, Component, Floorplan
from floorcascade.errors import NoMatches, TooFewQueries
from floorcascade.losses import (
    Assignment, assign, box_iou_matrix, cascade_targets, dice_loss, focal_loss, loss_bbox, loss_seg,
    loss_total, loss_type, match_hungarian,
)

from conftest import T, door, plan, room


def onehot_logits(types, n=None, scale=50.0):
    n = len(types) if n is None else n
    z = np.full((n, 15), -scale)
    for i, t in enumerate(types):
        z[i, t] = scale
    return z


class TestMatching:
    def test_single(self):
        a = match_hungarian([(np.full(15, 1 / 15), BBox(0.5, 0.5, 0.2, 0.2))], [(T.KITCHEN, BBox(0.4, 0.4, 0.2, 0.2))])
        assert a.pairs == ((0, 0),)

    def test_cost_matrix_2x2(self):
        a = assign(np.array([[1.0, 2.0], [2.0, 1.0]]))
        assert set(a.pairs) == {(0, 0), (1, 1)}

    def test_prefers_right_type_and_box(self):
        probs = np.full((3, 15), 0.01)
        probs[0, T.TOILET.index] = probs[1, T.KITCHEN.index] = 0.9
        boxes = [BBox(0.2, 0.2, 0.1, 0.1), BBox(0.7, 0.7, 0.2, 0.2), BBox(0.5, 0.5, 0.5, 0.5)]
        a = match_hungarian(list(zip(probs, boxes)), [(T.KITCHEN, BBox(0.7, 0.7, 0.2, 0.2)),
                                                      (T.TOILET, BBox(0.21, 0.2, 0.1, 0.1))])
        assert set(a.pairs) == {(1, 0), (0, 1)}

    def test_too_few_queries(self):
        with pytest.raises(TooFewQueries):
            assign(np.zeros((1, 2)))

    def test_permuting_predictions_permutes_assignment(self):
        rng = np.random.default_rng(1)
        cost = rng.random((5, 3))
        perm = rng.permutation(5)
        base = {g: p for p, g in assign(cost).pairs}
        moved = {g: p for p, g in assign(cost[perm]).pairs}
        assert {g: perm[p] for g, p in moved.items()} == base


class TestTypeLoss:
    def test_perfect_is_zero(self):
        v, _ = loss_type(onehot_logits([3]), Assignment(((0, 0),)), [3], np.ones(15))
        assert v == pytest.approx(0.0, abs=1e-12)

    def test_half_probability(self):
        z = np.full((1, 15), -np.inf)
        z[0, 2] = z[0, 5] = 0.0
        v, _ = loss_type(np.where(np.isinf(z), -1e3, z), Assignment(((0, 0),)), [2], np.ones(15))
        assert v == pytest.approx(np.log(2))

    def test_kitchen_weight(self):
        z = np.zeros((1, 15))
        v, _ = loss_type(z, Assignment(((0, 0),)), [T.KITCHEN.index])
        assert v == pytest.approx(3.7 * np.log(15))

    def test_unmatched_target_no_component(self):
        z = np.zeros((2, 15))
        v, _ = loss_type(z, Assignment(((1, 0),)), [T.TOILET.index])
        assert v == pytest.approx((0.1 + 0.63) * np.log(15) / 2)

    def test_nonnegative(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            v, _ = loss_type(rng.normal(size=(4, 15)) * 3, Assignment(((0, 1), (2, 0))), [1, 12])
            assert v >= 0


class TestBoxLoss:
    def test_identical(self):
        b = np.array([[0.3, 0.4, 0.2, 0.1]])
        assert loss_bbox(b, b, Assignment(((0, 0),)))[0] == -2.0

    def test_nested_boxes(self):
        v, _ = loss_bbox(np.array([[0.5, 0.5, 0.2, 0.2]]), np.array([[0.5, 0.5, 0.4, 0.4]]), Assignment(((0, 0),)))
        assert v == pytest.approx(1.5)

    def test_disjoint_shift(self):
        v, _ = loss_bbox(np.array([[0.25, 0.5, 0.2, 0.2]]), np.array([[0.75, 0.5, 0.2, 0.2]]), Assignment(((0, 0),)))
        assert v == pytest.approx(2.5)

    def test_no_matches(self):
        with pytest.raises(NoMatches):
            loss_bbox(np.zeros((1, 4)), np.zeros((0, 4)), Assignment(()))

    def test_iou_matrix_symmetric(self):
        rng = np.random.default_rng(2)
        a = np.c_[rng.random((4, 2)), rng.random((4, 2)) * 0.5 + 0.05]
        assert np.allclose(box_iou_matrix(a, a), box_iou_matrix(a, a).T)
        assert np.allclose(np.diag(box_iou_matrix(a, a)), 1.0)


class TestSegLoss:
    def test_dice_half(self):
        # m = 0.5 everywhere (logit 0), GT 2 of 4 pixels
        v, _ = dice_loss(np.zeros(4), np.array([1, 1, 0, 0]), eps=0.0)
        assert v == pytest.approx(0.5)

    def test_focal_scalar(self):
        loss, _ = focal_loss(np.array([0.0]), np.array([True]), gamma=2.0, alpha=1.0)
        assert loss[0] == pytest.approx(0.25 * np.log(2))

    def test_perfect_hard_masks(self):
        gt = np.zeros((1, 6, 6), bool)
        gt[0, 1:4, 2:5] = True
        z = np.where(gt, 60.0, -60.0)
        v, _ = loss_seg(z, gt, Assignment(((0, 0),)))
        assert v == pytest.approx(0.0, abs=1e-12)

    def test_scaling_five_over_matches(self):
        gt = np.zeros((2, 4, 4), bool)
        gt[:, :2] = True
        z = np.zeros((2, 4, 4))
        one, _ = loss_seg(z[:1], gt[:1], Assignment(((0, 0),)))
        two, _ = loss_seg(z, gt, Assignment(((0, 0), (1, 1))))
        assert two == pytest.approx(one)
        d, _ = dice_loss(z[0], gt[0])
        f, _ = focal_loss(z[0], gt[0])
        assert one == pytest.approx(5 * (d + f.mean()))

    def test_no_matches(self):
        with pytest.raises(NoMatches):
            loss_seg(np.zeros((1, 2, 2)), np.zeros((0, 2, 2)), Assignment(()))


class TestTotal:
    def test_perfect_total_is_minus_two(self):
        gt = np.zeros((2, 8, 8), bool)
        gt[0, 0:3, 0:4] = True
        gt[1, 5:8, 4:8] = True
        boxes = np.array([[0.25, 0.1875, 0.5, 0.375], [0.75, 0.8125, 0.5, 0.375]])
        z = np.where(gt, 1e3, -1e3)
        res = loss_total(onehot_logits([1, 4], scale=1e3), boxes, z, [1, 4], boxes, gt)
        assert (res.type, res.bbox, res.seg) == (0.0, -2.0, 0.0)
        assert res.total == -2.0

    def test_additivity(self):
        rng = np.random.default_rng(3)
        gt = rng.random((2, 5, 5)) < 0.5
        gb = np.c_[rng.random((2, 2)) * 0.5 + 0.25, rng.random((2, 2)) * 0.3 + 0.1]
        a = Assignment(((0, 1), (2, 0)))
        z, b, m = rng.normal(size=(3, 15)), np.c_[rng.random((3, 2)), rng.random((3, 2)) * 0.5 + 0.1], rng.normal(size=(3, 5, 5))
        base = loss_total(z, b, m, [2, 7], gb, gt, assignment=a)
        other = loss_total(np.zeros_like(z), b, m, [2, 7], gb, gt, assignment=a)
        assert other.bbox == base.bbox and other.seg == base.seg and other.type != base.type
        assert base.total >= -2

    def test_empty_targets_allowed(self):
        res = loss_total(np.zeros((3, 15)), np.full((3, 4), 0.5), np.zeros((3, 4, 4)), [], np.zeros((0, 4)),
                         np.zeros((0, 4, 4), bool), allow_empty=True)
        assert res.bbox == res.seg == 0.0
        assert res.type == pytest.approx(0.1 * np.log(15))


class TestCascadeTargets:
    def test_all_visible(self):
        p = plan(room(T.KITCHEN, (0, 0, 10, 10)), door(T.STANDARD_DOOR, (9, 4)))
        assert [cascade_targets(s, p) for s in (1, 2, 3)] == [[], [], []]

    def test_five_direct_one_indirect_two_doors(self):
        comps = [room(T.LIVING_ROOM, (20, 20, 40, 40))]
        # five invisible rooms around the hub, each behind a visible door
        spots = [((0, 20, 20, 40), (19, 29)), ((40, 20, 60, 40), (39, 29)), ((20, 0, 40, 20), (29, 19)),
                 ((20, 40, 40, 60), (29, 39)), ((40, 0, 60, 20), (39, 19))]
        for box, d in spots:
            comps += [room(T.TOILET, box, visible=False), door(T.STANDARD_DOOR, d)]
        comps += [room(T.CLOSET, (0, 60, 20, 64), visible=False)]
        comps += [door(T.CLOSET_DOOR, (9, 59), visible=False), door(T.OPEN_PORTAL, (59, 29), visible=False)]
        p = plan(*comps)
        sizes = tuple(len(cascade_targets(s, p)) for s in (1, 2, 3))
        assert sizes == (5, 6, 8)

    def test_stage_containment(self):
        from floorcascade.synth import gen_synthetic

        for seed in range(30):
            _, full = gen_synthetic(seed, 7, 9)
            s1, s2, s3 = (cascade_targets(s, full) for s in (1, 2, 3))
            assert all(any(c is d for d in s2) for c in s1)
            assert all(any(c is d for d in s3) for c in s2)
