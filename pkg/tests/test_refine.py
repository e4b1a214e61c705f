import numpy as np
import pytest

from floorcascade.core import Component, boundary_pixels, component_mask, door_pixels, fill_polygon, iou_masks
from floorcascade.errors import EmptyMask, FloorplanError, NoRooms
from floorcascade.refine import (
    IOU_GATE, identity_refiner, iou_gate, keep_best_component, morph_refiner, polygon_loops, polygonize,
    refine_iterate, snap_doors,
)

from conftest import T, door, plan, random_blob, room


def box(y0, y1, x0, x1, size=20):
    m = np.zeros((size, size), bool)
    m[y0:y1, x0:x1] = True
    return m


class TestKeepBest:
    def test_single_component_unchanged(self):
        m = box(2, 6, 2, 9)
        assert np.array_equal(keep_best_component(m, box(2, 5, 2, 9)), m)

    def test_picks_highest_iou(self):
        original = box(0, 4, 0, 5)
        refined = box(0, 3, 0, 4) | box(10, 14, 10, 14)
        kept = keep_best_component(refined, original)
        assert np.array_equal(kept, box(0, 3, 0, 4))
        assert not (kept & ~refined).any()

    def test_empty_falls_back(self):
        original = box(1, 3, 1, 3)
        assert np.array_equal(keep_best_component(np.zeros((20, 20), bool), original), original)


class TestGate:
    def test_identical_kept(self):
        m = box(0, 5, 0, 5)
        assert iou_gate(m, box(0, 1, 0, 1), m) is m

    def test_low_iou_reverts(self):
        original = box(0, 10, 0, 10)
        refined = box(0, 4, 0, 10)  # IoU 0.4
        previous = box(0, 9, 0, 10)
        assert iou_gate(refined, previous, original) is previous

    def test_exact_half_kept(self):
        original = box(0, 10, 0, 10)
        refined = box(0, 5, 0, 10)
        assert iou_masks(refined, original) == 0.5
        assert iou_gate(refined, original, original) is refined

    def test_gate_constant(self):
        assert IOU_GATE == 0.5


class TestSnap:
    def test_on_boundary_unchanged(self):
        rooms = [box(5, 15, 5, 15)]
        d = door_pixels((5, 5), 20, 20)
        # center of mass (5.5, 5.5) is nearest to boundary pixel (5, 5) among ties
        assert np.array_equal(snap_doors([d], rooms)[0], d)

    def test_moves_to_nearest_boundary(self):
        room_mask = np.zeros((30, 30), bool)
        room_mask[14:25, 2:25] = True
        d = door_pixels((10, 10), 30, 30)
        out = snap_doors([d], [room_mask])[0]
        assert np.array_equal(out, door_pixels((10, 14), 30, 30))

    def test_no_rooms(self):
        with pytest.raises(NoRooms):
            snap_doors([door_pixels((1, 1), 8, 8)], [])

    def test_anchor_lies_on_boundary(self):
        rng = np.random.default_rng(0)
        for _ in range(30):
            rooms = [random_blob(rng, 40, 40, 25)]
            boundary = boundary_pixels(rooms[0])
            x, y = rng.integers(0, 38, 2)
            out = snap_doors([door_pixels((int(x), int(y)), 40, 40)], rooms)[0]
            ys, xs = np.nonzero(out)
            assert boundary[ys.min(), xs.min()]


class TestIterate:
    p = plan(room(T.KITCHEN, (2, 2, 20, 20)), room(T.TOILET, (20, 2, 30, 12)),
             door(T.STANDARD_DOOR, (24, 14)), canvas=(32, 32))

    def _masks(self, out):
        return [component_mask(c, out.canvas) for c in out.rooms]

    def test_identity_keeps_masks_and_snaps(self):
        before = [component_mask(c, self.p.canvas) for c in self.p.rooms]
        for steps in (1, 3):
            out = refine_iterate(self.p, identity_refiner, steps)
            assert all(np.array_equal(a, b) for a, b in zip(self._masks(out), before))
            d = out.doors[0]
            boundary = boundary_pixels(before[0]) | boundary_pixels(before[1])
            assert boundary[int(d.center[1]), int(d.center[0])]
            assert d.type is T.STANDARD_DOOR

    def test_identity_idempotent(self):
        once = refine_iterate(self.p, identity_refiner, 1)
        twice = refine_iterate(once, identity_refiner, 1)
        assert all(np.array_equal(a, b) for a, b in zip(self._masks(once), self._masks(twice)))

    def test_steps_zero_snaps_only(self):
        out = refine_iterate(self.p, lambda m: np.zeros_like(m), 0)
        assert all(np.array_equal(a, component_mask(c, self.p.canvas)) for a, c in zip(self._masks(out), self.p.rooms))
        assert out.doors[0].center != self.p.doors[0].center

    def test_erasing_refiner_reverted(self):
        out = refine_iterate(self.p, lambda m: np.zeros_like(m), 2)
        assert all(np.array_equal(a, component_mask(c, self.p.canvas)) for a, c in zip(self._masks(out), self.p.rooms))

    def test_morph_refiner_shape(self):
        m = box(2, 12, 2, 12)
        m[6, 6] = False
        assert morph_refiner(m)[6, 6]

    def test_negative_steps(self):
        with pytest.raises(ValueError):
            refine_iterate(self.p, identity_refiner, -1)


class TestPolygonize:
    def test_square(self):
        poly = polygonize(box(3, 7, 3, 7))
        assert len(poly) == 4
        assert set(poly) == {(3, 3), (7, 3), (7, 7), (3, 7)}

    def test_l_shape(self):
        m = box(0, 8, 0, 3) | box(5, 8, 0, 8)
        poly = polygonize(m)
        assert len(poly) == 6
        assert np.array_equal(fill_polygon(poly, 20, 20), m)

    def test_empty(self):
        with pytest.raises(EmptyMask):
            polygonize(np.zeros((5, 5), bool))

    def test_two_components(self):
        with pytest.raises(FloorplanError):
            polygonize(box(0, 2, 0, 2) | box(5, 7, 5, 7))

    def test_random_blobs_round_trip(self):
        rng = np.random.default_rng(11)
        for _ in range(20):
            m = random_blob(rng, 48, 48)
            poly = polygonize(m)
            if len(polygon_loops(m)) == 1:
                Component(T.KITCHEN, True, polygon=tuple(poly))  # hole-free outlines are simple
            assert iou_masks(fill_polygon(poly, 48, 48), m) >= 0.95

    def test_hole_is_bridged(self):
        m = box(0, 10, 0, 10) & ~box(3, 6, 4, 7)
        loops = polygon_loops(m)
        assert len(loops) == 2 and len(loops[1]) == 4
        poly = polygonize(m)
        assert np.array_equal(fill_polygon(poly, 20, 20), m)
        assert (4, 0) in poly and (4, 3) in poly  # cut runs up from the hole's top-left corner

    def test_nested_holes_exact(self):
        m = box(0, 14, 0, 14) & ~box(2, 12, 2, 12) | box(4, 10, 4, 10)
        m &= ~box(6, 8, 6, 8)
        m |= box(0, 3, 6, 7) | box(3, 5, 6, 7)  # joins the ring to the inner square
        poly = polygonize(m)
        assert np.array_equal(fill_polygon(poly, 20, 20), m)
