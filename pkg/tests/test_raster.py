import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from floorcascade.core import RasterStack, rasterize
from floorcascade.errors import BadConfig, EmptyInput
from floorcascade.raster import (
    AugmentConfig, augment, hflip, normalize_plan, normalize_test, normalize_train, rot90,
    split_branches,
)

from conftest import T, door, plan, room


def content_box(stack):
    ys, xs = np.nonzero(stack.union())
    return int(xs.min()), int(ys.min()), int(xs.max()) + 1, int(ys.max()) + 1


class TestNormalize:
    def test_test_regime_dims_and_fit(self):
        p = plan(room(T.KITCHEN, (3, 5, 40, 20)), room(T.TOILET, (40, 5, 50, 30)))
        stack = normalize_test(p)
        assert (stack.width, stack.height) == (800, 800)
        x0, y0, x1, y1 = content_box(stack)
        assert abs(max(x1 - x0, y1 - y0) - 200) <= 1

    def test_centered_200_square_lands_at_300(self):
        p = plan(room(T.LIVING_ROOM, (300, 300, 500, 500)), canvas=(800, 800))
        normalized, frame = normalize_plan(p, "test")
        assert frame.scale == 1.0
        assert content_box(rasterize(normalized)) == (300, 300, 500, 500)
        assert np.array_equal(rasterize(normalized).data, rasterize(p).data)

    def test_wide_room_scaled_and_centered(self):
        p = plan(room(T.CORRIDOR, (0, 0, 400, 100)), canvas=(400, 400))
        x0, y0, x1, y1 = content_box(normalize_test(p))
        assert (x1 - x0, y1 - y0) == (200, 50)
        assert (x0, y0) == (300, 375)

    def test_train_regime_offset_78(self):
        p = plan(room(T.KITCHEN, (0, 0, 100, 100)), canvas=(100, 100))
        stack = normalize_train(p)
        assert (stack.width, stack.height) == (256, 256)
        assert content_box(stack) == (78, 78, 178, 178)

    def test_train_tall_room_centered_horizontally(self):
        p = plan(room(T.KITCHEN, (0, 0, 50, 100)), canvas=(100, 100))
        x0, y0, x1, y1 = content_box(normalize_train(p))
        assert (x1 - x0, y1 - y0) == (50, 100)
        assert (x0, y0) == (103, 78)

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 30), st.integers(0, 30), st.integers(4, 33), st.integers(4, 33))
    def test_train_fit_within_one_pixel(self, x, y, w, h):
        p = plan(room(T.BALCONY, (x, y, x + w, y + h)))
        x0, y0, x1, y1 = content_box(normalize_train(p))
        assert abs(max(x1 - x0, y1 - y0) - 100) <= 1

    def test_idempotent_fit(self):
        p = plan(room(T.KITCHEN, (3, 5, 40, 20)), door(T.STANDARD_DOOR, (39, 10)))
        once, _ = normalize_plan(p, "train")
        twice, _ = normalize_plan(once, "train")
        a, b = content_box(rasterize(once)), content_box(rasterize(twice))
        assert (a[2] - a[0], a[3] - a[1]) == (b[2] - b[0], b[3] - b[1])

    def test_no_visible_component(self):
        with pytest.raises(EmptyInput):
            normalize_test(plan(room(T.KITCHEN, (0, 0, 5, 5), visible=False)))

    def test_unknown_regime(self):
        with pytest.raises(BadConfig):
            normalize_plan(plan(room(T.KITCHEN, (0, 0, 5, 5))), "huge")


def _stack(seed=0, size=32):
    rng = np.random.default_rng(seed)
    return RasterStack(rng.random((14, size, size)) < 0.2)


class TestAugment:
    def test_disabled_is_identity(self):
        s = _stack()
        cfg = AugmentConfig(seed=5, flip_prob=0, rot_prob=0, crop_prob=0)
        assert augment(s, cfg) == s

    def test_full_crop_is_identity(self):
        s = _stack()
        assert augment(s, AugmentConfig(seed=9, flip_prob=0, rot_prob=0, crop_min=1.0)) == s

    def test_flip_involution_and_rotation_inverse(self):
        d = _stack().data
        assert np.array_equal(hflip(hflip(d)), d)
        assert np.array_equal(rot90(rot90(d, 1), -1), d)

    def test_channels_never_reordered(self):
        d = np.zeros((14, 16, 16), bool)
        d[3, 2:5, 2:5] = True
        for seed in range(20):
            out = augment(RasterStack(d), AugmentConfig(seed=seed)).data
            assert out[np.arange(14) != 3].sum() == 0

    def test_forced_flip_and_rotation(self):
        s = _stack(3)
        flipped = augment(s, AugmentConfig(seed=1, flip_prob=1, rot_prob=0, crop_prob=0))
        assert np.array_equal(flipped.data, s.data[..., ::-1])
        rotated = augment(s, AugmentConfig(seed=1, flip_prob=0, rot_prob=1, crop_prob=0))
        assert any(np.array_equal(rotated.data, np.rot90(s.data, k, axes=(1, 2))) for k in (1, -1))

    def test_seeded_determinism(self):
        s = _stack(4)
        cfg = AugmentConfig(seed=12345)
        assert augment(s, cfg) == augment(s, cfg)

    def test_output_stays_binary_and_same_size(self):
        out = augment(_stack(2, 40), AugmentConfig(seed=3))
        assert out.data.dtype == bool and out.data.shape == (14, 40, 40)

    def test_bad_probability(self):
        with pytest.raises(BadConfig):
            AugmentConfig(flip_prob=1.5)


class TestSplitBranches:
    def test_single_room_no_doors(self):
        b = split_branches(plan(room(T.KITCHEN, (2, 2, 20, 20))))
        assert b.room_images[0] == b.both_images[0]
        assert not b.door_image.data.any()

    def test_shared_door_in_both_stacks(self):
        p = plan(room(T.KITCHEN, (0, 0, 20, 20)), room(T.TOILET, (20, 0, 40, 20)),
                 door(T.STANDARD_DOOR, (19, 9)))
        b = split_branches(p)
        for stack in b.both_images:
            assert stack.channel(T.STANDARD_DOOR).sum() == 4
        for stack in b.room_images:
            assert stack.channel(T.STANDARD_DOOR).sum() == 0
        assert b.door_image.channel(T.STANDARD_DOOR).sum() == 4

    def test_far_door_not_incident(self):
        p = plan(room(T.KITCHEN, (0, 0, 10, 10)), room(T.TOILET, (30, 30, 60, 60)),
                 door(T.STANDARD_DOOR, (44, 29)))
        b = split_branches(p)
        assert b.both_images[0].channel(T.STANDARD_DOOR).sum() == 0
        assert b.both_images[1].channel(T.STANDARD_DOOR).sum() == 4

    def test_cardinality_and_room_union(self):
        p = plan(room(T.KITCHEN, (0, 0, 10, 10)), room(T.TOILET, (10, 0, 20, 10)),
                 room(T.CLOSET, (0, 10, 20, 20)), room(T.BALCONY, (30, 30, 40, 40), visible=False))
        b = split_branches(p)
        assert len(b.room_images) == len(b.both_images) == 3
        union = np.logical_or.reduce([s.data for s in b.room_images])
        assert np.array_equal(union, rasterize(p, visible_only=True).data)

    def test_no_visible_room(self):
        with pytest.raises(EmptyInput):
            split_branches(plan(door(T.STANDARD_DOOR, (3, 3))))
