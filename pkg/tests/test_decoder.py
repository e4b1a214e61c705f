import numpy as np
import pytest

import floorcascade.decoder as dec
from floorcascade.core import ComponentType
from floorcascade.decoder import (
    MASK_THRESHOLD, CascadePrediction, assemble_floorplan, cascade_forward, decoder_layer_forward,
    prediction_heads, query_counts, reconstruct,
)
from floorcascade.errors import BadDims, EmptyInput, TooManyDoors

from conftest import T, door, plan, room

NO = ComponentType.NO_COMPONENT.index


def _memory(n=16, seed=0):
    return np.random.default_rng(seed).normal(size=(n, 256)).astype(np.float32)


class TestDecoderLayer:
    def test_shape_and_cross_attention_rows(self, small_weights):
        tgt = _memory(7, 1)
        trace = {}
        out = decoder_layer_forward(tgt, _memory(25), small_weights.group("decoder.direct.0"), 8, trace=trace)
        assert out.shape == (7, 256)
        assert trace["cross_attention"].shape == (8, 7, 25)
        assert np.abs(trace["cross_attention"].sum(-1) - 1).max() < 1e-6

    def test_zero_weights_without_norm_is_identity(self, small_weights):
        w = {k: np.zeros_like(v) for k, v in small_weights.group("decoder.door.0").items()}
        tgt = _memory(5, 2)
        out = decoder_layer_forward(tgt, _memory(9), w, 8, apply_norm=False)
        assert np.array_equal(out, tgt)

    def test_dim_mismatch(self, small_weights):
        with pytest.raises(BadDims):
            decoder_layer_forward(np.zeros((2, 256)), np.zeros((4, 128)), small_weights.group("decoder.door.0"), 8)

    def test_deterministic(self, small_weights):
        w = small_weights.group("decoder.indirect.0")
        a = decoder_layer_forward(_memory(4, 3), _memory(), w, 8)
        b = decoder_layer_forward(_memory(4, 3), _memory(), w, 8)
        assert np.array_equal(a, b)


class TestHeads:
    def test_output_ranges_and_shapes(self, small_weights):
        emb = np.random.default_rng(0).normal(size=(6, 256)).astype(np.float32) * 50
        logits, boxes, masks = prediction_heads(emb, _memory(), small_weights, (4, 4))
        assert logits.shape == (6, 15)
        assert boxes.shape == (6, 4) and (boxes >= 0).all() and (boxes <= 1).all()
        assert masks.shape == (6, 4, 4)

    def test_equal_memory_tokens_give_constant_mask(self, small_weights):
        mem = np.tile(_memory(1, 4), (16, 1))
        _, _, masks = prediction_heads(_memory(3, 5), mem, small_weights, (4, 4))
        pred = CascadePrediction(1, np.zeros((3, 256)), np.zeros((3, 15)), np.zeros((3, 4)), masks, 32)
        up = pred.mask_logits(0)
        assert up.shape == (128, 128)
        assert np.all(up == up[0, 0])

    def test_grid_mismatch(self, small_weights):
        with pytest.raises(BadDims):
            prediction_heads(_memory(1), _memory(16), small_weights, (5, 5))


class TestCascade:
    @pytest.mark.parametrize("y", range(1, 21))
    def test_query_counts_formula(self, y):
        assert query_counts(y) == (y, y + 15, y + 30)

    def test_forward_counts_and_logits(self, small_weights):
        stages = cascade_forward(_memory(), 7, small_weights, grid=(4, 4))
        assert [len(s) for s in stages] == [7, 22, 37]
        assert [s.stage for s in stages] == [1, 2, 3]
        assert all(s.type_logits.shape[1] == 15 for s in stages)
        assert stages[2].mask_logits().shape == (37, 128, 128)

    def test_single_door(self, small_weights):
        assert [len(s) for s in cascade_forward(_memory(), 1, small_weights)] == [1, 16, 31]

    def test_stage_inputs_are_concatenations(self, small_weights, monkeypatch):
        seen = []
        real = dec.decoder_stack

        def spy(tgt, mem, weights, stage):
            seen.append(tgt.copy())
            return real(tgt, mem, weights, stage)

        monkeypatch.setattr(dec, "decoder_stack", spy)
        stages = cascade_forward(_memory(), 4, small_weights)
        assert np.array_equal(seen[0], small_weights["query.direct"][:4])
        assert np.array_equal(seen[1][:4], stages[0].queries)
        assert np.array_equal(seen[1][4:], small_weights["query.indirect"])
        assert np.array_equal(seen[2][:19], stages[1].queries)
        assert np.array_equal(seen[2][19:], small_weights["query.door"])

    def test_rerun_bit_identical(self, small_weights):
        a = cascade_forward(_memory(), 3, small_weights)[2]
        b = cascade_forward(_memory(), 3, small_weights)[2]
        assert np.array_equal(a.type_logits, b.type_logits)
        assert np.array_equal(a.mask_logits_lowres, b.mask_logits_lowres)

    def test_door_limits(self, small_weights):
        with pytest.raises(TooManyDoors):
            cascade_forward(_memory(), 21, small_weights)
        with pytest.raises(EmptyInput):
            cascade_forward(_memory(), 0, small_weights)


def _prediction(types, masks):
    n = len(types)
    logits = np.full((n, 15), -5.0)
    logits[np.arange(n), types] = 5.0
    return CascadePrediction(3, np.zeros((n, 1)), logits, np.full((n, 4), 0.5), np.asarray(masks, float), 1)


class TestAssemble:
    base = plan(room(T.KITCHEN, (0, 0, 10, 10)), door(T.STANDARD_DOOR, (9, 4)),
                room(T.TOILET, (20, 20, 30, 30), visible=False), canvas=(32, 32))

    def test_all_no_component_keeps_input(self):
        pred = _prediction([NO, NO], np.ones((2, 32, 32)))
        out = assemble_floorplan(self.base, pred)
        assert out.components == tuple(c for c in self.base.components if c.visible)

    def test_kitchen_with_thirty_pixels(self):
        m = np.full((32, 32), -1.0)
        m[12:15, 12:22] = 1.0
        out = assemble_floorplan(self.base, _prediction([T.KITCHEN.index, NO], [m, np.ones((32, 32))]))
        new = [c for c in out.components if not c.visible]
        assert len(new) == 1 and new[0].type is T.KITCHEN and new[0].mask.sum() == 30

    def test_threshold_is_strict_zero(self):
        m = np.zeros((32, 32))
        m[0, 0] = 1e-9
        out = reconstruct(_prediction([T.BALCONY.index], [m]))
        assert MASK_THRESHOLD == 0.0 and out[0].mask.sum() == 1

    def test_threshold_matches_sigmoid_half(self):
        z = np.random.default_rng(0).normal(size=(32, 32))
        rc = reconstruct(_prediction([T.CLOSET.index], [z]))[0]
        assert np.array_equal(rc.mask, 1 / (1 + np.exp(-z)) > 0.5)

    def test_room_count_union(self):
        rooms = [room(T.KITCHEN, (4 * i, 0, 4 * i + 4, 4)) for i in range(4)]
        p = plan(*rooms, canvas=(32, 32))
        masks = np.full((3, 32, 32), -1.0)
        for k in range(3):
            masks[k, 10 + 3 * k:12 + 3 * k, 5:9] = 1.0
        out = assemble_floorplan(p, _prediction([T.TOILET.index, T.CLOSET.index, T.CORRIDOR.index], masks))
        assert len(out.rooms) == 7
        assert out.components[:4] == p.components

    def test_door_becomes_stamp_center(self):
        m = np.full((32, 32), -1.0)
        m[10:14, 6:10] = 1.0
        out = assemble_floorplan(self.base, _prediction([T.ENTRANCE_DOOR.index], [m]))
        d = [c for c in out.doors if not c.visible][0]
        assert d.center == (7, 11)
