"""Branch feature extraction, position/type encoding and the Transformer encoder."""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from functools import lru_cache

import numpy as np

from .core import RasterStack
from .errors import BadDims, EmptyInput
from .nn import conv2d, layer_norm, linear, multi_head_attention, relu
from .raster import BranchInputs
from .weights import WeightBundle


class Branch(Enum):
    BOTH = 1001
    ROOM = 1002
    DOOR = 1003


BRANCH_ORDER = (Branch.BOTH, Branch.ROOM, Branch.DOOR)


@dataclass(frozen=True, eq=False)
class FeatureMap:
    """``(H/32, W/32, d)`` grid of feature vectors."""

    grid: np.ndarray

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.grid.shape


@dataclass(frozen=True, eq=False)
class TokenSet:
    """Token vectors ``(n, d)`` with per-token ``(x, y, branch)`` provenance (1-based x, y)."""

    tokens: np.ndarray
    provenance: tuple[tuple[int, int, Branch], ...]

    def __len__(self) -> int:
        return self.tokens.shape[0]

    def branch(self, which: Branch) -> np.ndarray:
        idx = [i for i, p in enumerate(self.provenance) if p[2] is which]
        return self.tokens[idx]


def backbone_forward(image: RasterStack | np.ndarray, weights: WeightBundle) -> FeatureMap:
    """Five stride-2 conv+ReLU stages and a 1x1 projection to ``d_model`` channels."""
    cfg = weights.config
    x = image.data if isinstance(image, RasterStack) else np.asarray(image)
    h, w = x.shape[-2:]
    if h % cfg.stride or w % cfg.stride:
        raise BadDims(f"input {w}x{h} is not a multiple of {cfg.stride}")
    x = x.astype(np.float32)
    pad = cfg.kernel // 2
    for i in range(len(cfg.backbone_widths)):
        x = relu(conv2d(x, weights[f"backbone.{i}.weight"], weights[f"backbone.{i}.bias"],
                        stride=2, padding=pad))
    x = conv2d(x, weights["proj.weight"], weights["proj.bias"])
    return FeatureMap(np.ascontiguousarray(x.transpose(1, 2, 0)))


def fuse_max(maps: list[FeatureMap]) -> FeatureMap:
    if not maps:
        raise EmptyInput("fuse_max needs at least one feature map")
    shape = maps[0].shape
    if any(m.shape != shape for m in maps):
        raise BadDims("feature maps to fuse must share a shape")
    return FeatureMap(np.maximum.reduce([m.grid for m in maps]))


@lru_cache(maxsize=64)
def _frequencies(d: int) -> np.ndarray:
    i = np.arange(1, d // 2 + 1, dtype=np.float64)
    return 10.0 ** (8.0 * i / d)


def freq_encoding(t, d: int) -> np.ndarray:
    """``[cos(10^(8i/d) t)]_i ++ [sin(10^(8i/d) t)]_i`` for ``i = 1..d/2``.

    ``t`` may be a scalar or an array; the encoding goes on a trailing axis.
    """
    if d % 2:
        raise BadDims(f"frequency encoding needs an even dimension, got {d}")
    arg = np.multiply.outer(np.asarray(t, dtype=np.float64), _frequencies(d))
    return np.concatenate([np.cos(arg), np.sin(arg)], axis=-1)


def position_type_encoding(rows: int, cols: int, branch: Branch, d: int) -> np.ndarray:
    """``(rows, cols, d)`` array of ``[P(x), P(y)] + P(type)``; x indexes columns, both 1-based."""
    half = d // 2
    px = freq_encoding(np.arange(1, cols + 1), half)
    py = freq_encoding(np.arange(1, rows + 1), half)
    pos = np.concatenate([np.broadcast_to(px[None, :, :], (rows, cols, half)),
                          np.broadcast_to(py[:, None, :], (rows, cols, half))], axis=-1)
    return pos + freq_encoding(branch.value, d)


def add_pos_type(fmap: FeatureMap, branch: Branch) -> TokenSet:
    rows, cols, d = fmap.shape
    enc = position_type_encoding(rows, cols, branch, d)
    tokens = (fmap.grid.astype(np.float64) + enc).reshape(rows * cols, d)
    prov = tuple((x, y, branch) for y in range(1, rows + 1) for x in range(1, cols + 1))
    return TokenSet(tokens.astype(fmap.grid.dtype), prov)


def concat_tokens(parts: list[TokenSet]) -> TokenSet:
    return TokenSet(np.concatenate([p.tokens for p in parts], axis=0),
                    tuple(p for part in parts for p in part.provenance))


def encoder_layer_forward(src: np.ndarray, w: dict[str, np.ndarray], n_heads: int,
                          trace: dict | None = None) -> np.ndarray:
    """Post-norm layer: attention, add&norm, 256-2048-256 MLP, add&norm (dropout is identity)."""
    attn = multi_head_attention(src, src, src, _sub(w, "self_attn"), n_heads,
                                return_weights=trace is not None)
    if trace is not None:
        attn, trace["attention"] = attn
    x = layer_norm(src + attn, w["norm1.weight"], w["norm1.bias"])
    hidden = relu(linear(x, w["linear1.weight"], w["linear1.bias"]))
    x2 = linear(hidden, w["linear2.weight"], w["linear2.bias"])
    out = layer_norm(x + x2, w["norm2.weight"], w["norm2.bias"])
    if trace is not None:
        trace["norm1_in"] = src + attn
        trace["norm2_in"] = x + x2
    return out


def _sub(w: dict[str, np.ndarray], prefix: str) -> dict[str, np.ndarray]:
    p = prefix + "."
    return {k[len(p):]: v for k, v in w.items() if k.startswith(p)}


def encoder_forward(tokens: TokenSet, weights: WeightBundle) -> tuple[TokenSet, np.ndarray]:
    """Run the encoder stack; returns the encoded tokens and the ``both``-branch memory."""
    cfg = weights.config
    if tokens.tokens.ndim != 2 or tokens.tokens.shape[1] != cfg.d_model:
        raise BadDims(f"encoder expects (n, {cfg.d_model}) tokens, got {tokens.tokens.shape}")
    x = tokens.tokens.astype(np.float32)
    for i in range(cfg.encoder_layers):
        x = encoder_layer_forward(x, weights.group(f"encoder.{i}"), cfg.n_heads)
    out = TokenSet(x, tokens.provenance)
    return out, out.branch(Branch.BOTH)


@dataclass(frozen=True, eq=False)
class Encoded:
    feature_shape: tuple[int, int, int]
    tokens: TokenSet
    memory: np.ndarray


def encode(branches: BranchInputs, weights: WeightBundle) -> Encoded:
    """Backbone each branch image, max-fuse per branch, encode, and expose the memory."""
    both = fuse_max([backbone_forward(s, weights) for s in branches.both_images])
    room = fuse_max([backbone_forward(s, weights) for s in branches.room_images])
    door = backbone_forward(branches.door_image, weights)
    parts = [add_pos_type(fmap, br) for fmap, br in zip((both, room, door), BRANCH_ORDER)]
    tokens = concat_tokens(parts)
    encoded, memory = encoder_forward(tokens, weights)
    return Encoded(both.shape, encoded, memory)
