"""Inference-only numpy building blocks: linear layers, layer norm, attention, convolution."""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import BadDims

LN_EPS = 1e-5


def linear(x: np.ndarray, weight: np.ndarray, bias: np.ndarray | None = None) -> np.ndarray:
    """``x @ weight.T + bias`` with torch-style ``(out, in)`` weights."""
    if x.shape[-1] != weight.shape[1]:
        raise BadDims(f"linear expects last dim {weight.shape[1]}, got {x.shape[-1]}")
    y = x @ weight.T
    if bias is not None:
        y = y + bias
    return y


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0)


def softmax(x: np.ndarray, axis: int = -1) -> np.ndarray:
    z = x - x.max(axis=axis, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=axis, keepdims=True)


def standardize(x: np.ndarray, eps: float = LN_EPS) -> np.ndarray:
    mu = x.mean(axis=-1, keepdims=True)
    var = ((x - mu) ** 2).mean(axis=-1, keepdims=True)
    return (x - mu) / np.sqrt(var + eps)


def layer_norm(x: np.ndarray, gamma: np.ndarray, beta: np.ndarray, eps: float = LN_EPS) -> np.ndarray:
    return standardize(x, eps) * gamma + beta


def multi_head_attention(query: np.ndarray, key: np.ndarray, value: np.ndarray,
                         w: dict[str, np.ndarray], n_heads: int,
                         return_weights: bool = False):
    """Scaled dot-product attention over ``n_heads`` heads.

    ``w`` holds ``q/k/v/o`` projection weights and biases. With
    ``return_weights`` the per-head attention matrices ``(heads, Lq, Lk)``
    are returned alongside the output.
    """
    d = query.shape[-1]
    if key.shape[-1] != d or value.shape[-1] != d or d % n_heads:
        raise BadDims(f"attention dims mismatch: {query.shape}, {key.shape}, {value.shape}")
    hd = d // n_heads
    q = linear(query, w["q.weight"], w["q.bias"]).reshape(-1, n_heads, hd).transpose(1, 0, 2)
    k = linear(key, w["k.weight"], w["k.bias"]).reshape(-1, n_heads, hd).transpose(1, 0, 2)
    v = linear(value, w["v.weight"], w["v.bias"]).reshape(-1, n_heads, hd).transpose(1, 0, 2)
    scores = (q @ k.transpose(0, 2, 1)) / np.sqrt(hd).astype(q.dtype)
    attn = softmax(scores, axis=-1)
    ctx = (attn @ v).transpose(1, 0, 2).reshape(-1, d)
    out = linear(ctx, w["o.weight"], w["o.bias"])
    if return_weights:
        return out, attn
    return out


def conv2d(x: np.ndarray, weight: np.ndarray, bias: np.ndarray | None,
           stride: int = 1, padding: int = 0) -> np.ndarray:
    """Channels-first 2-D convolution; ``x`` is ``(C, H, W)``, ``weight`` is ``(O, C, k, k)``."""
    out_c, in_c, kh, kw = weight.shape
    if x.ndim != 3 or x.shape[0] != in_c:
        raise BadDims(f"conv2d expects {in_c} input channels, got shape {x.shape}")
    if padding:
        x = np.pad(x, ((0, 0), (padding, padding), (padding, padding)))
    win = sliding_window_view(x, (kh, kw), axis=(1, 2))[:, ::stride, ::stride]
    # win: (C, Ho, Wo, kh, kw) -> (Ho, Wo, C*kh*kw)
    ho, wo = win.shape[1], win.shape[2]
    cols = win.transpose(1, 2, 0, 3, 4).reshape(ho * wo, in_c * kh * kw)
    y = cols @ weight.reshape(out_c, -1).T
    if bias is not None:
        y = y + bias
    return y.T.reshape(out_c, ho, wo)
