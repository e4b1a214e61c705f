"""Model configuration and the named-tensor weight bundle.

On disk a bundle is a JSON manifest ``{name: {"shape", "offset", "dtype"}}``
plus a raw little-endian float32 blob next to it (same stem, ``.bin``).
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .errors import BadConfig, BadDims

STAGES = ("direct", "indirect", "door")


@dataclass(frozen=True)
class ModelConfig:
    in_channels: int = 14
    backbone_widths: tuple[int, ...] = (16, 32, 64, 128, 256)
    kernel: int = 3
    d_model: int = 256
    n_heads: int = 8
    ffn_dim: int = 2048
    encoder_layers: int = 6
    decoder_layers: int = 2
    n_direct_queries: int = 20
    n_indirect_queries: int = 15
    n_door_queries: int = 15
    n_classes: int = 15
    init_scale: float = 0.05

    def __post_init__(self):
        if len(self.backbone_widths) != 5:
            raise BadConfig("the backbone stub has exactly five stride-2 stages")
        if self.d_model % self.n_heads:
            raise BadConfig("d_model must be divisible by n_heads")
        if self.d_model % 4:
            raise BadConfig("d_model must be divisible by 4 for the x/y position encoding")

    @property
    def stride(self) -> int:
        return 2 ** len(self.backbone_widths)


def _attention_shapes(prefix: str, d: int) -> dict[str, tuple[int, ...]]:
    out = {}
    for p in "qkvo":
        out[f"{prefix}.{p}.weight"] = (d, d)
        out[f"{prefix}.{p}.bias"] = (d,)
    return out


def _ffn_shapes(prefix: str, d: int, f: int) -> dict[str, tuple[int, ...]]:
    return {f"{prefix}.linear1.weight": (f, d), f"{prefix}.linear1.bias": (f,),
            f"{prefix}.linear2.weight": (d, f), f"{prefix}.linear2.bias": (d,)}


def _norm_shapes(prefix: str, d: int) -> dict[str, tuple[int, ...]]:
    return {f"{prefix}.weight": (d,), f"{prefix}.bias": (d,)}


def architecture(cfg: ModelConfig) -> dict[str, tuple[int, ...]]:
    """Every tensor name and shape, in a fixed order."""
    d, f = cfg.d_model, cfg.ffn_dim
    shapes: dict[str, tuple[int, ...]] = {}
    prev = cfg.in_channels
    for i, width in enumerate(cfg.backbone_widths):
        shapes[f"backbone.{i}.weight"] = (width, prev, cfg.kernel, cfg.kernel)
        shapes[f"backbone.{i}.bias"] = (width,)
        prev = width
    shapes["proj.weight"] = (d, prev, 1, 1)
    shapes["proj.bias"] = (d,)
    for i in range(cfg.encoder_layers):
        p = f"encoder.{i}"
        shapes.update(_attention_shapes(f"{p}.self_attn", d))
        shapes.update(_ffn_shapes(p, d, f))
        shapes.update(_norm_shapes(f"{p}.norm1", d))
        shapes.update(_norm_shapes(f"{p}.norm2", d))
    for stage in STAGES:
        for i in range(cfg.decoder_layers):
            p = f"decoder.{stage}.{i}"
            shapes.update(_attention_shapes(f"{p}.self_attn", d))
            shapes.update(_attention_shapes(f"{p}.cross_attn", d))
            shapes.update(_ffn_shapes(p, d, f))
            for k in (1, 2, 3):
                shapes.update(_norm_shapes(f"{p}.norm{k}", d))
    shapes["head.type.weight"] = (cfg.n_classes, d)
    shapes["head.type.bias"] = (cfg.n_classes,)
    for i, out in enumerate((d, d, 4)):
        shapes[f"head.bbox.{i}.weight"] = (out, d)
        shapes[f"head.bbox.{i}.bias"] = (out,)
    shapes["head.mask.weight"] = (d, d)
    shapes["head.mask.bias"] = (d,)
    shapes["query.direct"] = (cfg.n_direct_queries, d)
    shapes["query.indirect"] = (cfg.n_indirect_queries, d)
    shapes["query.door"] = (cfg.n_door_queries, d)
    return shapes


def _is_norm(name: str) -> bool:
    return ".norm" in name


class WeightBundle:
    """Read-only mapping from tensor names to float32 arrays."""

    def __init__(self, tensors: dict[str, np.ndarray], config: ModelConfig | None = None):
        self.config = config or ModelConfig()
        expected = architecture(self.config)
        missing = sorted(set(expected) - set(tensors))
        extra = sorted(set(tensors) - set(expected))
        if missing or extra:
            raise BadDims(f"weight names do not match the architecture "
                          f"(missing {missing[:3]}, unexpected {extra[:3]})")
        self._tensors = {}
        for name, shape in expected.items():
            arr = np.array(tensors[name], dtype=np.float32)
            if arr.shape != shape:
                raise BadDims(f"{name}: expected shape {shape}, got {arr.shape}")
            arr.setflags(write=False)
            self._tensors[name] = arr

    def __getitem__(self, name: str) -> np.ndarray:
        return self._tensors[name]

    def __contains__(self, name: str) -> bool:
        return name in self._tensors

    def names(self) -> list[str]:
        return list(self._tensors)

    def group(self, prefix: str) -> dict[str, np.ndarray]:
        """Tensors under ``prefix.`` with the prefix stripped."""
        p = prefix + "."
        return {k[len(p):]: v for k, v in self._tensors.items() if k.startswith(p)}

    def replace(self, **updates: np.ndarray) -> "WeightBundle":
        """Copy with some tensors swapped; names use ``__`` in place of dots."""
        tensors = dict(self._tensors)
        for key, value in updates.items():
            tensors[key.replace("__", ".")] = value
        return WeightBundle(tensors, self.config)

    def map(self, fn) -> "WeightBundle":
        return WeightBundle({k: fn(k, v) for k, v in self._tensors.items()}, self.config)

    # ------------------------------------------------------------------ io

    def save(self, manifest_path: str | Path) -> Path:
        manifest_path = Path(manifest_path)
        blob_path = manifest_path.with_suffix(".bin")
        manifest, offset = {}, 0
        with open(blob_path, "wb") as fh:
            for name, arr in self._tensors.items():
                raw = arr.astype("<f4").tobytes()
                manifest[name] = {"shape": list(arr.shape), "offset": offset, "dtype": "f32le"}
                fh.write(raw)
                offset += len(raw)
        manifest_path.write_text(json.dumps(manifest, indent=1), encoding="utf-8")
        return blob_path

    @classmethod
    def load(cls, manifest_path: str | Path, config: ModelConfig | None = None) -> "WeightBundle":
        manifest_path = Path(manifest_path)
        manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
        blob = np.fromfile(manifest_path.with_suffix(".bin"), dtype="<f4")
        tensors = {}
        for name, entry in manifest.items():
            if entry.get("dtype") != "f32le":
                raise BadConfig(f"{name}: unsupported dtype {entry.get('dtype')!r}")
            shape = tuple(entry["shape"])
            start = entry["offset"] // 4
            count = int(np.prod(shape, dtype=np.int64))
            if entry["offset"] % 4 or start + count > blob.size:
                raise BadDims(f"{name}: offset/shape run past the weight blob")
            tensors[name] = blob[start:start + count].reshape(shape)
        return cls(tensors, config)


def init_weights(config: ModelConfig | None = None, seed: int = 0) -> WeightBundle:
    """Seeded uniform(-s, s) linears/convs/queries; layer norms start at scale 1, shift 0."""
    config = config or ModelConfig()
    rng = np.random.default_rng(seed)
    s = config.init_scale
    tensors = {}
    for name, shape in architecture(config).items():
        if _is_norm(name):
            tensors[name] = np.ones(shape) if name.endswith(".weight") else np.zeros(shape)
        else:
            tensors[name] = rng.uniform(-s, s, size=shape)
    return WeightBundle(tensors, config)


def config_to_dict(cfg: ModelConfig) -> dict:
    d = asdict(cfg)
    d["backbone_widths"] = list(cfg.backbone_widths)
    return d
