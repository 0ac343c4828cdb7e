"""Toy-scale two-branch classifier.

A small strided-convolution stem stands in for a full backbone, then the
features split into a local branch (grouped 1x1 convolutions) and a
global branch (the progressive attention stage), which are spatially
aligned, fused by the channel-block filter, pooled and classified by a
single linear head. Widths are configurable; the default keeps the
published ratios (two equal-width branches, half the blocks kept, 4
heads, bottleneck 4) at desk scale.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field

import numpy as np

from .attention import GroupedAttentionParams, init_params
from .errors import ConfigurationError, DimensionError, UsageError
from .fusion import (FusionConfig, FusionParams, align_spatial, fuse,
                     init_fusion_params)
from .progressive import (ProgressiveConfig, default_schedule,
                          init_progressive_params, progressive_forward)
from .tensor import (Tensor, add, concat_channels, conv1x1, global_avg_pool,
                     grouped_conv2d, matmul, relu, reshape)

__all__ = ["ModelConfig", "ModelParams", "DEFAULT_CONFIG", "TINY_CONFIG",
           "init_model_params", "forward_classify", "parameter_count",
           "named_parameters", "save_params", "load_params",
           "config_from_json", "config_to_json"]

ABLATIONS = ("local", "global", "fusion")


@dataclass(frozen=True)
class ModelConfig:
    """Widths and geometry of the toy network.

    ``stem`` lists (out_channels, kernel, stride) convolutions applied in
    order; both branches output ``branch_width`` channels.
    """
    in_channels: int = 4
    input_size: tuple[int, int] = (32, 32)
    stem: tuple[tuple[int, int, int], ...] = ((16, 2, 2), (32, 2, 2))
    branch_width: int = 64
    local_groups: int = 4
    fusion_blocks: int = 16
    bottleneck: int = 4
    heads: int = 4
    classes: int = 3
    stem_out: tuple[int, int, int] = field(init=False)
    progressive: ProgressiveConfig = field(init=False)
    fusion: FusionConfig = field(init=False)

    def __post_init__(self):
        if self.in_channels not in (1, 3, 4):
            raise ConfigurationError(
                f"in_channels must be 1, 3 or 4, got {self.in_channels}")
        h, w = self.input_size
        ch = self.in_channels
        for i, (out, k, s) in enumerate(self.stem):
            if h < k or w < k:
                raise ConfigurationError(
                    f"stem conv {i}: kernel {k} exceeds {h}x{w}")
            h, w = (h - k) // s + 1, (w - k) // s + 1
            ch = out
        object.__setattr__(self, "stem_out", (ch, h, w))
        cb = self.branch_width
        if ch % self.local_groups or cb % self.local_groups:
            raise ConfigurationError(
                f"branch widths {ch}->{cb} not divisible by"
                f" local_groups={self.local_groups}")
        object.__setattr__(self, "progressive", default_schedule(
            cb, h, w, bottleneck=self.bottleneck, heads=self.heads))
        object.__setattr__(self, "fusion",
                           FusionConfig(2 * cb, self.fusion_blocks))
        if self.fusion.kept_channels != cb:
            raise ConfigurationError(
                "fusion must keep exactly one branch width of channels")


DEFAULT_CONFIG = ModelConfig()
TINY_CONFIG = ModelConfig(input_size=(16, 16), stem=((8, 2, 2),),
                          branch_width=16, local_groups=2, fusion_blocks=8)


@dataclass
class ModelParams:
    stem: list[Tensor]
    local: list[Tensor]                 # two grouped 1x1 conv weights
    global_proj: Tensor                 # 1x1 conv into the global branch
    progressive: list[GroupedAttentionParams]
    fusion: FusionParams
    head_w: Tensor
    head_b: Tensor


def init_model_params(cfg: ModelConfig, seed: int = 42,
                      stdev: float = 0.02) -> ModelParams:
    rng = np.random.default_rng(seed)

    def p(shape, name):
        return Tensor(rng.normal(0.0, stdev, shape), requires_grad=True, name=name)

    stem = []
    ch = cfg.in_channels
    for i, (out, k, _) in enumerate(cfg.stem):
        stem.append(p((out, ch, k, k), f"stem{i}.w"))
        ch = out
    cb, g = cfg.branch_width, cfg.local_groups
    local = [p((cb, ch // g, 1, 1), "local0.w"), p((cb, cb // g, 1, 1), "local1.w")]
    return ModelParams(
        stem=stem,
        local=local,
        global_proj=p((cb, ch), "global_proj.w"),
        progressive=init_progressive_params(cfg.progressive, seed=seed + 1),
        fusion=init_fusion_params(cfg.fusion, seed=seed + 2),
        head_w=p((cfg.classes, cb), "head.w"),
        head_b=p((cfg.classes,), "head.b"),
    )


def named_parameters(params: ModelParams) -> list[tuple[str, Tensor]]:
    out = [(f"stem.{i}", t) for i, t in enumerate(params.stem)]
    out += [(f"local.{i}", t) for i, t in enumerate(params.local)]
    out.append(("global_proj", params.global_proj))
    for si, sp in enumerate(params.progressive):
        names = (["reduce_w"]
                 + [f"head{h}.{n}" for h in range(len(sp.qkv)) for n in "qkv"]
                 + ["row_table", "col_table", "expand_w"])
        out += [(f"progressive.{si}.{n}", t)
                for n, t in zip(names, sp.tensors())]
    out += [("fusion.gate_w1", params.fusion.gate_w1),
            ("fusion.gate_w2", params.fusion.gate_w2),
            ("fusion.fuse_w", params.fusion.fuse_w),
            ("head.w", params.head_w), ("head.b", params.head_b)]
    return out


def parameter_count(cfg: ModelConfig) -> int:
    """Exact count of trainable scalars in the full model."""
    params = init_model_params(cfg, seed=0)
    return sum(t.size for _, t in named_parameters(params))


def gradients(params: ModelParams) -> dict[str, "np.ndarray"]:
    """Per-parameter gradients after a backward pass. The fusion gate
    weights sit behind a hard selection with zero gradient almost
    everywhere, so they report explicit zeros."""
    return {name: (t.grad if t.grad is not None else np.zeros(t.shape))
            for name, t in named_parameters(params)}


def _branch_local(x, cfg, params, trace):
    out = x
    for i, w in enumerate(params.local):
        out = relu(grouped_conv2d(out, w, groups=cfg.local_groups))
        _note(trace, f"local.{i}", out)
    return out


def _branch_global(x, cfg, params, trace):
    out = relu(conv1x1(x, params.global_proj))
    _note(trace, "global_proj", out)
    out = progressive_forward(out, cfg.progressive, params.progressive)
    _note(trace, "progressive", out)
    return out


def _note(trace, name, t):
    if trace is not None:
        trace.append((name, tuple(t.shape)))


def forward_classify(x: Tensor, cfg: ModelConfig, params: ModelParams,
                     ablate: str | None = None,
                     trace: list | None = None) -> Tensor:
    """Class scores for one input map; deterministic for fixed params.

    ``ablate`` drops a component: "local" / "global" keep only that
    branch, "fusion" keeps both branches but replaces the block filter
    with a plain concat + 1x1 convolution (the 1x1 weight is a fixed
    seeded diagnostic weight, not a trainable of the full model).
    """
    if ablate is not None and ablate not in ABLATIONS:
        raise UsageError(f"ablate must be one of {ABLATIONS}, got {ablate!r}")
    expected = (cfg.in_channels, *cfg.input_size)
    if x.shape != expected:
        raise DimensionError(f"input shape {x.shape}, config wants {expected}")

    out = x
    for i, (w, (_, _, stride)) in enumerate(zip(params.stem, cfg.stem)):
        out = relu(grouped_conv2d(out, w, groups=1, stride=stride))
        _note(trace, f"stem.{i}", out)

    if ablate == "local":
        feat = _branch_local(out, cfg, params, trace)
    elif ablate == "global":
        feat = _branch_global(out, cfg, params, trace)
    else:
        local = _branch_local(out, cfg, params, trace)
        glob = _branch_global(out, cfg, params, trace)
        local, glob = align_spatial(local, glob)
        _note(trace, "aligned", local)
        if ablate == "fusion":
            stacked = concat_channels([local, glob])
            rng = np.random.default_rng(0)
            mix_w = Tensor(rng.normal(0.0, 0.02,
                                      (cfg.branch_width, 2 * cfg.branch_width)))
            feat = conv1x1(stacked, mix_w)
        else:
            feat = fuse(local, glob, cfg.fusion, params.fusion)
        _note(trace, "fused", feat)

    pooled = global_avg_pool(feat)
    _note(trace, "pooled", pooled)
    col = reshape(pooled, (pooled.size, 1))
    scores = reshape(matmul(params.head_w, col), (cfg.classes,))
    scores = add(scores, params.head_b)
    _note(trace, "scores", scores)
    return scores


# ------------------------------------------------------------- persistence

def save_params(params: ModelParams, path) -> None:
    """Flat binary file: one JSON manifest line (names and shapes), then
    all values as little-endian float64 in manifest order."""
    named = named_parameters(params)
    manifest = json.dumps({"entries": [
        {"name": n, "shape": list(t.shape)} for n, t in named]})
    with open(path, "wb") as fh:
        fh.write(manifest.encode() + b"\n")
        for _, t in named:
            fh.write(struct.pack(f"<{t.size}d", *t.data.reshape(-1)))


def load_params(cfg: ModelConfig, path) -> ModelParams:
    params = init_model_params(cfg, seed=0)
    named = named_parameters(params)
    with open(path, "rb") as fh:
        manifest = json.loads(fh.readline().decode())
        blob = fh.read()
    entries = manifest["entries"]
    if [e["name"] for e in entries] != [n for n, _ in named]:
        raise UsageError(f"{path}: manifest does not match this configuration")
    offset = 0
    for e, (_, t) in zip(entries, named):
        if tuple(e["shape"]) != t.shape:
            raise UsageError(
                f"{path}: {e['name']} has shape {e['shape']}, expected {t.shape}")
        n = t.size
        vals = struct.unpack_from(f"<{n}d", blob, offset)
        offset += 8 * n
        t.data = np.array(vals).reshape(t.shape)
    if offset != len(blob):
        raise UsageError(f"{path}: trailing bytes after parameter data")
    return params


def config_to_json(cfg: ModelConfig) -> str:
    return json.dumps({
        "in_channels": cfg.in_channels,
        "input_size": list(cfg.input_size),
        "stem": [list(s) for s in cfg.stem],
        "branch_width": cfg.branch_width,
        "local_groups": cfg.local_groups,
        "fusion_blocks": cfg.fusion_blocks,
        "bottleneck": cfg.bottleneck,
        "heads": cfg.heads,
        "classes": cfg.classes,
    }, indent=2)


def config_from_json(text: str) -> ModelConfig:
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise UsageError(f"bad model config JSON: {exc}")
    kwargs = {}
    for key in ("in_channels", "branch_width", "local_groups", "fusion_blocks",
                "bottleneck", "heads", "classes"):
        if key in raw:
            kwargs[key] = int(raw[key])
    if "input_size" in raw:
        kwargs["input_size"] = tuple(int(v) for v in raw["input_size"])
    if "stem" in raw:
        kwargs["stem"] = tuple(tuple(int(v) for v in s) for s in raw["stem"])
    unknown = set(raw) - {"in_channels", "input_size", "stem", "branch_width",
                          "local_groups", "fusion_blocks", "bottleneck",
                          "heads", "classes"}
    if unknown:
        raise UsageError(f"unknown model config keys: {sorted(unknown)}")
    return ModelConfig(**kwargs)
