"""Fuse the local and global branch features.

The concatenated channels are split into equal blocks, each block gets a
score from a squeeze-style two-layer gate on the pooled channel
descriptor, the lower-scoring half is dropped, and the surviving half is
fused by a 1x1 convolution. Selection is hard: scores only pick the kept
set, so no gradient flows through the gate weights.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, DimensionError
from .tensor import (Tensor, avg_pool2d, concat_channels, conv1x1,
                     global_avg_pool, take_channels, _stable_sigmoid)

__all__ = ["FusionConfig", "FusionParams", "BranchScores", "top_half_blocks",
           "block_scores", "fuse", "align_spatial", "init_fusion_params"]


@dataclass(frozen=True)
class FusionConfig:
    """Channel-block filter geometry.

    ``blocks`` must be even; the published configuration is 4096 total
    channels in 64 blocks with 4096 -> 512 -> 64 gate widths, and the
    default ``mid_channels`` keeps that 8:1 first reduction for any width.
    """
    total_channels: int
    blocks: int
    mid_channels: int | None = None

    def __post_init__(self):
        if self.total_channels < 1 or self.blocks < 1:
            raise ConfigurationError(f"invalid fusion geometry: {self}")
        if self.blocks % 2:
            raise ConfigurationError(f"block count must be even, got {self.blocks}")
        if self.total_channels % self.blocks:
            raise ConfigurationError(
                f"{self.total_channels} channels do not split into"
                f" {self.blocks} blocks")
        if self.mid_channels is None:
            object.__setattr__(self, "mid_channels",
                               max(1, self.total_channels // 8))

    @property
    def block_channels(self) -> int:
        return self.total_channels // self.blocks

    @property
    def kept_channels(self) -> int:
        return self.total_channels // 2


@dataclass
class FusionParams:
    gate_w1: Tensor   # (mid, total)
    gate_w2: Tensor   # (blocks, mid)
    fuse_w: Tensor    # (total/2, total/2)

    def tensors(self) -> list[Tensor]:
        return [self.gate_w1, self.gate_w2, self.fuse_w]


def init_fusion_params(cfg: FusionConfig, seed: int = 42,
                       stdev: float = 0.02) -> FusionParams:
    rng = np.random.default_rng(seed)

    def p(shape, name):
        return Tensor(rng.normal(0.0, stdev, shape), requires_grad=True, name=name)

    return FusionParams(
        gate_w1=p((cfg.mid_channels, cfg.total_channels), "gate_w1"),
        gate_w2=p((cfg.blocks, cfg.mid_channels), "gate_w2"),
        fuse_w=p((cfg.kept_channels, cfg.kept_channels), "fuse_w"),
    )


@dataclass(frozen=True)
class BranchScores:
    """Per-block scores in (0,1) and the kept half of the block indices."""
    scores: np.ndarray
    kept: tuple[int, ...]

    def __post_init__(self):
        n = len(self.scores)
        if len(self.kept) != n // 2:
            raise ConfigurationError(
                f"kept set has {len(self.kept)} of {n} blocks, expected half")
        dropped = sorted(set(range(n)) - set(self.kept))
        if dropped and min(self.scores[list(self.kept)]) < max(self.scores[dropped]):
            raise ConfigurationError("kept scores must dominate dropped scores")


def top_half_blocks(scores: np.ndarray) -> tuple[int, ...]:
    """Indices of the top half by score, ties broken toward lower index,
    returned in ascending index order."""
    scores = np.asarray(scores, dtype=np.float64)
    n = scores.size
    # stable sort on descending score keeps lower indices first among ties
    order = np.argsort(-scores, kind="stable")
    return tuple(sorted(int(i) for i in order[:n // 2]))


def block_scores(descriptor, cfg: FusionConfig,
                 params: FusionParams) -> BranchScores:
    """Gate the pooled channel descriptor: sigmoid(W2 relu(W1 u)).

    Selection is content-based but not differentiated; the returned
    scores are plain numbers.
    """
    u = descriptor.data if isinstance(descriptor, Tensor) else np.asarray(descriptor)
    u = u.reshape(-1).astype(np.float64)
    if u.size != cfg.total_channels:
        raise ConfigurationError(
            f"descriptor has {u.size} channels, config says {cfg.total_channels}")
    if params.gate_w1.shape != (cfg.mid_channels, cfg.total_channels) or \
            params.gate_w2.shape != (cfg.blocks, cfg.mid_channels):
        raise ConfigurationError(
            f"gate weights {params.gate_w1.shape} / {params.gate_w2.shape}"
            f" do not match config {cfg}")
    hidden = np.maximum(params.gate_w1.data @ u, 0.0)
    s = _stable_sigmoid(params.gate_w2.data @ hidden)
    return BranchScores(s, top_half_blocks(s))


def align_spatial(a: Tensor, b: Tensor) -> tuple[Tensor, Tensor]:
    """Average-pool the spatially larger map down to the smaller one.

    Dims must be related by a power-of-two factor.
    """
    if a.data.ndim != 3 or b.data.ndim != 3:
        raise DimensionError(
            f"align_spatial needs (C,H,W) maps, got {a.shape} and {b.shape}")
    if a.shape[1:] == b.shape[1:]:
        return a, b
    big, small, swapped = (a, b, False) if a.shape[1] >= b.shape[1] else (b, a, True)
    bh, bw = big.shape[1:]
    sh, sw = small.shape[1:]
    if sh == 0 or bh % sh or bw % sw or bh // sh != bw // sw:
        raise DimensionError(
            f"cannot align {a.shape[1:]} with {b.shape[1:]}")
    factor = bh // sh
    if factor & (factor - 1):
        raise DimensionError(
            f"alignment factor {factor} is not a power of two")
    while big.shape[1] > sh:
        big = avg_pool2d(big, 2, 2)
    return (small, big) if swapped else (big, small)


def fuse(local: Tensor, global_: Tensor, cfg: FusionConfig,
         params: FusionParams, scores: BranchScores | None = None) -> Tensor:
    """Concatenate the branches, keep the better-scoring half of the
    channel blocks (ascending original index order), fuse by 1x1 conv.

    ``scores`` may be passed in to freeze the selection; otherwise the
    gate runs on the pooled descriptor of the concatenated map.
    """
    if local.shape[1:] != global_.shape[1:]:
        raise DimensionError(
            f"branch spatial dims differ: {local.shape} vs {global_.shape}")
    if local.shape[0] + global_.shape[0] != cfg.total_channels:
        raise DimensionError(
            f"branches supply {local.shape[0]}+{global_.shape[0]} channels,"
            f" config says {cfg.total_channels}")
    x = concat_channels([local, global_])
    if scores is None:
        scores = block_scores(global_avg_pool(x), cfg, params)
    bc = cfg.block_channels
    channel_idx = np.concatenate(
        [np.arange(b * bc, (b + 1) * bc) for b in scores.kept])
    kept = take_channels(x, channel_idx)
    return conv1x1(kept, params.fuse_w)
