"""Global feature branch: a chain of grouped-attention blocks with one
stride-2 average pooling after the first block and growing unit sizes,
ending in attention over the whole (post-pooling) map.

Each block is wrapped in a residual skip, so zero-initialized attention
parameters make the branch an identity up to pooling.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .attention import (AttentionConfig, GroupedAttentionParams,
                        grouped_attention, init_params)
from .errors import ConfigurationError, DimensionError
from .tensor import Tensor, add, avg_pool2d

__all__ = ["StageSpec", "ProgressiveConfig", "default_schedule",
           "init_progressive_params", "progressive_forward"]


@dataclass(frozen=True)
class StageSpec:
    unit_h: int
    unit_w: int
    pool_after: bool = False


@dataclass(frozen=True)
class ProgressiveConfig:
    """Stage schedule plus the input geometry it applies to."""
    channels: int
    height: int
    width: int
    stages: tuple[StageSpec, ...]
    bottleneck: int = 4
    heads: int = 4
    stage_configs: tuple[AttentionConfig, ...] = field(init=False)

    def __post_init__(self):
        if not self.stages:
            raise ConfigurationError("schedule needs at least one stage")
        h, w = self.height, self.width
        configs = []
        prev = None
        for i, st in enumerate(self.stages):
            if prev and (st.unit_h < prev.unit_h or st.unit_w < prev.unit_w):
                raise ConfigurationError(
                    f"stage {i} unit {st.unit_h}x{st.unit_w} shrinks below"
                    f" {prev.unit_h}x{prev.unit_w}")
            configs.append(AttentionConfig(
                self.channels, h, w, st.unit_h, st.unit_w,
                heads=self.heads, bottleneck=self.bottleneck))
            if st.pool_after:
                if h % 2 or w % 2:
                    raise ConfigurationError(
                        f"stage {i} pools odd dims {h}x{w}")
                h, w = h // 2, w // 2
            prev = st
        last = self.stages[-1]
        last_cfg = configs[-1]
        if (last.unit_h, last.unit_w) != (last_cfg.height, last_cfg.width):
            raise ConfigurationError(
                f"final stage unit {last.unit_h}x{last.unit_w} must cover the"
                f" full {last_cfg.height}x{last_cfg.width} map")
        object.__setattr__(self, "stage_configs", tuple(configs))

    @property
    def output_dims(self) -> tuple[int, int]:
        pools = sum(1 for s in self.stages if s.pool_after)
        return self.height >> pools, self.width >> pools


def _power_of_two(n: int) -> bool:
    return n >= 1 and (n & (n - 1)) == 0


def default_schedule(channels: int, height: int, width: int,
                     bottleneck: int = 4, heads: int = 4) -> ProgressiveConfig:
    """Two stages: quarter-size units, one pooling, then global attention.

    The published design states the principle (grow unit sizes, pool once
    after the first block, end global) but no numbers; this schedule is
    the package's explicit stand-in and requires power-of-two dims >= 8.
    """
    if not (_power_of_two(height) and _power_of_two(width)
            and height >= 8 and width >= 8):
        raise ConfigurationError(
            f"default schedule needs power-of-two dims >= 8, got {height}x{width}")
    stages = (StageSpec(height // 4, width // 4, pool_after=True),
              StageSpec(height // 2, width // 2, pool_after=False))
    return ProgressiveConfig(channels, height, width, stages,
                             bottleneck=bottleneck, heads=heads)


def init_progressive_params(cfg: ProgressiveConfig,
                            seed: int = 42) -> list[GroupedAttentionParams]:
    return [init_params(sc, seed=seed + i)
            for i, sc in enumerate(cfg.stage_configs)]


def progressive_forward(x: Tensor, cfg: ProgressiveConfig,
                        params: list[GroupedAttentionParams]) -> Tensor:
    """Residual grouped-attention blocks with pooling where flagged."""
    if x.shape != (cfg.channels, cfg.height, cfg.width):
        raise DimensionError(
            f"input shape {x.shape} does not match config"
            f" {(cfg.channels, cfg.height, cfg.width)}")
    if len(params) != len(cfg.stages):
        raise ConfigurationError(
            f"{len(params)} parameter sets for {len(cfg.stages)} stages")
    out = x
    for stage, stage_cfg, p in zip(cfg.stages, cfg.stage_configs, params):
        out = add(out, grouped_attention(out, stage_cfg, p))
        if stage.pool_after:
            out = avg_pool2d(out, 2, 2)
    return out
