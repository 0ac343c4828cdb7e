"""Grouped multi-head self-attention over spatial units.

A (C, H, W) feature map is channel-reduced by a 1x1 bottleneck, tiled into
(H/h)*(W/w) units of h x w positions, each unit runs multi-head scaled
dot-product attention with an additive position term, and the tiles are
merged back and expanded to C channels. Units never exchange information,
so they may be processed in any order (or concurrently) with bit-identical
results; the merge is deterministic by tile index.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import ConfigurationError, DimensionError
from .tensor import (Tensor, concat, conv1x1, matmul, reshape, softmax,
                     transpose2d, _result)

__all__ = [
    "AttentionConfig", "GroupedAttentionParams", "Tile", "group", "merge",
    "position_matrix", "unit_attention", "grouped_attention", "init_params",
]


@dataclass(frozen=True)
class AttentionConfig:
    """Shape parameters of one grouped-attention block.

    ``bottleneck`` is the channel scaling factor of the 1x1 reduction
    (attention runs on channels // bottleneck channels).
    """
    channels: int
    height: int
    width: int
    unit_h: int
    unit_w: int
    heads: int = 4
    bottleneck: int = 4

    def __post_init__(self):
        c, h, w = self.channels, self.height, self.width
        if min(c, h, w, self.unit_h, self.unit_w) < 1:
            raise ConfigurationError(f"all extents must be >= 1: {self}")
        if self.heads < 1 or self.bottleneck < 1:
            raise ConfigurationError(
                f"heads and bottleneck must be >= 1: {self}")
        if h % self.unit_h or w % self.unit_w:
            raise ConfigurationError(
                f"{h}x{w} map does not tile by {self.unit_h}x{self.unit_w} units")
        if c % self.bottleneck:
            raise ConfigurationError(
                f"{c} channels not divisible by bottleneck {self.bottleneck}")
        if (c // self.bottleneck) % self.heads:
            raise ConfigurationError(
                f"{c // self.bottleneck} reduced channels not divisible by"
                f" {self.heads} heads")

    @property
    def reduced_channels(self) -> int:
        return self.channels // self.bottleneck

    @property
    def head_dim(self) -> int:
        return self.reduced_channels // self.heads

    @property
    def unit_count(self) -> int:
        return (self.height // self.unit_h) * (self.width // self.unit_w)


@dataclass
class GroupedAttentionParams:
    """Learnable state of one block.

    ``qkv`` holds one (wq, wk, wv) triple per head, each (c, d) with
    c = reduced channels and d = per-head dim. ``row_table`` (h, d) and
    ``col_table`` (w, d) add up to the per-position encoding.
    """
    reduce_w: Tensor          # (C/phi, C)
    qkv: list[tuple[Tensor, Tensor, Tensor]]
    row_table: Tensor         # (unit_h, d)
    col_table: Tensor         # (unit_w, d)
    expand_w: Tensor          # (C, C/phi)

    def tensors(self) -> list[Tensor]:
        out = [self.reduce_w]
        for wq, wk, wv in self.qkv:
            out += [wq, wk, wv]
        out += [self.row_table, self.col_table, self.expand_w]
        return out


def init_params(cfg: AttentionConfig, seed: int = 42,
                stdev: float = 0.02) -> GroupedAttentionParams:
    """Seeded zero-mean gaussian initialization (stdev 0.02)."""
    rng = np.random.default_rng(seed)
    c, d = cfg.reduced_channels, cfg.head_dim

    def p(shape, name):
        return Tensor(rng.normal(0.0, stdev, shape), requires_grad=True, name=name)

    qkv = [(p((c, d), f"head{i}.wq"), p((c, d), f"head{i}.wk"),
            p((c, d), f"head{i}.wv")) for i in range(cfg.heads)]
    return GroupedAttentionParams(
        reduce_w=p((c, cfg.channels), "reduce_w"),
        qkv=qkv,
        row_table=p((cfg.unit_h, d), "row_table"),
        col_table=p((cfg.unit_w, d), "col_table"),
        expand_w=p((cfg.channels, c), "expand_w"),
    )


@dataclass
class Tile:
    """One spatial unit plus its slot in the (rows x cols) tile grid."""
    tensor: Tensor
    row: int
    col: int
    grid_rows: int
    grid_cols: int


def group(x: Tensor, unit_h: int, unit_w: int) -> list[Tile]:
    """Cut a (C, H, W) map into row-major tiles of (C, unit_h, unit_w).

    Every value lands in exactly one tile; ``merge`` restores the map.
    """
    if x.data.ndim != 3:
        raise DimensionError(f"group needs (C,H,W), got {x.shape}")
    c, h, w = x.shape
    if h % unit_h or w % unit_w:
        raise ConfigurationError(
            f"{h}x{w} map does not tile by {unit_h}x{unit_w} units")
    rows, cols = h // unit_h, w // unit_w
    tiles = []
    for r in range(rows):
        for cix in range(cols):
            r0, c0 = r * unit_h, cix * unit_w
            sl = (slice(None), slice(r0, r0 + unit_h), slice(c0, c0 + unit_w))

            def back(g, _sl=sl):
                gx = np.zeros((c, h, w))
                gx[_sl] = g
                return (gx,)

            t = _result(x.data[sl].copy(), "group", (x,), back)
            tiles.append(Tile(t, r, cix, rows, cols))
    return tiles


def merge(tiles: Sequence[Tile], shape: tuple[int, int, int]) -> Tensor:
    """Reassemble row-major tiles into a (C, H, W) map.

    The tile list must enumerate the grid row-major and each tile's
    metadata must agree with its list slot; a permuted or inconsistent
    set is rejected.
    """
    c, h, w = shape
    if not tiles:
        raise DimensionError("merge: empty tile list")
    rows, cols = tiles[0].grid_rows, tiles[0].grid_cols
    unit_h, unit_w = tiles[0].tensor.shape[1:]
    if rows * unit_h != h or cols * unit_w != w:
        raise DimensionError(
            f"merge: {rows}x{cols} grid of {unit_h}x{unit_w} tiles cannot fill {shape}")
    if len(tiles) != rows * cols:
        raise DimensionError(
            f"merge: expected {rows * cols} tiles, got {len(tiles)}")
    slices = []
    for idx, tile in enumerate(tiles):
        if (tile.grid_rows, tile.grid_cols) != (rows, cols):
            raise DimensionError("merge: tiles come from different grids")
        if tile.tensor.shape != (c, unit_h, unit_w):
            raise DimensionError(
                f"merge: tile {idx} has shape {tile.tensor.shape},"
                f" expected {(c, unit_h, unit_w)}")
        if (tile.row, tile.col) != (idx // cols, idx % cols):
            raise DimensionError(
                f"merge: tile {idx} metadata ({tile.row},{tile.col})"
                f" disagrees with its slot")
        r0, c0 = tile.row * unit_h, tile.col * unit_w
        slices.append((slice(None), slice(r0, r0 + unit_h), slice(c0, c0 + unit_w)))

    out = np.empty(shape)
    for tile, sl in zip(tiles, slices):
        out[sl] = tile.tensor.data

    def back(g):
        return tuple(np.ascontiguousarray(g[sl]) for sl in slices)

    return _result(out, "merge", [t.tensor for t in tiles], back)


def position_matrix(row_table: Tensor, col_table: Tensor) -> Tensor:
    """Per-position encodings r[(i,j)] = row_table[i] + col_table[j],
    flattened row-major to (h*w, d)."""
    h, d = row_table.shape
    w, d2 = col_table.shape
    if d != d2:
        raise DimensionError(
            f"position tables disagree on dim: {row_table.shape} vs {col_table.shape}")
    data = (row_table.data[:, None, :] + col_table.data[None, :, :]).reshape(h * w, d)

    def back(g):
        g3 = g.reshape(h, w, d)
        return g3.sum(axis=1), g3.sum(axis=0)

    return _result(data, "position_matrix", (row_table, col_table), back)


def unit_attention(x_unit: Tensor, params: GroupedAttentionParams, heads: int,
                   return_weights: bool = False):
    """Multi-head attention over the h*w positions of one (c, h, w) unit.

    Per head: logits = (q k^T + q r^T) / sqrt(d), softmax over keys,
    weighted sum of v; head outputs concatenate back to c channels.
    """
    c, h, w = x_unit.shape
    if c % heads:
        raise ConfigurationError(f"{c} channels not divisible by {heads} heads")
    if len(params.qkv) != heads:
        raise ConfigurationError(
            f"params carry {len(params.qkv)} heads, asked for {heads}")
    d = c // heads
    seq = transpose2d(reshape(x_unit, (c, h * w)))  # (hw, c)
    r = position_matrix(params.row_table, params.col_table)
    scale = 1.0 / math.sqrt(d)
    outs, weights = [], []
    for wq, wk, wv in params.qkv:
        q = matmul(seq, wq)
        k = matmul(seq, wk)
        v = matmul(seq, wv)
        logits = (matmul(q, transpose2d(k)) + matmul(q, transpose2d(r))) * scale
        attn = softmax(logits, axis=1)
        outs.append(matmul(attn, v))
        if return_weights:
            weights.append(attn.data.copy())
    merged = concat(outs, axis=1)  # (hw, c)
    out = reshape(transpose2d(merged), (c, h, w))
    return (out, weights) if return_weights else out


def grouped_attention(x: Tensor, cfg: AttentionConfig,
                      params: GroupedAttentionParams,
                      tile_order: Sequence[int] | None = None) -> Tensor:
    """Full block: 1x1 reduce, tile, per-unit attention, merge, 1x1 expand.

    ``tile_order`` only changes the order units are processed in; the
    output is identical for any permutation (units are independent).
    """
    if x.shape != (cfg.channels, cfg.height, cfg.width):
        raise DimensionError(
            f"input shape {x.shape} does not match config"
            f" {(cfg.channels, cfg.height, cfg.width)}")
    reduced = conv1x1(x, params.reduce_w)
    tiles = group(reduced, cfg.unit_h, cfg.unit_w)
    order = range(len(tiles)) if tile_order is None else list(tile_order)
    if sorted(order) != list(range(len(tiles))):
        raise ConfigurationError(
            f"tile_order must permute 0..{len(tiles) - 1}")
    processed: list[Tile | None] = [None] * len(tiles)
    for i in order:
        t = tiles[i]
        processed[i] = Tile(unit_attention(t.tensor, params, cfg.heads),
                            t.row, t.col, t.grid_rows, t.grid_cols)
    merged = merge(processed, (cfg.reduced_channels, cfg.height, cfg.width))
    return conv1x1(merged, params.expand_w)
