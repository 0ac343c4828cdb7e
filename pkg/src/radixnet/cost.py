"""Analytic FLOP and activation-memory model for whole-map vs grouped
attention, plus an instrumented counter that validates the formulas.

Accounting convention (fixed, documented here once): one fused
multiply-add counts as 2 FLOPs, and the modeled attention core is the
score path: the query projection, the key projection, and the
query-key logit product. Softmax normalization, the value path and the
position term are excluded; the model contains only the matrix-product
terms. Grouped-attention totals additionally charge the two bottleneck
1x1 convolutions. Memory is the element count of the intermediates live
at the attention peak times 8 bytes; it is meaningful for relative
comparison only.

Whole-map attention on a (C, H, W) map costs

    4*H*W*C^2 + 2*(H*W)^2*C

FLOPs; one h x w unit on channels reduced by a factor ``bottleneck`` costs
the same expression with (H, W, C) replaced by (h, w, C/bottleneck).
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import ConfigurationError
from .tensor import Tensor, flop_counter, matmul, softmax, transpose2d

__all__ = [
    "CostReport", "flops_mhsa", "flops_gmhsa_per_unit", "flops_gmhsa_total",
    "memory_mhsa", "memory_gmhsa", "count_ops_instrumented",
    "mhsa_score_forward", "gmhsa_unit_score_forward", "sweep",
    "format_table", "write_csv", "TABLE_VII_SIZES", "TABLE_VIII_SIZES",
]

# Published comparison row sets: 16-channel square maps from 40 to 144,
# and a channel sweep at fixed 40x40 with 8x8 units.
TABLE_VII_SIZES: list[tuple[int, int, int]] = [
    (16, s, s) for s in (40, 56, 72, 88, 104, 120, 136, 144)]
TABLE_VIII_SIZES: list[tuple[int, int, int]] = [
    (c, 40, 40) for c in (128, 256, 512, 1024, 2048, 4096)]


def _check_positive(**dims: int) -> None:
    for name, v in dims.items():
        if int(v) != v or v < 1:
            raise ConfigurationError(f"{name} must be a positive integer, got {v}")


def flops_mhsa(channels: int, height: int, width: int) -> int:
    """Score-path FLOPs of whole-map multi-head self-attention."""
    _check_positive(channels=channels, height=height, width=width)
    hw = height * width
    return 4 * hw * channels ** 2 + 2 * hw ** 2 * channels


def flops_gmhsa_per_unit(channels: int, unit_h: int, unit_w: int,
                         bottleneck: int) -> int:
    """Score-path FLOPs of one attention unit on bottlenecked channels."""
    _check_positive(channels=channels, unit_h=unit_h, unit_w=unit_w,
                    bottleneck=bottleneck)
    if channels % bottleneck:
        raise ConfigurationError(
            f"{channels} channels not divisible by bottleneck {bottleneck}")
    c = channels // bottleneck
    hw = unit_h * unit_w
    return 4 * hw * c ** 2 + 2 * hw ** 2 * c


def flops_gmhsa_total(channels: int, height: int, width: int,
                      unit_h: int, unit_w: int, bottleneck: int) -> int:
    """All units plus the reduce and expand 1x1 convolutions.

    Each 1x1 convolution performs H*W*C*(C/bottleneck) multiply-adds,
    i.e. 2*H*W*C*(C/bottleneck) FLOPs.
    """
    _check_positive(height=height, width=width)
    if height % unit_h or width % unit_w:
        raise ConfigurationError(
            f"{height}x{width} map does not tile by {unit_h}x{unit_w} units")
    units = (height // unit_h) * (width // unit_w)
    per_unit = flops_gmhsa_per_unit(channels, unit_h, unit_w, bottleneck)
    conv = 2 * height * width * channels * (channels // bottleneck)
    return units * per_unit + 2 * conv


def memory_mhsa(channels: int, height: int, width: int) -> int:
    """Bytes of live activations at the attention peak: input, q, k, v,
    the (HW)^2 logit and weight matrices, and the output."""
    _check_positive(channels=channels, height=height, width=width)
    hw = height * width
    elems = 5 * channels * hw + 2 * hw ** 2
    return 8 * elems


def memory_gmhsa(channels: int, height: int, width: int,
                 unit_h: int, unit_w: int, bottleneck: int) -> int:
    """Bytes live at the peak of grouped attention: full-size input and
    output, reduced and merged maps, and one unit's working set (units
    run one at a time)."""
    _check_positive(channels=channels, height=height, width=width,
                    unit_h=unit_h, unit_w=unit_w, bottleneck=bottleneck)
    if channels % bottleneck or height % unit_h or width % unit_w:
        raise ConfigurationError(
            f"({channels},{height},{width}) incompatible with"
            f" unit {unit_h}x{unit_w}, bottleneck {bottleneck}")
    c = channels // bottleneck
    hw_unit = unit_h * unit_w
    elems = (2 * channels * height * width      # input and output
             + 2 * c * height * width           # reduced and merged maps
             + 3 * c * hw_unit + 2 * hw_unit ** 2)  # one unit: q,k,v + logits
    return 8 * elems


@dataclass(frozen=True)
class CostReport:
    """One row of a cost comparison."""
    variant: str                 # "mhsa" or "gmhsa"
    channels: int
    height: int
    width: int
    unit_h: int | None
    unit_w: int | None
    bottleneck: int | None
    flops: int
    memory_bytes: int

    def __post_init__(self):
        if self.flops <= 0 or self.memory_bytes <= 0:
            raise ConfigurationError(
                f"cost must be positive: flops={self.flops},"
                f" memory={self.memory_bytes}")


# ------------------------------------------------------- instrumented oracle

def count_ops_instrumented(closure: Callable[[], object]) -> int:
    """Run ``closure`` and return the FLOPs its tensor ops executed,
    under the module accounting convention (2 FLOPs per multiply-add;
    only matrix products and convolutions count)."""
    with flop_counter() as meter:
        closure()
    return meter.flops


def _score_forward(positions: int, channels: int, seed: int) -> Tensor:
    rng = np.random.default_rng(seed)
    x = Tensor(rng.normal(size=(positions, channels)))
    wq = Tensor(rng.normal(size=(channels, channels)))
    wk = Tensor(rng.normal(size=(channels, channels)))
    q = matmul(x, wq)
    k = matmul(x, wk)
    logits = matmul(q, transpose2d(k)) * (1.0 / math.sqrt(channels))
    return softmax(logits, axis=1)


def mhsa_score_forward(channels: int, height: int, width: int,
                       seed: int = 0) -> Tensor:
    """Executable score path of whole-map attention (for instrumentation)."""
    _check_positive(channels=channels, height=height, width=width)
    return _score_forward(height * width, channels, seed)


def gmhsa_unit_score_forward(channels: int, unit_h: int, unit_w: int,
                             bottleneck: int, seed: int = 0) -> Tensor:
    """Executable score path of one grouped-attention unit."""
    _check_positive(channels=channels, unit_h=unit_h, unit_w=unit_w,
                    bottleneck=bottleneck)
    if channels % bottleneck:
        raise ConfigurationError(
            f"{channels} channels not divisible by bottleneck {bottleneck}")
    return _score_forward(unit_h * unit_w, channels // bottleneck, seed)


# ------------------------------------------------------------------- sweeps

def sweep(sizes: Sequence[tuple[int, int, int]],
          variants: Iterable[str] = ("mhsa", "gmhsa"),
          unit: tuple[int, int] = (8, 8),
          bottleneck: int = 4) -> list[CostReport]:
    """Cost rows for each (C, H, W) size, in the given order."""
    if not sizes:
        raise ConfigurationError("sweep: empty size list")
    variants = list(variants)
    for v in variants:
        if v not in ("mhsa", "gmhsa"):
            raise ConfigurationError(f"unknown variant {v!r}")
    uh, uw = unit
    rows = []
    for c, h, w in sizes:
        _check_positive(channels=c, height=h, width=w)
        for v in variants:
            if v == "mhsa":
                rows.append(CostReport("mhsa", c, h, w, None, None, None,
                                       flops_mhsa(c, h, w),
                                       memory_mhsa(c, h, w)))
            else:
                rows.append(CostReport(
                    "gmhsa", c, h, w, uh, uw, bottleneck,
                    flops_gmhsa_total(c, h, w, uh, uw, bottleneck),
                    memory_gmhsa(c, h, w, uh, uw, bottleneck)))
    return rows


_COLUMNS = ("variant", "C", "H", "W", "h", "w", "phi", "flops", "memory_bytes")


def _row_values(r: CostReport) -> list[str]:
    blank = lambda v: "" if v is None else str(v)
    return [r.variant, str(r.channels), str(r.height), str(r.width),
            blank(r.unit_h), blank(r.unit_w), blank(r.bottleneck),
            str(r.flops), str(r.memory_bytes)]


def format_table(reports: Sequence[CostReport]) -> str:
    """Aligned plain-text table with a GFLOP convenience column."""
    header = list(_COLUMNS) + ["GFLOPs"]
    body = [_row_values(r) + [f"{r.flops / 1e9:.4f}"] for r in reports]
    widths = [max(len(header[i]), *(len(row[i]) for row in body))
              for i in range(len(header))]
    lines = ["  ".join(h.rjust(widths[i]) for i, h in enumerate(header))]
    lines.append("  ".join("-" * w for w in widths))
    for row in body:
        lines.append("  ".join(v.rjust(widths[i]) for i, v in enumerate(row)))
    return "\n".join(lines)


def write_csv(reports: Sequence[CostReport], path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(_COLUMNS)
        for r in reports:
            writer.writerow(_row_values(r))
