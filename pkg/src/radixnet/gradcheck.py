"""Finite-difference validation of the analytic gradients.

``check_gradients`` compares backward() against central differences
(step 1e-5) for every parameter group of a closure and reports the max
relative error per group, where the relative error uses a unit-scale
floor so that near-zero gradients are compared absolutely. The scope
suites cover the primitive ops, the attention block, the progressive
branch, the fusion module and the tiny end-to-end model.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from . import model as model_mod
from .attention import AttentionConfig, grouped_attention, init_params
from .errors import UsageError
from .fusion import FusionConfig, fuse, init_fusion_params
from .progressive import (default_schedule, init_progressive_params,
                          progressive_forward)
from .tensor import (Tensor, add, avg_pool2d, backward, concat_channels,
                     global_avg_pool, grouped_conv2d, matmul, mul, relu,
                     sigmoid, softmax, take_channels, tsum)

__all__ = ["GroupResult", "check_gradients", "run_scope", "SCOPES",
           "TOLERANCE", "STEP"]

TOLERANCE = 1e-4
STEP = 1e-5
_FLOOR = 1e-2  # below this magnitude the comparison is absolute


@dataclass(frozen=True)
class GroupResult:
    name: str
    max_rel_error: float

    def passed(self, tolerance: float = TOLERANCE) -> bool:
        return self.max_rel_error <= tolerance


def check_gradients(loss_fn: Callable[[], Tensor],
                    named: Sequence[tuple[str, Tensor]],
                    step: float = STEP,
                    corrupt: str | None = None) -> list[GroupResult]:
    """Max relative error between backward() and central differences,
    one result per named tensor.

    ``corrupt`` deliberately damages that group's analytic gradient (a
    negative control for the harness itself).
    """
    if corrupt is not None and corrupt not in {n for n, _ in named}:
        raise UsageError(f"unknown parameter group {corrupt!r}")
    for _, t in named:
        t.grad = None
        t.requires_grad = True
    backward(loss_fn())
    analytic = {}
    for name, t in named:
        g = t.grad if t.grad is not None else np.zeros(t.shape)
        analytic[name] = g.astype(np.float64).copy()
    if corrupt is not None:
        analytic[corrupt] = analytic[corrupt] * 1.5 + 1e-2

    results = []
    for name, t in named:
        flat = t.data.reshape(-1)
        num = np.empty(flat.size)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + step
            hi = loss_fn().item()
            flat[i] = orig - step
            lo = loss_fn().item()
            flat[i] = orig
            num[i] = (hi - lo) / (2.0 * step)
        a = analytic[name].reshape(-1)
        denom = np.maximum(np.maximum(np.abs(a), np.abs(num)), _FLOOR)
        results.append(GroupResult(name, float((np.abs(a - num) / denom).max())))
    return results


def _weighted_sum(out: Tensor, seed: int = 7) -> Tensor:
    w = np.random.default_rng(seed).normal(size=out.shape)
    return tsum(mul(out, Tensor(w)))


# ---------------------------------------------------------------- op scope

def _ops_cases(seed: int):
    rng = np.random.default_rng(seed)

    def t(*shape):
        return Tensor(rng.normal(size=shape), requires_grad=True)

    a34, b42 = t(3, 4), t(4, 2)
    x_soft = t(3, 5)
    x_point = t(2, 3, 4)
    xa, xb = t(2, 4, 4), t(2, 4, 4)
    x_conv, w_conv = t(4, 6, 6), t(6, 2, 3, 3)
    x_pool = t(3, 6, 6)
    x_take = t(6, 2, 2)
    cases = [
        ("matmul", lambda: _weighted_sum(matmul(a34, b42)), [("a", a34), ("b", b42)]),
        ("softmax", lambda: _weighted_sum(softmax(x_soft, axis=1)), [("x", x_soft)]),
        ("relu", lambda: _weighted_sum(relu(x_point)), [("x", x_point)]),
        ("sigmoid", lambda: _weighted_sum(sigmoid(x_point)), [("x", x_point)]),
        ("add", lambda: _weighted_sum(add(xa, xb)), [("a", xa), ("b", xb)]),
        ("mul", lambda: _weighted_sum(mul(xa, xb)), [("a", xa), ("b", xb)]),
        ("grouped_conv2d", lambda: _weighted_sum(
            grouped_conv2d(x_conv, w_conv, groups=2, stride=1)),
            [("x", x_conv), ("w", w_conv)]),
        ("avg_pool2d", lambda: _weighted_sum(avg_pool2d(x_pool, 2, 2)),
            [("x", x_pool)]),
        ("global_avg_pool", lambda: _weighted_sum(global_avg_pool(x_point)),
            [("x", x_point)]),
        ("concat_channels", lambda: _weighted_sum(concat_channels([xa, xb])),
            [("a", xa), ("b", xb)]),
        ("take_channels", lambda: _weighted_sum(
            take_channels(x_take, [0, 2, 2, 5])), [("x", x_take)]),
    ]
    return cases


def _run_ops(seed: int, corrupt: str | None) -> list[GroupResult]:
    cases = _ops_cases(seed)
    all_names = {f"{op}.{n}" for op, _, named in cases for n, _ in named}
    if corrupt is not None and corrupt not in all_names:
        raise UsageError(f"unknown parameter group {corrupt!r}")
    results = []
    for op_name, loss, named in cases:
        scoped = [(f"{op_name}.{n}", t) for n, t in named]
        cor = corrupt if corrupt in {n for n, _ in scoped} else None
        results.extend(check_gradients(loss, scoped, corrupt=cor))
    return results


# ------------------------------------------------------------ block scopes

def _run_gmhsa(seed: int, corrupt: str | None) -> list[GroupResult]:
    cfg = AttentionConfig(8, 4, 4, 2, 2, heads=2, bottleneck=2)
    params = init_params(cfg, seed=seed)
    x = Tensor(np.random.default_rng(seed + 1).normal(size=(8, 4, 4)))
    named = [(t.name or f"p{i}", t) for i, t in enumerate(params.tensors())]
    return check_gradients(
        lambda: _weighted_sum(grouped_attention(x, cfg, params)),
        named, corrupt=corrupt)


def _run_progressive(seed: int, corrupt: str | None) -> list[GroupResult]:
    cfg = default_schedule(8, 8, 8, bottleneck=2, heads=2)
    params = init_progressive_params(cfg, seed=seed)
    x = Tensor(np.random.default_rng(seed + 1).normal(size=(8, 8, 8)))
    named = [(f"stage{i}.{t.name}", t)
             for i, sp in enumerate(params) for t in sp.tensors()]
    return check_gradients(
        lambda: _weighted_sum(progressive_forward(x, cfg, params)),
        named, corrupt=corrupt)


def _run_fusion(seed: int, corrupt: str | None) -> list[GroupResult]:
    cfg = FusionConfig(16, 4)
    params = init_fusion_params(cfg, seed=seed)
    rng = np.random.default_rng(seed + 1)
    local = Tensor(rng.normal(size=(8, 2, 2)), requires_grad=True)
    glob = Tensor(rng.normal(size=(8, 2, 2)), requires_grad=True)
    named = [("local_input", local), ("global_input", glob),
             ("gate_w1", params.gate_w1), ("gate_w2", params.gate_w2),
             ("fuse_w", params.fuse_w)]
    return check_gradients(
        lambda: _weighted_sum(fuse(local, glob, cfg, params)),
        named, corrupt=corrupt)


def _run_model(seed: int, corrupt: str | None) -> list[GroupResult]:
    cfg = model_mod.TINY_CONFIG
    params = model_mod.init_model_params(cfg, seed=seed)
    x = Tensor(np.random.default_rng(seed + 1).normal(size=(4, 16, 16)))
    named = model_mod.named_parameters(params)
    return check_gradients(
        lambda: _weighted_sum(model_mod.forward_classify(x, cfg, params)),
        named, corrupt=corrupt)


SCOPES = {
    "ops": _run_ops,
    "gmhsa": _run_gmhsa,
    "progressive": _run_progressive,
    "fusion": _run_fusion,
    "model": _run_model,
}


def run_scope(scope: str, seed: int = 42,
              corrupt: str | None = None) -> list[GroupResult]:
    if scope not in SCOPES:
        raise UsageError(f"scope must be one of {sorted(SCOPES)}, got {scope!r}")
    return SCOPES[scope](seed, corrupt)
