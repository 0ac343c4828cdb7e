"""Dense float64 tensors with the forward ops the network blocks need,
plus reverse-mode gradients.

Feature maps are channels-first (C, H, W); matrices are plain 2-D arrays.
Every op is a pure function: it validates shapes, computes the result and,
when any input participates in differentiation, attaches a ``GradRecord``
describing how to push gradients back. ``backward`` replays the records in
reverse topological order, visiting each node exactly once.

A recorded graph belongs to a single forward/backward pass; concurrent
passes must build separate graphs (tensors themselves are immutable by
convention and safe to share).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from . import _kernels
from .errors import DimensionError, UsageError

__all__ = [
    "Tensor", "GradRecord", "add", "mul", "matmul", "relu", "sigmoid",
    "softmax", "tsum", "reshape", "transpose2d", "concat", "concat_channels",
    "take_channels", "grouped_conv2d", "avg_pool2d", "global_avg_pool",
    "backward", "flop_counter",
]


@dataclass
class GradRecord:
    """How one op result was produced: parents and the backward rule.

    ``backward`` maps the gradient at this node to one gradient array per
    parent (``None`` for parents that need no gradient).
    """
    op: str
    parents: tuple["Tensor", ...]
    backward: Callable[[np.ndarray], tuple]


class Tensor:
    """A dense float64 array plus optional autodiff bookkeeping."""

    __slots__ = ("data", "grad", "requires_grad", "name", "_record")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        arr = np.asarray(data, dtype=np.float64)
        if 0 in arr.shape:
            raise DimensionError(f"tensor extents must be >= 1, got {arr.shape}")
        self.data = arr
        self.grad: np.ndarray | None = None
        self.requires_grad = bool(requires_grad)
        self.name = name
        self._record: GradRecord | None = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        if self.data.size != 1:
            raise UsageError(f"item() needs a scalar, got shape {self.shape}")
        return float(self.data.reshape(()))

    def backward(self) -> None:
        backward(self)

    def __repr__(self):
        tag = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}{tag})"

    # light operator sugar; the module-level functions are the real API
    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return add(self, mul(other, -1.0))

    def __mul__(self, other):
        return mul(self, other)

    def __matmul__(self, other):
        return matmul(self, other)

    def __neg__(self):
        return mul(self, -1.0)


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _tracked(*parents: Tensor) -> bool:
    return any(p.requires_grad or p._record is not None for p in parents)


def _result(data, op: str, parents: Sequence[Tensor], backward_fn) -> Tensor:
    out = Tensor(data)
    if _tracked(*parents):
        out._record = GradRecord(op, tuple(parents), backward_fn)
    return out


# --------------------------------------------------------------- flop meter

@dataclass(eq=False)  # identity semantics: meters are registry entries
class _FlopMeter:
    flops: int = 0
    by_op: dict = field(default_factory=dict)

    def count(self, op: str, macs: int) -> None:
        self.flops += 2 * macs
        self.by_op[op] = self.by_op.get(op, 0) + 2 * macs


_METERS: list[_FlopMeter] = []


class flop_counter:
    """Context manager counting multiply-accumulates (as 2 FLOPs each)
    executed by matmul and grouped_conv2d inside the block.

    Pointwise ops and softmax normalization are deliberately not counted;
    the analytic cost model covers only the matrix-product terms.
    """

    def __enter__(self) -> _FlopMeter:
        self.meter = _FlopMeter()
        _METERS.append(self.meter)
        return self.meter

    def __exit__(self, *exc):
        _METERS.remove(self.meter)
        return False


def _count(op: str, macs: int) -> None:
    for meter in _METERS:
        meter.count(op, macs)


# ------------------------------------------------------------- element ops

def add(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    if a.shape != b.shape:
        raise DimensionError(f"add: shapes {a.shape} and {b.shape} differ")
    return _result(a.data + b.data, "add", (a, b), lambda g: (g, g))


def mul(a, b) -> Tensor:
    """Elementwise product; ``b`` may be a python scalar."""
    a = _as_tensor(a)
    if isinstance(b, (int, float)):
        s = float(b)
        return _result(a.data * s, "scale", (a,), lambda g: (g * s,))
    b = _as_tensor(b)
    if a.shape != b.shape:
        raise DimensionError(f"mul: shapes {a.shape} and {b.shape} differ")
    return _result(a.data * b.data, "mul", (a, b),
                   lambda g: (g * b.data, g * a.data))


def relu(x) -> Tensor:
    x = _as_tensor(x)
    mask = x.data > 0  # subgradient 0 at the kink
    return _result(np.where(mask, x.data, 0.0), "relu", (x,),
                   lambda g: (g * mask,))


def sigmoid(x) -> Tensor:
    x = _as_tensor(x)
    y = _stable_sigmoid(x.data)
    return _result(y, "sigmoid", (x,), lambda g: (g * y * (1.0 - y),))


def _stable_sigmoid(v: np.ndarray) -> np.ndarray:
    out = np.empty_like(v)
    pos = v >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-v[pos]))
    ev = np.exp(v[~pos])
    out[~pos] = ev / (1.0 + ev)
    return out


def tsum(x) -> Tensor:
    """Sum of all elements, as a scalar tensor."""
    x = _as_tensor(x)
    return _result(np.array(x.data.sum()), "sum", (x,),
                   lambda g: (np.broadcast_to(g, x.shape).copy(),))


def reshape(x, shape) -> Tensor:
    x = _as_tensor(x)
    if int(np.prod(shape)) != x.size:
        raise DimensionError(f"reshape: cannot view {x.shape} as {tuple(shape)}")
    old = x.shape
    return _result(x.data.reshape(shape), "reshape", (x,),
                   lambda g: (g.reshape(old),))


def transpose2d(x) -> Tensor:
    x = _as_tensor(x)
    if x.data.ndim != 2:
        raise DimensionError(f"transpose2d needs a matrix, got shape {x.shape}")
    return _result(x.data.T.copy(), "transpose", (x,), lambda g: (g.T,))


# --------------------------------------------------------------- matrix ops

def matmul(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    if a.data.ndim != 2 or b.data.ndim != 2 or a.shape[1] != b.shape[0]:
        raise DimensionError(
            f"matmul: incompatible shapes {a.shape} x {b.shape}")
    m, k = a.shape
    n = b.shape[1]
    _count("matmul", m * k * n)
    ad, bd = a.data, b.data

    def back(g):
        return g @ bd.T, ad.T @ g

    return _result(ad @ bd, "matmul", (a, b), back)


def softmax(x, axis: int) -> Tensor:
    """Shift-invariant softmax along ``axis``; rows sum to 1."""
    x = _as_tensor(x)
    nd = x.data.ndim
    if not -nd <= axis < nd:
        raise DimensionError(f"softmax: axis {axis} invalid for shape {x.shape}")
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=axis, keepdims=True)

    def back(g):
        dot = (g * y).sum(axis=axis, keepdims=True)
        return (y * (g - dot),)

    return _result(y, "softmax", (x,), back)


# ----------------------------------------------------------- structure ops

def concat(tensors: Iterable, axis: int = 0) -> Tensor:
    ts = [_as_tensor(t) for t in tensors]
    if not ts:
        raise UsageError("concat of an empty list")
    ref = list(ts[0].shape)
    for t in ts[1:]:
        other = list(t.shape)
        if len(other) != len(ref) or any(
                i != axis and other[i] != ref[i] for i in range(len(ref))):
            raise DimensionError(
                f"concat: shape {t.shape} incompatible with {ts[0].shape} on axis {axis}")
    sizes = [t.shape[axis] for t in ts]
    splits = np.cumsum(sizes)[:-1]

    def back(g):
        return tuple(np.ascontiguousarray(p) for p in np.split(g, splits, axis=axis))

    return _result(np.concatenate([t.data for t in ts], axis=axis),
                   "concat", ts, back)


def concat_channels(tensors: Iterable) -> Tensor:
    """Stack (C_i, H, W) maps along the channel axis; spatial dims must agree."""
    return concat(tensors, axis=0)


def take_channels(x, indices) -> Tensor:
    """Gather channels of a (C, H, W) map by index, preserving order."""
    x = _as_tensor(x)
    if x.data.ndim != 3:
        raise DimensionError(f"take_channels needs (C,H,W), got {x.shape}")
    idx = np.asarray(indices, dtype=np.intp)
    if idx.ndim != 1 or (idx.size and (idx.min() < 0 or idx.max() >= x.shape[0])):
        raise DimensionError(
            f"take_channels: indices out of range for {x.shape[0]} channels")

    def back(g):
        gx = np.zeros(x.shape)
        np.add.at(gx, idx, g)
        return (gx,)

    return _result(x.data[idx], "take_channels", (x,), back)


# ------------------------------------------------------------ spatial ops

def grouped_conv2d(x, w, groups: int = 1, stride: int = 1) -> Tensor:
    """2-D cross-correlation where each output group sees one input group.

    ``x`` is (C_in, H, W); ``w`` is (C_out, C_in/groups, k, k); no padding.
    ``groups=1`` is an ordinary convolution.
    """
    x, w = _as_tensor(x), _as_tensor(w)
    if x.data.ndim != 3 or w.data.ndim != 4:
        raise DimensionError(
            f"grouped_conv2d: need (C,H,W) and (C_out,C/g,k,k), got {x.shape}, {w.shape}")
    c_in, h, wd = x.shape
    c_out, cg, k, k2 = w.shape
    if k != k2:
        raise DimensionError(f"grouped_conv2d: kernel must be square, got {w.shape}")
    if groups < 1 or c_in % groups or c_out % groups:
        raise DimensionError(
            f"grouped_conv2d: {c_in} in / {c_out} out channels not divisible by groups={groups}")
    if cg != c_in // groups:
        raise DimensionError(
            f"grouped_conv2d: weights expect {cg} channels per group,"
            f" input has {c_in // groups}")
    if stride < 1:
        raise DimensionError(f"grouped_conv2d: stride must be >= 1, got {stride}")
    if h < k or wd < k:
        raise DimensionError(
            f"grouped_conv2d: spatial dims {h}x{wd} smaller than kernel {k}")

    oh, ow = _kernels._conv_out_dims(h, wd, k, stride)
    _count("grouped_conv2d", c_out * cg * k * k * oh * ow)
    out = _kernels.grouped_conv2d_forward(x.data, w.data, groups, stride)
    xd, wdata, xshape, wshape = x.data, w.data, x.shape, w.shape

    def back(g):
        g = np.ascontiguousarray(g)
        gx = _kernels.grouped_conv2d_grad_input(g, wdata, xshape, groups, stride)
        gw = _kernels.grouped_conv2d_grad_weights(g, xd, wshape, groups, stride)
        return gx, gw

    return _result(out, "grouped_conv2d", (x, w), back)


def conv1x1(x, w) -> Tensor:
    """1x1 convolution of a (C,H,W) map by a (C_out, C_in) matrix."""
    x, w = _as_tensor(x), _as_tensor(w)
    if x.data.ndim != 3 or w.data.ndim != 2 or w.shape[1] != x.shape[0]:
        raise DimensionError(f"conv1x1: shapes {w.shape} x {x.shape} incompatible")
    c, h, wd = x.shape
    flat = reshape(x, (c, h * wd))
    return reshape(matmul(w, flat), (w.shape[0], h, wd))


def avg_pool2d(x, window: int, stride: int | None = None) -> Tensor:
    """Mean over window x window patches; output dims floor((d-window)/stride)+1."""
    x = _as_tensor(x)
    if x.data.ndim != 3:
        raise DimensionError(f"avg_pool2d needs (C,H,W), got {x.shape}")
    if stride is None:
        stride = window
    c, h, w = x.shape
    if window < 1 or stride < 1:
        raise DimensionError(f"avg_pool2d: window={window}, stride={stride} invalid")
    if window > h or window > w:
        raise DimensionError(
            f"avg_pool2d: window {window} larger than input {h}x{w}")
    oh, ow = _kernels._conv_out_dims(h, w, window, stride)
    area = float(window * window)
    acc = np.zeros((c, oh, ow))
    for di in range(window):
        for dj in range(window):
            acc += x.data[:, di:di + oh * stride:stride, dj:dj + ow * stride:stride]
    acc /= area

    def back(g):
        gx = np.zeros((c, h, w))
        gpart = g / area
        for di in range(window):
            for dj in range(window):
                gx[:, di:di + oh * stride:stride, dj:dj + ow * stride:stride] += gpart
        return (gx,)

    return _result(acc, "avg_pool2d", (x,), back)


def global_avg_pool(x) -> Tensor:
    """Mean over the spatial dims of a (C, H, W) map; returns a C-vector."""
    x = _as_tensor(x)
    if x.data.ndim != 3:
        raise DimensionError(f"global_avg_pool needs (C,H,W), got {x.shape}")
    c, h, w = x.shape
    area = float(h * w)

    def back(g):
        return (np.repeat(g, h * w).reshape(c, h, w) / area,)

    return _result(x.data.mean(axis=(1, 2)), "global_avg_pool", (x,), back)


# ----------------------------------------------------------------- backward

def backward(root: Tensor) -> None:
    """Accumulate d(root)/dt into ``t.grad`` for every tensor that
    requires gradients. ``root`` must be scalar."""
    if root.data.size != 1:
        raise UsageError(f"backward needs a scalar root, got shape {root.shape}")

    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        if node._record is not None:
            for p in node._record.parents:
                if id(p) not in seen:
                    stack.append((p, False))

    grads: dict[int, np.ndarray] = {id(root): np.ones_like(root.data)}
    for node in reversed(order):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if node.requires_grad:
            node.grad = g if node.grad is None else node.grad + g
        rec = node._record
        if rec is None:
            continue
        parent_grads = rec.backward(g)
        for p, pg in zip(rec.parents, parent_grads):
            if pg is None or (not p.requires_grad and p._record is None):
                continue
            if pg.shape != p.data.shape:
                pg = pg.reshape(p.data.shape)
            if id(p) in grads:
                grads[id(p)] = grads[id(p)] + pg
            else:
                grads[id(p)] = pg
