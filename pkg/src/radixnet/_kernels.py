"""Hot numeric kernels with numba and pure-numpy twins.

The backend is picked once at import from the ``RADIXNET_BACKEND``
environment variable: ``numba`` (JIT loops), ``numpy`` (vectorized
fallback), or ``auto`` / unset (numba when importable, numpy otherwise).
Both implementations are importable side by side so tests and
``benchmarks/bench_kernels.py`` can compare them directly.

All kernels are pure functions of contiguous float64 arrays.
"""

from __future__ import annotations

import os
import warnings

import numpy as np

from .errors import ConfigurationError


def _conv_out_dims(h: int, w: int, k: int, stride: int) -> tuple[int, int]:
    return (h - k) // stride + 1, (w - k) // stride + 1


# ---------------------------------------------------------------- numpy path

def _patches(x: np.ndarray, k: int, stride: int) -> np.ndarray:
    """Sliding k x k windows of a (C, H, W) array as a strided view."""
    c, h, w = x.shape
    oh, ow = _conv_out_dims(h, w, k, stride)
    s0, s1, s2 = x.strides
    return np.lib.stride_tricks.as_strided(
        x, (c, oh, ow, k, k), (s0, s1 * stride, s2 * stride, s1, s2),
        writeable=False)


def grouped_conv2d_forward_numpy(x, w, groups, stride):
    c_in, h, wd = x.shape
    c_out, cg, k, _ = w.shape
    oh, ow = _conv_out_dims(h, wd, k, stride)
    out = np.empty((c_out, oh, ow))
    og = c_out // groups
    pat = _patches(x, k, stride)
    for g in range(groups):
        out[g * og:(g + 1) * og] = np.einsum(
            "chwij,ocij->ohw", pat[g * cg:(g + 1) * cg],
            w[g * og:(g + 1) * og], optimize=True)
    return out


def grouped_conv2d_grad_input_numpy(gout, w, x_shape, groups, stride):
    c_in, h, wd = x_shape
    c_out, cg, k, _ = w.shape
    oh, ow = gout.shape[1:]
    og = c_out // groups
    gx = np.zeros(x_shape)
    for g in range(groups):
        go = gout[g * og:(g + 1) * og]
        wg = w[g * og:(g + 1) * og]
        sub = gx[g * cg:(g + 1) * cg]
        for di in range(k):
            for dj in range(k):
                sub[:, di:di + oh * stride:stride, dj:dj + ow * stride:stride] += \
                    np.einsum("ohw,oc->chw", go, wg[:, :, di, dj], optimize=True)
    return gx


def grouped_conv2d_grad_weights_numpy(gout, x, w_shape, groups, stride):
    c_out, cg, k, _ = w_shape
    oh, ow = gout.shape[1:]
    og = c_out // groups
    gw = np.empty(w_shape)
    for g in range(groups):
        go = gout[g * og:(g + 1) * og]
        xg = x[g * cg:(g + 1) * cg]
        for di in range(k):
            for dj in range(k):
                gw[g * og:(g + 1) * og, :, di, dj] = np.einsum(
                    "ohw,chw->oc", go,
                    xg[:, di:di + oh * stride:stride, dj:dj + ow * stride:stride],
                    optimize=True)
    return gw


def directed_min_dists_numpy(a, b):
    """For each point of a (n,2), distance to its nearest point of b (m,2)."""
    diff = a[:, None, :] - b[None, :, :]
    return np.sqrt((diff * diff).sum(axis=2).min(axis=1))


_NUMPY_IMPLS = {
    "grouped_conv2d_forward": grouped_conv2d_forward_numpy,
    "grouped_conv2d_grad_input": grouped_conv2d_grad_input_numpy,
    "grouped_conv2d_grad_weights": grouped_conv2d_grad_weights_numpy,
    "directed_min_dists": directed_min_dists_numpy,
}


# ---------------------------------------------------------------- numba path

def _build_numba_impls():
    from numba import njit

    # loop order: kernel taps outermost, spatial rows/cols innermost, so
    # the inner j loop runs over contiguous memory and vectorizes
    @njit(cache=True)
    def _conv_fwd(x, w, groups, stride, out):
        c_out, cg, k, _ = w.shape
        og = c_out // groups
        oh, ow = out.shape[1], out.shape[2]
        out[:] = 0.0
        for o in range(c_out):
            g = o // og
            for c in range(cg):
                ci = g * cg + c
                for di in range(k):
                    for dj in range(k):
                        wv = w[o, c, di, dj]
                        for i in range(oh):
                            xi = i * stride + di
                            for j in range(ow):
                                out[o, i, j] += wv * x[ci, xi, j * stride + dj]
        return out

    @njit(cache=True)
    def _conv_gin(gout, w, groups, stride, gx):
        c_out, cg, k, _ = w.shape
        og = c_out // groups
        oh, ow = gout.shape[1], gout.shape[2]
        for o in range(c_out):
            g = o // og
            for c in range(cg):
                ci = g * cg + c
                for di in range(k):
                    for dj in range(k):
                        wv = w[o, c, di, dj]
                        for i in range(oh):
                            xi = i * stride + di
                            for j in range(ow):
                                gx[ci, xi, j * stride + dj] += wv * gout[o, i, j]
        return gx

    @njit(cache=True)
    def _conv_gw(gout, x, groups, stride, gw):
        c_out, cg, k, _ = gw.shape
        og = c_out // groups
        oh, ow = gout.shape[1], gout.shape[2]
        for o in range(c_out):
            g = o // og
            for c in range(cg):
                ci = g * cg + c
                for di in range(k):
                    for dj in range(k):
                        acc = 0.0
                        for i in range(oh):
                            xi = i * stride + di
                            for j in range(ow):
                                acc += gout[o, i, j] * x[ci, xi, j * stride + dj]
                        gw[o, c, di, dj] = acc
        return gw

    @njit(cache=True)
    def _min_dists(a, b, out):
        for i in range(a.shape[0]):
            best = np.inf
            for j in range(b.shape[0]):
                dx = a[i, 0] - b[j, 0]
                dy = a[i, 1] - b[j, 1]
                d = dx * dx + dy * dy
                if d < best:
                    best = d
            out[i] = np.sqrt(best)
        return out

    def forward(x, w, groups, stride):
        c_in, h, wd = x.shape
        k = w.shape[2]
        oh, ow = _conv_out_dims(h, wd, k, stride)
        out = np.empty((w.shape[0], oh, ow))
        return _conv_fwd(np.ascontiguousarray(x), np.ascontiguousarray(w),
                         groups, stride, out)

    def grad_input(gout, w, x_shape, groups, stride):
        gx = np.zeros(x_shape)
        return _conv_gin(np.ascontiguousarray(gout), np.ascontiguousarray(w),
                         groups, stride, gx)

    def grad_weights(gout, x, w_shape, groups, stride):
        gw = np.empty(w_shape)
        return _conv_gw(np.ascontiguousarray(gout), np.ascontiguousarray(x),
                        groups, stride, gw)

    def min_dists(a, b):
        out = np.empty(a.shape[0])
        return _min_dists(np.ascontiguousarray(a), np.ascontiguousarray(b), out)

    return {
        "grouped_conv2d_forward": forward,
        "grouped_conv2d_grad_input": grad_input,
        "grouped_conv2d_grad_weights": grad_weights,
        "directed_min_dists": min_dists,
    }


def _resolve_backend() -> tuple[str, dict]:
    choice = os.environ.get("RADIXNET_BACKEND", "auto").strip().lower() or "auto"
    if choice not in ("auto", "numba", "numpy"):
        raise ConfigurationError(
            f"RADIXNET_BACKEND must be auto, numba or numpy, got {choice!r}")
    if choice == "numpy":
        return "numpy", _NUMPY_IMPLS
    try:
        impls = _build_numba_impls()
        return "numba", impls
    except ImportError:
        if choice == "numba":
            raise ConfigurationError(
                "RADIXNET_BACKEND=numba but numba is not importable")
        warnings.warn("numba unavailable, falling back to the numpy kernels",
                      RuntimeWarning, stacklevel=2)
        return "numpy", _NUMPY_IMPLS


BACKEND, _ACTIVE = _resolve_backend()

grouped_conv2d_forward = _ACTIVE["grouped_conv2d_forward"]
grouped_conv2d_grad_input = _ACTIVE["grouped_conv2d_grad_input"]
grouped_conv2d_grad_weights = _ACTIVE["grouped_conv2d_grad_weights"]
directed_min_dists = _ACTIVE["directed_min_dists"]


def implementations(name: str) -> dict:
    """Kernel table for an explicit backend name (for tests and benchmarks)."""
    if name == "numpy":
        return dict(_NUMPY_IMPLS)
    if name == "numba":
        return _build_numba_impls()
    raise ConfigurationError(f"unknown backend {name!r}")
