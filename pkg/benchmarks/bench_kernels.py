#!/usr/bin/env python3
"""Benchmark the numba kernels against their pure-numpy fallbacks.

Two regimes matter. The package's own hot path is thousands of tiny
convolutions (finite-difference gradient checks re-run the forward per
parameter), where the JIT loops beat the einsum fallback's dispatch
overhead. At bulk sizes the einsum path rides optimized contractions and
wins the convolutions back, while the pairwise-distance kernel stays
heavily in numba's favor at every size.

The numba path is warmed before timing so JIT compilation is excluded.

Usage: python benchmarks/bench_kernels.py [--repeats 5]
"""

import argparse
import time

import numpy as np

from radixnet._kernels import implementations


def per_call_seconds(fn, inner: int, repeats: int) -> float:
    best = float("inf")
    for _ in range(repeats):
        start = time.perf_counter()
        for _ in range(inner):
            fn()
        best = min(best, (time.perf_counter() - start) / inner)
    return best


def build_cases(rng):
    # desk-scale shapes taken from the default and tiny model configs
    stem_small = (rng.normal(size=(4, 16, 16)), rng.normal(size=(8, 4, 2, 2)), 1, 2)
    local_small = (rng.normal(size=(8, 8, 8)), rng.normal(size=(16, 4, 1, 1)), 2, 1)
    local_default = (rng.normal(size=(32, 16, 16)),
                     rng.normal(size=(64, 8, 1, 1)), 4, 1)
    # bulk shapes well beyond what the package runs
    bulk = (rng.normal(size=(64, 64, 64)), rng.normal(size=(64, 16, 3, 3)), 4, 1)
    gout = rng.normal(size=(64, 62, 62))
    pts_a = rng.normal(size=(2000, 2))
    pts_b = rng.normal(size=(2000, 2))

    def conv(args):
        return lambda impl: impl["grouped_conv2d_forward"](*args)

    return [
        ("conv fwd 4x16x16 k2 s2", conv(stem_small), 500),
        ("conv fwd 8x8x8 k1 g2", conv(local_small), 500),
        ("conv fwd 32x16x16 k1 g4", conv(local_default), 200),
        ("conv fwd 64x64x64 k3 g4", conv(bulk), 3),
        ("conv grad-in 64x64x64",
         lambda impl: impl["grouped_conv2d_grad_input"](
             gout, bulk[1], (64, 64, 64), 4, 1), 3),
        ("conv grad-w 64x64x64",
         lambda impl: impl["grouped_conv2d_grad_weights"](
             gout, bulk[0], bulk[1].shape, 4, 1), 3),
        ("min dists 2000 x 2000",
         lambda impl: impl["directed_min_dists"](pts_a, pts_b), 3),
    ]


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeats", type=int, default=5)
    args = parser.parse_args()

    numpy_impls = implementations("numpy")
    try:
        numba_impls = implementations("numba")
    except Exception as exc:
        print(f"numba unavailable ({exc}); nothing to compare")
        return

    rng = np.random.default_rng(0)
    cases = build_cases(rng)

    print(f"{'case':<26} {'numpy (us)':>12} {'numba (us)':>12} {'speedup':>9}")
    print("-" * 62)
    for label, call, inner in cases:
        call(numba_impls)  # warm the JIT
        t_np = per_call_seconds(lambda: call(numpy_impls), inner, args.repeats)
        t_nb = per_call_seconds(lambda: call(numba_impls), inner, args.repeats)
        print(f"{label:<26} {t_np * 1e6:>12.1f} {t_nb * 1e6:>12.1f}"
              f" {t_np / t_nb:>8.2f}x")

    # the two paths must agree, not just race
    x = rng.normal(size=(16, 20, 20))
    w = rng.normal(size=(16, 4, 3, 3))
    d = np.abs(numpy_impls["grouped_conv2d_forward"](x, w, 4, 1)
               - numba_impls["grouped_conv2d_forward"](x, w, 4, 1)).max()
    print(f"\nmax |numpy - numba| on a conv spot check: {d:.3e}")


if __name__ == "__main__":
    main()
