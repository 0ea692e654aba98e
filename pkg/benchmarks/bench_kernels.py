#!/usr/bin/env python3
"""Compare the jitted and pure-numpy evaluation kernels.

Run directly: ``python benchmarks/bench_kernels.py [--n 2000] [--repeats 5]``.
Set FN_NO_NUMBA=1 to confirm the fallback path is the one the library binds.
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from finnet import kernels


def bench(fn, *args, repeats: int = 5, warmup: int = 1) -> float:
    for _ in range(warmup):
        fn(*args)
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn(*args)
        times.append(time.perf_counter() - t0)
    return min(times)


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--n", type=int, default=2000,
                        help="boxes per side of the pairwise matrix")
    parser.add_argument("--repeats", type=int, default=5)
    args = parser.parse_args()

    rng = np.random.default_rng(0)
    frame = 4000.0
    def boxes(n):
        w = rng.uniform(1, frame / 2, n)
        h = rng.uniform(1, frame / 2, n)
        x = rng.uniform(0, frame - w)
        y = rng.uniform(0, frame - h)
        return np.stack([x, y, w, h], axis=1)

    a, b = boxes(args.n), boxes(args.n)
    scores = rng.uniform(size=args.n)
    order = np.argsort(-scores).astype(np.int64)

    print(f"pairwise IoU: {args.n} x {args.n} boxes")
    t_numpy = bench(kernels.iou_matrix_numpy, a, b, repeats=args.repeats)
    print(f"  numpy broadcast : {t_numpy * 1e3:9.2f} ms")
    if kernels.HAVE_NUMBA:
        t_jit = bench(kernels.iou_matrix_jit, a, b, repeats=args.repeats)
        print(f"  numba njit      : {t_jit * 1e3:9.2f} ms   "
              f"({t_numpy / t_jit:.1f}x vs numpy)")
    else:
        print("  numba njit      : unavailable (FN_NO_NUMBA set or numba missing)")

    iou = kernels.iou_matrix_numpy(a, b)
    print(f"greedy matching: {args.n} predictions over {args.n} truths")
    t_numpy = bench(kernels.greedy_match_numpy, iou, order, 0.5,
                    repeats=args.repeats)
    print(f"  python loop     : {t_numpy * 1e3:9.2f} ms")
    if kernels.HAVE_NUMBA:
        t_jit = bench(kernels.greedy_match_jit, iou, order, 0.5,
                      repeats=args.repeats)
        print(f"  numba njit      : {t_jit * 1e3:9.2f} ms   "
              f"({t_numpy / t_jit:.1f}x vs python)")
        agree = np.array_equal(
            kernels.greedy_match_numpy(iou, order, 0.5),
            kernels.greedy_match_jit(iou, order, 0.5))
        print(f"paths agree: {agree}")


if __name__ == "__main__":
    main()
