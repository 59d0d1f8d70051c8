"""Benchmark the compiled Canny kernels against the pure-Python fallback.

Usage: python3 benchmarks/bench_canny.py [--sizes 64,128,256] [--repeats 20]

Both backends are imported directly (bypassing the import-time selection) so
they can be timed side by side in one process, and their outputs are checked
for exact agreement on every input. The two hot stages are timed separately:
non-maximum suppression and double-threshold hysteresis.
"""
from __future__ import annotations

import argparse
import time

import numpy as np
from scipy import ndimage

from iir_edit.kernels import canny_py

try:
    from iir_edit.kernels import _canny_cy
except ImportError:
    _canny_cy = None


def _gradients(size: int, seed: int):
    rng = np.random.default_rng(seed)
    img = np.full((size, size), 120.0)
    img += rng.normal(0.0, 3.0, img.shape)
    n = size // 8
    for _ in range(6):
        r0, c0 = rng.integers(0, size - n, 2)
        img[r0:r0 + n, c0:c0 + n] += rng.uniform(60, 110)
    img = np.clip(img, 0.0, 255.0)
    gx = ndimage.sobel(img, axis=1, mode="nearest")
    gy = ndimage.sobel(img, axis=0, mode="nearest")
    mag = np.hypot(gx, gy)
    return mag, gx, gy


def _best(fn, args, repeats):
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def main() -> None:
    ap = argparse.ArgumentParser()
    ap.add_argument("--sizes", default="64,128,256")
    ap.add_argument("--repeats", type=int, default=20)
    ap.add_argument("--low", type=float, default=30.0)
    ap.add_argument("--high", type=float, default=45.0)
    args = ap.parse_args()

    if _canny_cy is None:
        print("compiled backend not available; only timing the fallback")

    print(f"{'stage':<12} {'size':>6} {'python (ms)':>12} "
          f"{'cython (ms)':>12} {'speedup':>8}")
    for size in (int(s) for s in args.sizes.split(",")):
        mag, gx, gy = _gradients(size, seed=size)
        stages = [
            ("nms", (mag, gx, gy), canny_py.nonmax_suppress,
             _canny_cy.nonmax_suppress if _canny_cy else None),
            ("hysteresis", (mag, args.low, args.high), canny_py.hysteresis,
             _canny_cy.hysteresis if _canny_cy else None),
        ]
        for name, call_args, py_fn, cy_fn in stages:
            t_py = _best(py_fn, call_args, args.repeats)
            if cy_fn is None:
                print(f"{name:<12} {size:>6} {t_py * 1e3:>12.3f} "
                      f"{'-':>12} {'-':>8}")
                continue
            t_cy = _best(cy_fn, call_args, args.repeats)
            assert np.array_equal(py_fn(*call_args), cy_fn(*call_args)), \
                f"backend mismatch: {name} at size {size}"
            print(f"{name:<12} {size:>6} {t_py * 1e3:>12.3f} "
                  f"{t_cy * 1e3:>12.3f} {t_py / t_cy:>7.2f}x")


if __name__ == "__main__":
    main()
