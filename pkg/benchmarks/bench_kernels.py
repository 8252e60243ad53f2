#!/usr/bin/env python3
"""Benchmark the compiled pixel kernels against the numpy fallback.

Runs each kernel on realistic full-frame sizes and prints a table of
per-call times and speedups. Invoke from a checkout where the extension is
built (``pip install -e . --no-build-isolation``):

    python3 benchmarks/bench_kernels.py [--repeats 5]
"""

import argparse
import time

import numpy as np

from reraw import _kernels
from reraw._kernels import _numpy as np_impl

SIZES = [(1536, 2048), (3072, 4096), (4000, 6000)]


def timeit(fn, *args, repeats=5):
    best = float("inf")
    for _ in range(repeats):
        start = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - start)
    return best


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeats", type=int, default=5)
    args = parser.parse_args()

    if _kernels.BACKEND != "compiled":
        raise SystemExit("compiled extension not available; build it first")

    rng = np.random.default_rng(0)
    print(f"{'kernel':<26} {'size':<12} {'numpy':>10} {'compiled':>10} {'speedup':>8}")
    print("-" * 70)
    for h, w in SIZES:
        mosaic = rng.integers(0, 16384, (h, w)).astype(np.uint16)
        t_np = timeit(np_impl.pack_normalize_u16, mosaic, 512.0, 16383.0, repeats=args.repeats)
        t_cy = timeit(
            _kernels._compiled.pack_normalize_u16, mosaic, 512.0, 16383.0, repeats=args.repeats
        )
        print(f"{'pack_normalize_u16':<26} {f'{h}x{w}':<12} {t_np*1e3:>8.1f}ms {t_cy*1e3:>8.1f}ms {t_np/t_cy:>7.2f}x")

        packed = rng.random((h // 2, w // 2, 4)).astype(np.float32)
        t_np = timeit(np_impl.unpack_denormalize_u16, packed, 512.0, 16383.0, repeats=args.repeats)
        t_cy = timeit(
            _kernels._compiled.unpack_denormalize_u16, packed, 512.0, 16383.0, repeats=args.repeats
        )
        print(f"{'unpack_denormalize_u16':<26} {f'{h}x{w}':<12} {t_np*1e3:>8.1f}ms {t_cy*1e3:>8.1f}ms {t_np/t_cy:>7.2f}x")

        img = rng.random((h, w)).astype(np.float32)
        t_np = timeit(np_impl.clamped_power, img, 0.4545, repeats=args.repeats)
        print(f"{'clamped_power (numpy)':<26} {f'{h}x{w}':<12} {t_np*1e3:>8.1f}ms {'-':>10} {'-':>8}")


if __name__ == "__main__":
    main()
