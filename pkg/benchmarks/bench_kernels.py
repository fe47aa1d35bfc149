"""Compiled vs numpy kernel timings.

    python3 benchmarks/bench_kernels.py [--size 512] [--frames 40] [--channels 4] [--repeat 3]

Reports the best of ``--repeat`` runs for the raw moment kernels and for the
full four-estimator maps, per available backend.
"""

import argparse
import time

import numpy as np

from specklevar import backend
from specklevar.mcv import MULTIVARIATE
from specklevar.scan import EstimationMode, compute_maps
from specklevar.stack import SpeckleStack


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        start = time.perf_counter()
        fn()
        times.append(time.perf_counter() - start)
    return min(times)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--size", type=int, default=512)
    ap.add_argument("--frames", type=int, default=40)
    ap.add_argument("--channels", type=int, default=4)
    ap.add_argument("--window", type=int, default=5)
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--threads", type=int, default=None)
    args = ap.parse_args()

    rng = np.random.default_rng(0)
    shape = (args.frames, args.channels, args.size, args.size)
    stack = SpeckleStack(rng.exponential(size=shape).astype(np.float32))
    data = np.ascontiguousarray(stack.data)
    frame = np.ascontiguousarray(stack.data[0], dtype=np.float64)
    half = args.window // 2
    print(f"stack {shape} float32, window {args.window}")

    rows = []
    for name in backend.available():
        k = backend.get(name)
        s1, s2 = k.integral_images(frame)
        shift = np.zeros(args.channels)
        cases = {
            "temporal_moments": lambda: k.temporal_moments(data, 0, args.size),
            "integral_images": lambda: k.integral_images(frame),
            "window_moments": lambda: k.window_moments(s1, s2, shift, half, 0, args.size),
            "maps temporal x4": lambda: compute_maps(stack, MULTIVARIATE, threads=args.threads,
                                                      kernels=k),
            "maps spatial x4": lambda: compute_maps(stack, MULTIVARIATE,
                                                     EstimationMode.spatial(args.window),
                                                     threads=args.threads, kernels=k),
        }
        for case, fn in cases.items():
            rows.append((case, name, best_of(fn, args.repeat)))

    by_case = {}
    for case, name, t in rows:
        by_case.setdefault(case, {})[name] = t
    print(f"{'case':<20}" + "".join(f"{n:>12}" for n in backend.available()) + f"{'speedup':>10}")
    for case, times in by_case.items():
        line = f"{case:<20}" + "".join(f"{times[n]:>11.3f}s" for n in backend.available())
        if "cython" in times:
            line += f"{times['python'] / times['cython']:>9.1f}x"
        print(line)


if __name__ == "__main__":
    main()
