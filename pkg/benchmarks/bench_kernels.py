#!/usr/bin/env python3
"""Compare the NumPy and compiled kernel backends on model-sized workloads.

Run: python3 benchmarks/bench_kernels.py [--repeats N]

Shapes mirror the real models: same-padded K=3/K=5 convolutions over
25-sample, 3..12-channel windows, plus the integer twins used by the
frozen inference path.
"""

import argparse
import time

import numpy as np

from gaitkit import _kernels


def _time(fn, repeats):
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--repeats", type=int, default=20)
    ap.add_argument("--batch", type=int, default=64)
    args = ap.parse_args()

    backends = {n: _kernels.get_backend(n) for n in _kernels.available_backends()}
    print(f"backends: {', '.join(backends)} (default: {_kernels.NAME})")

    rng = np.random.default_rng(0)
    B, L = args.batch, 25
    cases = []
    for C, O, K in [(3, 3, 5), (6, 6, 3), (12, 12, 3)]:
        x = rng.normal(size=(B, C, L))
        w = rng.normal(size=(O, C, K))
        gy = rng.normal(size=(B, O, L))
        qx = rng.integers(-127, 128, size=(B, C, L))
        qw = rng.integers(-127, 128, size=(O, C, K))
        wd = rng.normal(size=(C, K))
        qwd = rng.integers(-127, 128, size=(C, K))
        cases += [
            (f"conv1d_fwd C{C} O{O} K{K}", lambda be, x=x, w=w: be.conv1d_fwd(x, w)),
            (f"conv1d_bwd C{C} O{O} K{K}", lambda be, x=x, w=w, gy=gy: be.conv1d_bwd(x, w, gy)),
            (f"depthwise_fwd C{C} K{K}", lambda be, x=x, wd=wd: be.depthwise_fwd(x, wd)),
            (f"int_conv1d C{C} O{O} K{K}", lambda be, qx=qx, qw=qw: be.int_conv1d(qx, qw)),
            (f"int_depthwise C{C} K{K}", lambda be, qx=qx, qwd=qwd: be.int_depthwise(qx, qwd)),
        ]

    header = f"{'kernel':32s}" + "".join(f"{n:>12s}" for n in backends)
    if len(backends) > 1:
        header += f"{'speedup':>10s}"
    print(header)
    for name, call in cases:
        times = [_time(lambda be=be: call(be), args.repeats) for be in backends.values()]
        row = f"{name:32s}" + "".join(f"{t * 1e6:10.1f}us" for t in times)
        if len(times) > 1:
            row += f"{times[0] / times[1]:9.2f}x"
        print(row)


if __name__ == "__main__":
    main()
