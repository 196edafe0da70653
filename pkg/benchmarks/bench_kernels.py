"""Benchmark the numeric hot kernels under both backends.

Runs itself twice in subprocesses, once with ``CONVERGE_NUMBA=0`` (pure
numpy) and once with ``CONVERGE_NUMBA=1`` (compiled), and prints a speedup
table. Invoke from the repository root:

    python3 benchmarks/bench_kernels.py
"""
from __future__ import annotations

import argparse
import json
import math
import os
import subprocess
import sys
import time

import numpy as np


def bench(fn, *args, repeats: int = 5, warmup: int = 2) -> float:
    """Best-of-N wall time in seconds (warmup runs absorb JIT compilation)."""
    for _ in range(warmup):
        fn(*args)
    best = math.inf
    for _ in range(repeats):
        start = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - start)
    return best


def run_cases() -> dict:
    from converge_twin import kernels

    rng = np.random.default_rng(7)
    results = {"backend": kernels.backend()}

    # array-factor sum over a 64x64 panel, 500 evaluations
    phases = rng.uniform(0, 2 * math.pi, 4096)
    ex = rng.uniform(-0.2, 0.2, 4096)
    ey = rng.uniform(-0.2, 0.2, 4096)
    k = 2 * math.pi / 0.0107

    def af_case():
        for i in range(500):
            kernels.array_factor_sum(phases, ex, ey, 0.3 + 1e-4 * i, -0.2, k)

    results["array_factor_4096x500"] = bench(af_case)

    # ray casting against 200 boxes, 2000 rays
    mins = rng.uniform(0, 8, (200, 3))
    maxs = mins + rng.uniform(0.1, 2.0, (200, 3))
    rays = rng.uniform(-1, 1, (2000, 3))

    def ray_case():
        for d in rays:
            kernels.ray_box_distances(5.0, 3.0, 2.0, d[0], d[1], d[2], mins, maxs)

    results["ray_box_200x2000"] = bench(ray_case)

    # segment occlusion against 200 boxes, 2000 segments
    segs = rng.uniform(0, 8, (2000, 6))

    def seg_case():
        for s in segs:
            kernels.segment_box_mask(s[0], s[1], s[2], s[3], s[4], s[5], mins, maxs)

    results["segment_box_200x2000"] = bench(seg_case)

    # point containment, 100k points against 200 boxes
    pts = rng.uniform(0, 8, (100_000, 3))
    results["points_in_boxes_100k"] = bench(kernels.points_in_boxes, pts, mins, maxs)
    return results


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--json", action="store_true",
                        help="emit one backend's raw timings as JSON (internal)")
    args = parser.parse_args()

    if args.json:
        print(json.dumps(run_cases()))
        return 0

    timings = {}
    for flag in ("0", "1"):
        env = dict(os.environ, CONVERGE_NUMBA=flag)
        proc = subprocess.run(
            [sys.executable, os.path.abspath(__file__), "--json"],
            capture_output=True, text=True, env=env, check=True)
        out = json.loads(proc.stdout)
        timings[out.pop("backend")] = out

    cases = sorted(timings["numpy"])
    print(f"{'case':<28}{'numpy':>12}{'numba':>12}{'speedup':>10}")
    for case in cases:
        t_np = timings["numpy"][case]
        t_nb = timings["numba"][case]
        print(f"{case:<28}{t_np * 1e3:>10.2f}ms{t_nb * 1e3:>10.2f}ms"
              f"{t_np / t_nb:>9.1f}x")
    return 0


if __name__ == "__main__":
    sys.exit(main())
