#!/usr/bin/env python3
"""Benchmark the compiled kernels against the pure fallbacks.

Run from the repository root after building the extension in place:

    python setup.py build_ext --inplace
    python benchmarks/bench_kernels.py
"""

from __future__ import annotations

import sys
import time
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from crowdskills._kernels import _pure  # noqa: E402

try:
    from crowdskills._kernels import _core
except ImportError:
    _core = None


def timeit(fn, repeats: int = 3) -> float:
    best = float("inf")
    for _ in range(repeats):
        start = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - start)
    return best


def random_walk(rng: np.random.Generator, n: int) -> np.ndarray:
    steps = rng.normal(0.0, 0.05, size=(n, 2))
    return np.ascontiguousarray(np.cumsum(steps, axis=0))


def bench_dtw(rng: np.random.Generator) -> list[tuple[str, float, float | None]]:
    rows = []
    for n in (200, 500, 1000):
        a = random_walk(rng, n)
        b = random_walk(rng, n)
        pure_t = timeit(lambda: _pure.dtw_distance(a, b))
        core_t = timeit(lambda: _core.dtw_distance(a, b)) if _core else None
        if _core:
            assert _core.dtw_distance(a, b) == _pure.dtw_distance(a, b), "backend mismatch"
        rows.append((f"dtw {n}x{n}", pure_t, core_t))
    return rows


def bench_assign(rng: np.random.Generator) -> list[tuple[str, float, float | None]]:
    rows = []
    for n, k in ((2000, 64), (10000, 64), (20000, 128)):
        x = np.ascontiguousarray(rng.normal(size=(n, 40)))
        c = np.ascontiguousarray(rng.normal(size=(k, 40)))
        pure_t = timeit(lambda: _pure.assign_points(x, c))
        core_t = timeit(lambda: _core.assign_points(x, c)) if _core else None
        if _core:
            labels_core, _ = _core.assign_points(x, c)
            labels_pure, _ = _pure.assign_points(x, c)
            assert (labels_core == labels_pure).all(), "backend mismatch"
        rows.append((f"assign {n}pts k={k}", pure_t, core_t))
    return rows


def main() -> None:
    rng = np.random.default_rng(0)
    if _core is None:
        print("compiled kernels not built; showing pure timings only")
    rows = bench_dtw(rng) + bench_assign(rng)
    width = max(len(r[0]) for r in rows)
    print(f"{'kernel'.ljust(width)}  {'pure':>10}  {'compiled':>10}  {'speedup':>8}")
    for name, pure_t, core_t in rows:
        if core_t is None:
            print(f"{name.ljust(width)}  {pure_t * 1e3:9.2f}ms  {'-':>10}  {'-':>8}")
        else:
            print(
                f"{name.ljust(width)}  {pure_t * 1e3:9.2f}ms  {core_t * 1e3:9.2f}ms  {pure_t / core_t:7.1f}x"
            )


if __name__ == "__main__":
    main()
