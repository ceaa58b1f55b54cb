"""Timing comparison of the compiled stepping loop against the pure-Python
fallback on the built-in problems.

Run as ``python benchmarks/compare_engines.py [--quick]``.  Both engines
produce the same trajectories; the table reports wall time per run and the
worst trajectory difference as a consistency check.
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from bdf2dc import (
    compiled_engine_available,
    example1,
    example2,
    example3,
    graded_mesh,
    integrate,
    uniform_mesh,
)


def cases(quick: bool):
    T1 = 10.0 * np.pi
    scale = 4 if quick else 1
    yield ("oscillatory scalar, graded mesh, full cascade",
           example1(), graded_mesh(T1, 20480 // scale, 2.0), "dc34")
    yield ("stiff 3-dim system, graded mesh, third-order chain",
           example2(), graded_mesh(5.0, 200000 // scale, 2.0), "dc3")
    yield ("bistable scalar, uniform mesh, one-shot fourth order",
           example3(0.5), uniform_mesh(100.0, 100000 // scale), "dc4p")


def time_run(problem, mesh, chain, engine):
    best = float("inf")
    hist = None
    for _ in range(2):
        t0 = time.perf_counter()
        hist = integrate(problem, mesh, chain, "exact", engine=engine)
        best = min(best, time.perf_counter() - t0)
    return best, hist


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--quick", action="store_true", help="smaller meshes")
    args = parser.parse_args()

    if not compiled_engine_available():
        print("compiled engine not available; nothing to compare")
        return

    print(f"{'case':55s} {'N':>8s} {'pure [s]':>9s} {'fast [s]':>9s} "
          f"{'speedup':>8s} {'max diff':>9s}")
    for label, problem, mesh, chain in cases(args.quick):
        t_pure, h_pure = time_run(problem, mesh, chain, "pure")
        t_fast, h_fast = time_run(problem, mesh, chain, "compiled")
        diff = max(
            float(np.max(np.abs(h_pure[tag].values - h_fast[tag].values)))
            for tag in h_pure
        )
        print(f"{label:55s} {mesh.count:8d} {t_pure:9.3f} {t_fast:9.3f} "
              f"{t_pure / t_fast:7.1f}x {diff:9.2e}")


if __name__ == "__main__":
    main()
