"""Compare the compiled and pure-numpy closure tracers on node classification.

    python benchmarks/bench_tracer.py [--grids 32,64] [--repeat 3]

Both backends must produce identical node tags; the script exits non-zero
otherwise.
"""

from __future__ import annotations

import argparse
import math
import sys
import time

import numpy as np

from islandap import tracer
from islandap.field import example1_case, example2_case
from islandap.grid import build_grid, classify_nodes

CASES = {
    "example1(c)": (lambda: example1_case(0.5, 0.85, math.pi / 4, 1e-6), 1),
    "example2": (lambda: example2_case(0.1, 1e-6), 2),
}


def timed(fn, repeat):
    best = math.inf
    out = None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--grids", default="32,64")
    ap.add_argument("--repeat", type=int, default=1)
    args = ap.parse_args(argv)
    if tracer._core is None:
        print("compiled extension not built; nothing to compare", file=sys.stderr)
        return 1
    core = tracer._core
    print(f"{'case':<12} {'grid':>8} {'nodes':>7} {'python_s':>9} {'compiled_s':>10} {'speedup':>8}")
    mismatch = False
    for name, (make, aspect) in CASES.items():
        case = make()
        for n in (int(v) for v in args.grids.split(",")):
            grid = build_grid(*case.domain, n, n // aspect)
            run = lambda: classify_nodes(grid, case).tags  # noqa: E731
            tracer._core = None
            t_py, tags_py = timed(run, args.repeat)
            tracer._core = core
            t_c, tags_c = timed(run, args.repeat)
            same = np.array_equal(tags_py, tags_c)
            mismatch |= not same
            print(
                f"{name:<12} {grid.I:>4}x{grid.J:<3} {grid.n_nodes:>7} {t_py:>9.3f} {t_c:>10.3f} "
                f"{t_py / t_c:>7.1f}x{'' if same else '  TAGS DIFFER'}"
            )
    return 1 if mismatch else 0


if __name__ == "__main__":
    sys.exit(main())
