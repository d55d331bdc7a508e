"""Compare the compiled and pure-Python fast-marching kernels.

Usage::

    python3 benchmarks/bench_kernels.py [--repeat 3] [--json results.json]

Each case seeds the march from the zero set of a circle (sphere in 3-D) and
marches the full grid.  Both backends must agree bit for bit; the table
reports the best-of-``repeat`` wall time and the speedup.
"""

import argparse
import importlib.util
import json
import sys
import time

import numpy as np

from eigenshape import kernels
from eigenshape.grid_geometry import Grid, _interface_seeds, disk_phi

CASES = [((64, 64), 1 / 63), ((128, 128), 1 / 127), ((256, 256), 1 / 255), ((32, 32, 32), 1 / 31)]


def seeds(dims, h):
    g = Grid(dims, h, (0.0,) * len(dims))
    phi = disk_phi(g, (0.5,) * len(dims), 0.3)
    s = _interface_seeds(phi, h)
    return s, np.isfinite(s)


def best_time(fn, repeat):
    best = np.inf
    out = None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--json", help="write results to this file")
    ap.add_argument("--skip-python-above", type=int, default=300_000,
                    help="skip the fallback on grids with more nodes than this")
    args = ap.parse_args(argv)
    if importlib.util.find_spec("eigenshape._fmm") is None:
        print("compiled extension not built; run `pip install -e . --no-build-isolation`", file=sys.stderr)
        return 1
    rows = []
    print(f"{'grid':>12} {'nodes':>8} {'compiled s':>11} {'python s':>10} {'speedup':>8}  identical")
    for dims, h in CASES:
        dist, known = seeds(dims, h)
        tc, dc = best_time(lambda: kernels.fast_march(dist, known, h, backend="compiled"), args.repeat)
        n = int(np.prod(dims))
        if n <= args.skip_python_above:
            tp, dp = best_time(lambda: kernels.fast_march(dist, known, h, backend="python"), 1)
            same = bool(np.array_equal(dc, dp))
        else:
            tp, same = float("nan"), None
        rows.append({"dims": list(dims), "nodes": n, "compiled_s": tc, "python_s": tp,
                     "speedup": tp / tc, "identical": same})
        print(f"{'x'.join(map(str, dims)):>12} {n:>8} {tc:>11.4f} {tp:>10.3f} {tp / tc:>8.1f}  {same}")
    if args.json:
        with open(args.json, "w") as f:
            json.dump(rows, f, indent=2)
    return 0 if all(r["identical"] is not False for r in rows) else 1


if __name__ == "__main__":
    sys.exit(main())
