"""Time the hot kernels on both backends and print a JSON comparison.

The package selects its backend through OTIDS_BACKEND; this script
sidesteps the dispatch and imports both implementations directly so one
process can measure the pair on identical inputs.  Numba timings exclude
the first call (JIT compilation).

Usage: python3 benchmarks/bench_accel.py [--rows N] [--repeats R]
"""

import argparse
import json
import sys
import time

import numpy as np

from otids.accel import _numpy

try:
    from otids.accel import _numba
except ImportError:
    _numba = None


def _best_of(fn, repeats):
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def bench_split_scan(impl, rows, repeats):
    rng = np.random.default_rng(1)
    values = np.sort(rng.normal(size=rows))
    labels = rng.integers(0, 3, size=rows).astype(np.int64)
    return _best_of(lambda: impl.split_scan(values, labels, 3, 1), repeats)


def bench_tree_apply(impl, rows, repeats):
    from otids.forest import ForestConfig, train_forest

    rng = np.random.default_rng(2)
    X = rng.normal(size=(4000, 8))
    y = (X[:, 0] + X[:, 3] > 0).astype(np.int64)
    tree = train_forest(X, y, ForestConfig(n_trees=1, seed=3)).trees[0]
    Xq = rng.normal(size=(rows, 8))
    out = np.empty(rows, dtype=np.int64)
    return _best_of(
        lambda: impl.tree_apply(tree.feature, tree.threshold, tree.left,
                                tree.right, Xq, out),
        repeats,
    )


def bench_smo_solve(impl, rows, repeats):
    n = min(600, rows)
    rng = np.random.default_rng(3)
    X = rng.normal(size=(n, 4))
    sq = (X * X).sum(axis=1)
    K = np.exp(-0.25 * (sq[:, None] + sq[None, :] - 2.0 * X @ X.T))
    y = np.where(X[:, 0] > 0, 1.0, -1.0)
    p = -np.ones(n)
    box = np.ones(n)
    empty = np.zeros(0)

    def run():
        alpha = np.zeros(n)
        grad = p.copy()
        impl.smo_solve(K, y, p, box, alpha, grad, 1e-3, 2000, empty)

    return _best_of(run, repeats)


BENCHES = {
    "split_scan": bench_split_scan,
    "tree_apply": bench_tree_apply,
    "smo_solve": bench_smo_solve,
}


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--rows", type=int, default=200_000,
                    help="input size for the row-parallel kernels")
    ap.add_argument("--repeats", type=int, default=5,
                    help="take the best of this many timed calls")
    args = ap.parse_args(argv)

    doc = {"rows": args.rows, "repeats": args.repeats,
           "numba_available": _numba is not None, "kernels": {}}
    for name, bench in BENCHES.items():
        entry = {"numpy_s": bench(_numpy, args.rows, args.repeats)}
        if _numba is not None:
            bench(_numba, args.rows, 1)  # compile outside the timer
            entry["numba_s"] = bench(_numba, args.rows, args.repeats)
            entry["speedup"] = entry["numpy_s"] / entry["numba_s"]
        doc["kernels"][name] = entry
    json.dump(doc, sys.stdout, indent=2)
    print()
    return 0


if __name__ == "__main__":
    sys.exit(main())
