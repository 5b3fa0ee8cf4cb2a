"""Time the compiled and numpy split/predict kernels on the same inputs.

    python benchmarks/bench_kernels.py [--rows 2000] [--features 16] [--repeat 5]

Also fits one boosting model end to end under each backend (the backend is
chosen at import, so that part runs in a subprocess per backend).
"""
import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from arot import _kernels_py

try:
    from arot import _kernels as _kernels_c
except ImportError:
    _kernels_c = None

FIT_SNIPPET = """
import time, numpy as np
from arot import kernels
from arot.ensembles import GbmParams, fit_gbm
rng = np.random.default_rng(0)
X = rng.uniform(0, 100, size=({rows}, {features})).round(1)
y = X[:, 0] * 0.3 - X[:, 1] * 0.1 + rng.normal(0, 3, {rows})
t = time.perf_counter()
fit_gbm(X, y, GbmParams(n_estimators=50, max_depth=6, learning_rate=0.1, subsample=0.5), seed=1)
print(kernels.BACKEND, time.perf_counter() - t)
"""


def inputs(rows, features, seed=0):
    rng = np.random.default_rng(seed)
    X = np.ascontiguousarray(rng.uniform(0, 100, size=(rows, features)).round(1))
    y = np.ascontiguousarray(rng.normal(45, 8, rows))
    idx = np.arange(rows, dtype=np.intp)
    feats = np.arange(features, dtype=np.intp)
    return X, y, idx, feats


def best_time(fn, repeat):
    return min(timeit.repeat(fn, number=1, repeat=repeat))


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--rows", type=int, default=2000)
    ap.add_argument("--features", type=int, default=16)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)

    X, y, idx, feats = inputs(args.rows, args.features)
    backends = {"python": _kernels_py}
    if _kernels_c is not None:
        backends["cython"] = _kernels_c
    else:
        print("compiled kernels not built; timing the numpy fallback only")

    from arot.cart import TreeParams, fit_tree
    tree = fit_tree(X, y, TreeParams(max_depth=12))
    Q = np.ascontiguousarray(np.random.default_rng(1).uniform(0, 100, size=(20000, args.features)))
    tree_args = (tree.feature, tree.threshold, tree.left, tree.right, tree.value)

    print(f"{'kernel':<14}{'backend':<9}{'seconds':>12}")
    results = {}
    for name, mod in backends.items():
        split = best_time(lambda: mod.best_split(X, y, idx, feats, 1), args.repeat)
        pred = best_time(lambda: mod.predict(Q, *tree_args), args.repeat)
        results[name] = (split, pred)
        print(f"{'best_split':<14}{name:<9}{split:>12.5f}")
        print(f"{'predict':<14}{name:<9}{pred:>12.5f}")
    if len(results) == 2:
        (ps, pp), (cs, cp) = results["python"], results["cython"]
        print(f"speed-up: best_split x{ps / cs:.1f}, predict x{pp / cp:.1f}")

    code = FIT_SNIPPET.format(rows=args.rows, features=args.features)
    for pure in ("1", "0"):
        env = dict(os.environ, AROT_PURE_PYTHON=pure)
        out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
        backend, secs = out.stdout.split()
        print(f"gbm fit (50 stages, depth 6) {backend:<7} {float(secs):.3f} s")


if __name__ == "__main__":
    main()
