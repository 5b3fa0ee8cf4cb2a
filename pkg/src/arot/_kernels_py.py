"""Pure numpy split search and tree traversal.

Reference implementation of the compiled ``arot._kernels`` module. Both
backends evaluate the same arithmetic in the same order (stable sort by
value then row position, sequential accumulation), so they pick the same
splits.
"""
import math

import numpy as np

BACKEND = "python"

# Candidate child impurities within this band of the minimum are ties.
TIE_RTOL = 1e-9
TIE_ATOL = 1e-12


def _centered(y, idx):
    yn = y[idx]
    n = yn.shape[0]
    mean = np.add.accumulate(yn)[-1] / n
    yc = yn - mean
    tot = np.add.accumulate(yc)[-1]
    parent = np.add.accumulate(yc * yc)[-1]
    return yc, float(tot), float(parent)


def _midpoint(lo, hi):
    thr = (lo + hi) / 2.0
    if not thr < hi:
        thr = lo
    return float(thr)


def best_split(X, y, idx, features, min_leaf):
    """Exhaustive midpoint search over ``features`` for the rows ``idx``.

    Returns ``(feature, threshold, child_sse, parent_sse)``; ``feature`` is
    -1 when no split leaves ``min_leaf`` rows on both sides.
    """
    n = idx.shape[0]
    yc, tot, parent = _centered(y, idx)
    if n < 2:
        return -1, math.nan, math.nan, parent
    nl = np.arange(1, n, dtype=np.float64)
    nr = n - nl
    size_ok = (nl >= min_leaf) & (nr >= min_leaf)
    cands = []
    for f in features:
        xs = X[idx, f]
        order = np.argsort(xs, kind="stable")
        xs = xs[order]
        ys = yc[order]
        sl = np.add.accumulate(ys)[:-1]
        sql = np.add.accumulate(ys * ys)[:-1]
        pos = np.flatnonzero(size_ok & (xs[:-1] < xs[1:]))
        if pos.size == 0:
            continue
        sl = sl[pos]
        sql = sql[pos]
        sr = tot - sl
        sqr = parent - sql
        sse = (sql - sl * sl / nl[pos]) + (sqr - sr * sr / nr[pos])
        cands.append((int(f), xs[pos], xs[pos + 1], sse))
    if not cands:
        return -1, math.nan, math.nan, parent
    limit = min(float(c[3].min()) for c in cands) + TIE_RTOL * parent + TIE_ATOL
    for f, lo, hi, sse in cands:
        hit = np.flatnonzero(sse <= limit)
        if hit.size:
            i = hit[0]
            return f, _midpoint(lo[i], hi[i]), float(sse[i]), parent
    raise AssertionError("unreachable")


def random_split(X, y, idx, features, thresholds, min_leaf):
    """Score one given threshold per feature (NaN = skip) and keep the best."""
    n = idx.shape[0]
    yc, tot, parent = _centered(y, idx)
    cands = []
    for f, t in zip(features, thresholds):
        if math.isnan(t):
            continue
        mask = X[idx, f] <= t
        n_left = int(np.count_nonzero(mask))
        n_right = n - n_left
        if n_left < max(min_leaf, 1) or n_right < max(min_leaf, 1):
            continue
        yl = yc[mask]
        sl = float(np.add.accumulate(yl)[-1])
        sql = float(np.add.accumulate(yl * yl)[-1])
        sr = tot - sl
        sqr = parent - sql
        sse = (sql - sl * sl / n_left) + (sqr - sr * sr / n_right)
        cands.append((int(f), float(t), sse))
    if not cands:
        return -1, math.nan, math.nan, parent
    limit = min(c[2] for c in cands) + TIE_RTOL * parent + TIE_ATOL
    for f, t, sse in cands:
        if sse <= limit:
            return f, t, sse, parent
    raise AssertionError("unreachable")


def predict(X, feature, threshold, left, right, value):
    n = X.shape[0]
    node = np.zeros(n, dtype=np.intp)
    active = np.full(n, feature[0] >= 0)
    while active.any():
        rows = np.flatnonzero(active)
        nd = node[rows]
        go_left = X[rows, feature[nd]] <= threshold[nd]
        node[rows] = np.where(go_left, left[nd], right[nd])
        active[rows] = feature[node[rows]] >= 0
    return value[node]
