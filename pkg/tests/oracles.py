"""Brute-force reference computations used by the tests.

None of these import the code under test; they recompute each quantity
from its definition, with exact rational arithmetic where rounding matters.
"""
import math
from fractions import Fraction


def exact_sse(values):
    """Sum of squared deviations from the mean, exactly."""
    vals = [Fraction(v) for v in values]
    if not vals:
        return Fraction(0)
    mean = sum(vals) / len(vals)
    return sum((v - mean) ** 2 for v in vals)


def exact_mean(values) -> float:
    """Correctly rounded sum divided by the count."""
    return float(sum(Fraction(v) for v in values)) / len(values)


def enumerate_splits(X, y, rows, features, min_leaf=1):
    """Every (feature, midpoint) split of ``rows`` with its exact child SSE.

    Returned in (feature, threshold) order.
    """
    out = []
    for f in sorted(features):
        vals = sorted({float(X[r][f]) for r in rows})
        for lo, hi in zip(vals, vals[1:]):
            thr = (lo + hi) / 2.0
            if not thr < hi:
                thr = lo
            left = [y[r] for r in rows if X[r][f] <= thr]
            right = [y[r] for r in rows if X[r][f] > thr]
            if len(left) < min_leaf or len(right) < min_leaf:
                continue
            out.append((f, thr, exact_sse(left) + exact_sse(right)))
    return out


def window_scan(landings, runway, t, window=1800.0, default=50.0):
    """Rolling (count, mean AROT) over [t - window, t) by a linear scan."""
    same = [(i, tt, a) for i, (rw, tt, a) in enumerate(landings) if rw == runway]
    inside = [a for _, tt, a in same if t - window <= tt < t]
    if inside:
        return len(inside), exact_mean(inside)
    before = [(tt, i, a) for i, tt, a in same if tt < t]
    if before:
        # latest time; among equal times the one listed last
        return 0, max(before)[2]
    return 0, default


def latest_within(times, t, max_age):
    """Index of the latest time <= t no older than max_age, else None."""
    best = None
    for i, s in enumerate(times):
        if s <= t and t - s <= max_age and (best is None or s >= times[best]):
            best = i
    return best


def segment_distance(px, py, ax, ay, bx, by):
    """Point-to-segment distance by clamped projection."""
    vx, vy = bx - ax, by - ay
    wx, wy = px - ax, py - ay
    L2 = vx * vx + vy * vy
    s = 0.0 if L2 == 0 else max(0.0, min(1.0, (wx * vx + wy * vy) / L2))
    return math.hypot(wx - s * vx, wy - s * vy)
