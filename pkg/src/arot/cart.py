"""Regression trees grown greedily on squared error.

Nodes are stored in flat arrays (preorder). A node is a leaf when its
``feature`` entry is -1. Samples go left when ``x[feature] <= threshold``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple, Optional, Sequence, Union

import numpy as np

from arot import kernels
from arot.seeding import node_rng

GAIN_CUTOFF = 1e-12

MaxFeatures = Union[str, int, None]


@dataclass(frozen=True)
class TreeParams:
    splitter: str = "best"
    max_depth: Optional[int] = None
    min_samples_leaf: int = 1
    max_features: MaxFeatures = "all"

    def __post_init__(self):
        if self.splitter not in ("best", "random"):
            raise ValueError(f"unknown splitter {self.splitter!r}")
        if self.max_depth is not None and self.max_depth < 1:
            raise ValueError("max_depth must be >= 1")
        if self.min_samples_leaf < 1:
            raise ValueError("min_samples_leaf must be >= 1")
        mf = self.max_features
        if isinstance(mf, bool) or not (mf in (None, "all", "auto", "sqrt") or (isinstance(mf, int) and mf >= 1)):
            raise ValueError(f"invalid max_features {mf!r}")

    def n_candidates(self, p: int) -> int:
        """Number of features examined per node for ``p`` columns."""
        mf = self.max_features
        if mf == "sqrt":
            return max(1, math.ceil(math.sqrt(p)))
        if isinstance(mf, int):
            return min(mf, p)
        # "auto" means every feature for regression
        return p


class Split(NamedTuple):
    feature: int
    threshold: float
    child_sse: float
    parent_sse: float

    @property
    def gain(self) -> float:
        return self.parent_sse - self.child_sse


@dataclass(frozen=True, eq=False)
class TreeModel:
    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    n_samples: np.ndarray
    params: TreeParams
    seed: int
    n_features: int
    depth: int = field(default=0)

    @property
    def n_nodes(self) -> int:
        return int(self.feature.shape[0])

    @property
    def n_leaves(self) -> int:
        return int(np.count_nonzero(self.feature < 0))

    def predict(self, X) -> np.ndarray:
        return predict_tree(self, X)

    def same_structure(self, other: "TreeModel") -> bool:
        return all(
            np.array_equal(getattr(self, name), getattr(other, name), equal_nan=name == "threshold")
            for name in ("feature", "threshold", "left", "right", "value", "n_samples")
        )

    def leaf_rows(self, X) -> np.ndarray:
        """Leaf node id reached by each row of ``X``."""
        X = _as_matrix(X, self.n_features)
        node = np.zeros(X.shape[0], dtype=np.intp)
        for i in range(X.shape[0]):
            nd = 0
            while self.feature[nd] >= 0:
                nd = self.left[nd] if X[i, self.feature[nd]] <= self.threshold[nd] else self.right[nd]
            node[i] = nd
        return node

    def dump(self, feature_names: Optional[Sequence[str]] = None) -> str:
        """Indented text rendering of the tree."""
        names = list(feature_names) if feature_names is not None else [f"x{j}" for j in range(self.n_features)]
        lines = []

        def walk(nd, indent):
            pad = "  " * indent
            if self.feature[nd] < 0:
                lines.append(f"{pad}leaf value={self.value[nd]:.6g} n={self.n_samples[nd]}")
                return
            lines.append(f"{pad}{names[self.feature[nd]]} <= {self.threshold[nd]:.6g} (n={self.n_samples[nd]})")
            walk(self.left[nd], indent + 1)
            walk(self.right[nd], indent + 1)

        walk(0, 0)
        return "\n".join(lines)

    def to_dict(self) -> dict:
        return {
            "feature": self.feature.tolist(),
            "threshold": [None if math.isnan(t) else t for t in self.threshold.tolist()],
            "left": self.left.tolist(),
            "right": self.right.tolist(),
            "value": self.value.tolist(),
            "n_samples": self.n_samples.tolist(),
            "seed": self.seed,
            "n_features": self.n_features,
            "depth": self.depth,
            "params": {
                "splitter": self.params.splitter,
                "max_depth": self.params.max_depth,
                "min_samples_leaf": self.params.min_samples_leaf,
                "max_features": self.params.max_features,
            },
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TreeModel":
        return cls(
            feature=np.asarray(d["feature"], dtype=np.intp),
            threshold=np.asarray([math.nan if t is None else t for t in d["threshold"]], dtype=np.float64),
            left=np.asarray(d["left"], dtype=np.intp),
            right=np.asarray(d["right"], dtype=np.intp),
            value=np.asarray(d["value"], dtype=np.float64),
            n_samples=np.asarray(d["n_samples"], dtype=np.intp),
            params=TreeParams(**d["params"]),
            seed=d["seed"],
            n_features=d["n_features"],
            depth=d["depth"],
        )


def _as_matrix(X, p: Optional[int] = None) -> np.ndarray:
    X = np.ascontiguousarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X.reshape(1, -1)
    if X.ndim != 2:
        raise ValueError("X must be 2-D")
    if p is not None and X.shape[1] != p:
        raise ValueError(f"expected {p} features, got {X.shape[1]}")
    return X


def best_split(X, y, rows, candidate_features, splitter="best", rng=None, min_samples_leaf=1) -> Optional[Split]:
    """Best squared-error split of ``rows`` over ``candidate_features``.

    ``splitter="best"`` scans every midpoint between consecutive distinct
    values. ``splitter="random"`` draws one uniform threshold inside each
    candidate feature's range and keeps the best of those. Returns None when
    no split is feasible or the gain does not exceed ``GAIN_CUTOFF``.
    """
    X = _as_matrix(X)
    y = np.ascontiguousarray(y, dtype=np.float64)
    rows = np.ascontiguousarray(rows, dtype=np.intp)
    feats = np.ascontiguousarray(np.sort(np.asarray(candidate_features, dtype=np.intp)))
    if rows.shape[0] < 2 or feats.shape[0] == 0:
        return None
    if splitter == "best":
        res = kernels.best_split(X, y, rows, feats, min_samples_leaf)
    elif splitter == "random":
        if rng is None:
            raise ValueError("random splitter needs an rng")
        sub = X[np.ix_(rows, feats)]
        lo = sub.min(axis=0)
        hi = sub.max(axis=0)
        u = rng.random(feats.shape[0])
        thr = np.where(hi > lo, lo + u * (hi - lo), np.nan)
        res = kernels.random_split(X, y, rows, feats, np.ascontiguousarray(thr), min_samples_leaf)
    else:
        raise ValueError(f"unknown splitter {splitter!r}")
    if res[0] < 0:
        return None
    split = Split(int(res[0]), float(res[1]), float(res[2]), float(res[3]))
    if not split.gain > GAIN_CUTOFF:
        return None
    return split


def fit_tree(X, y, params: TreeParams = TreeParams(), seed: int = 0) -> TreeModel:
    """Grow a regression tree on ``(X, y)``.

    Candidate features at each node are drawn without replacement from an
    RNG stream keyed by ``(seed, depth, position)`` of that node, so the
    fitted tree depends only on the data, the parameters and the seed.
    """
    X = _as_matrix(X)
    y = np.ascontiguousarray(y, dtype=np.float64)
    n, p = X.shape
    if n == 0:
        raise ValueError("cannot fit a tree on an empty dataset")
    if y.shape != (n,):
        raise ValueError("y must have one value per row of X")
    if not (np.isfinite(X).all() and np.isfinite(y).all()):
        raise ValueError("X and y must be finite")

    k = params.n_candidates(p)
    msl = params.min_samples_leaf
    all_feats = np.arange(p, dtype=np.intp)
    feature, threshold, left, right, value, counts = [], [], [], [], [], []
    max_seen = 0

    # preorder: push right child first so left subtree is numbered first
    stack = [(np.arange(n, dtype=np.intp), 0, 0, -1, False)]
    while stack:
        rows, depth, pos, parent, is_left = stack.pop()
        nid = len(feature)
        if parent >= 0:
            (left if is_left else right)[parent] = nid
        yn = y[rows]
        feature.append(-1)
        threshold.append(math.nan)
        left.append(-1)
        right.append(-1)
        value.append(float(yn.mean()))
        counts.append(rows.shape[0])
        max_seen = max(max_seen, depth)

        if params.max_depth is not None and depth >= params.max_depth:
            continue
        if rows.shape[0] < 2 * msl or yn.max() == yn.min():
            continue
        rng = None
        if k < p or params.splitter == "random":
            rng = node_rng(seed, depth, pos)
        feats = all_feats if k == p else np.sort(rng.choice(p, size=k, replace=False)).astype(np.intp)
        split = best_split(X, y, rows, feats, params.splitter, rng, msl)
        if split is None:
            continue
        go_left = X[rows, split.feature] <= split.threshold
        feature[nid] = split.feature
        threshold[nid] = split.threshold
        stack.append((rows[~go_left], depth + 1, 2 * pos + 1, nid, False))
        stack.append((rows[go_left], depth + 1, 2 * pos, nid, True))

    return TreeModel(
        feature=np.asarray(feature, dtype=np.intp),
        threshold=np.asarray(threshold, dtype=np.float64),
        left=np.asarray(left, dtype=np.intp),
        right=np.asarray(right, dtype=np.intp),
        value=np.asarray(value, dtype=np.float64),
        n_samples=np.asarray(counts, dtype=np.intp),
        params=params,
        seed=seed,
        n_features=p,
        depth=max_seen,
    )


def predict_tree(model: TreeModel, X) -> np.ndarray:
    X = _as_matrix(X, model.n_features)
    if not np.isfinite(X).all():
        raise ValueError("non-finite feature value")
    return kernels.predict(X, model.feature, model.threshold, model.left, model.right, model.value)
