"""Bagged forests and squared-error gradient boosting on top of ``arot.cart``."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from arot.cart import MaxFeatures, TreeParams, _as_matrix, fit_tree
from arot.seeding import derive_seed, substream


@dataclass(frozen=True)
class ForestParams:
    n_estimators: int = 100
    max_samples: Optional[float] = None
    max_depth: Optional[int] = None
    min_samples_leaf: int = 1
    max_features: MaxFeatures = "all"

    def __post_init__(self):
        if self.n_estimators < 1:
            raise ValueError("n_estimators must be >= 1")
        if self.max_samples is not None and not 0 < self.max_samples <= 1:
            raise ValueError("max_samples must be in (0, 1] or None")

    def tree_params(self) -> TreeParams:
        return TreeParams("best", self.max_depth, self.min_samples_leaf, self.max_features)


@dataclass(frozen=True)
class GbmParams:
    n_estimators: int = 100
    learning_rate: float = 0.1
    subsample: float = 1.0
    max_depth: Optional[int] = 3
    min_samples_leaf: int = 1
    max_features: MaxFeatures = "all"

    def __post_init__(self):
        if self.n_estimators < 1:
            raise ValueError("n_estimators must be >= 1")
        if not self.learning_rate >= 0:
            raise ValueError("learning_rate must be >= 0")
        if not 0 < self.subsample <= 1:
            raise ValueError("subsample must be in (0, 1]")

    def tree_params(self) -> TreeParams:
        return TreeParams("best", self.max_depth, self.min_samples_leaf, self.max_features)


@dataclass(frozen=True, eq=False)
class ForestModel:
    trees: tuple
    params: ForestParams
    seed: int

    def member_predictions(self, X) -> np.ndarray:
        X = _as_matrix(X, self.trees[0].n_features)
        return np.stack([t.predict(X) for t in self.trees])

    def predict(self, X) -> np.ndarray:
        # exact sum: independent of tree order
        per_tree = self.member_predictions(X)
        n = len(self.trees)
        return np.array([math.fsum(col) / n for col in per_tree.T.tolist()], dtype=np.float64)


@dataclass(frozen=True, eq=False)
class GbmModel:
    init: float
    trees: tuple
    learning_rate: float
    params: GbmParams
    seed: int

    def predict(self, X) -> np.ndarray:
        X = _as_matrix(X)
        out = np.full(X.shape[0], self.init)
        for tree in self.trees:
            out += self.learning_rate * tree.predict(X)
        return out


def _check(X, y):
    X = _as_matrix(X)
    y = np.ascontiguousarray(y, dtype=np.float64)
    if X.shape[0] == 0:
        raise ValueError("cannot fit on an empty dataset")
    if y.shape != (X.shape[0],):
        raise ValueError("y must have one value per row of X")
    return X, y


def fit_forest(X, y, params: ForestParams = ForestParams(), seed: int = 0) -> ForestModel:
    """Bootstrap-aggregated trees; tree ``t`` draws from substream ``(seed, t)``."""
    X, y = _check(X, y)
    n = X.shape[0]
    m = n if params.max_samples is None else max(1, int(round(params.max_samples * n)))
    tp = params.tree_params()
    trees = []
    for t in range(params.n_estimators):
        boot = substream(seed, "bootstrap", t).integers(0, n, size=m)
        trees.append(fit_tree(X[boot], y[boot], tp, derive_seed(seed, "tree", t)))
    return ForestModel(tuple(trees), params, seed)


def fit_gbm(X, y, params: GbmParams = GbmParams(), seed: int = 0) -> GbmModel:
    """Stagewise least-squares boosting starting from the target mean.

    Stage ``m`` fits a tree to the current residuals on a without-replacement
    subsample of ``round(subsample * n)`` rows drawn from substream ``(seed, m)``.
    """
    X, y = _check(X, y)
    n = X.shape[0]
    init = float(y.mean())
    pred = np.full(n, init)
    tp = params.tree_params()
    m_rows = max(1, int(round(params.subsample * n)))
    trees = []
    for m in range(1, params.n_estimators + 1):
        resid = y - pred
        if m_rows < n:
            rows = np.sort(substream(seed, "subsample", m).choice(n, size=m_rows, replace=False))
            tree = fit_tree(X[rows], resid[rows], tp, derive_seed(seed, "stage", m))
        else:
            tree = fit_tree(X, resid, tp, derive_seed(seed, "stage", m))
        pred += params.learning_rate * tree.predict(X)
        trees.append(tree)
    return GbmModel(init, tuple(trees), params.learning_rate, params, seed)


def predict_ensemble(model, X) -> np.ndarray:
    X = _as_matrix(X)
    if not np.isfinite(X).all():
        raise ValueError("non-finite feature value")
    return model.predict(X)
