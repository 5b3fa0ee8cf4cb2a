"""Ordinal encoding, grid search with inner cross-validation, repeated nested
cross-validation and error metrics.
"""
from __future__ import annotations

import csv
import hashlib
import io
import itertools
import json
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from arot.cart import TreeParams, fit_tree
from arot.ensembles import ForestParams, GbmParams, fit_forest, fit_gbm
from arot.features import Dataset
from arot.seeding import derive_seed, substream

ALGORITHMS = ("dt", "rf", "gbm")

# iteration order of grid axes; the last axis varies fastest
AXIS_ORDER = (
    "splitter", "max_depth", "min_samples_leaf", "max_features",
    "n_estimators", "max_samples", "learning_rate", "subsample",
)

FULL_GRIDS = {
    "dt": {
        "splitter": ["best", "random"],
        "max_depth": [3, 10, 30, 100, 300],
        "min_samples_leaf": [1, 5, 10, 30],
        "max_features": ["sqrt", 10, "auto"],
    },
    "rf": {
        "max_depth": [3, 10, 30, 100],
        "min_samples_leaf": [1, 5, 10, 30],
        "max_features": ["sqrt", 10, "auto"],
        "n_estimators": [10, 30, 100, 300],
        "max_samples": [0.1, 0.3, None],
    },
    "gbm": {
        "max_depth": [3, 10, 30, 100],
        "min_samples_leaf": [1, 5, 10, 30],
        "max_features": ["sqrt", 10, "auto"],
        "n_estimators": [30, 100, 300, 900],
        "learning_rate": [0.001, 0.003, 0.01, 0.03, 0.1],
        "subsample": [0.1, 0.3, 1.0],
    },
}

# Subsets of the full grids sized for laptop-scale runs.
REDUCED_GRIDS = {
    "dt": {
        "splitter": ["best", "random"],
        "max_depth": [3, 10],
        "min_samples_leaf": [10, 30],
        "max_features": ["auto"],
    },
    "rf": {
        "max_depth": [10],
        "min_samples_leaf": [5, 10],
        "max_features": [10],
        "n_estimators": [30],
        "max_samples": [0.3],
    },
    "gbm": {
        "max_depth": [3],
        "min_samples_leaf": [10, 30],
        "max_features": [10],
        "n_estimators": [100],
        "learning_rate": [0.1],
        "subsample": [0.3],
    },
}


@dataclass(frozen=True)
class ParamGrid:
    algorithm: str
    axes: tuple  # ((name, (values...)), ...) in AXIS_ORDER

    @classmethod
    def from_dict(cls, algorithm: str, axes: dict) -> "ParamGrid":
        if algorithm not in ALGORITHMS:
            raise ValueError(f"unknown algorithm {algorithm!r}")
        unknown = set(axes) - set(AXIS_ORDER)
        if unknown:
            raise ValueError(f"unknown grid axes {sorted(unknown)}")
        ordered = tuple((name, tuple(axes[name])) for name in AXIS_ORDER if name in axes)
        return cls(algorithm, ordered)

    @classmethod
    def preset(cls, algorithm: str, name: str = "reduced") -> "ParamGrid":
        grids = {"full": FULL_GRIDS, "reduced": REDUCED_GRIDS}
        if name not in grids:
            raise ValueError(f"unknown grid preset {name!r}")
        return cls.from_dict(algorithm, grids[name][algorithm])

    def points(self) -> list:
        names = [a for a, _ in self.axes]
        return [dict(zip(names, combo)) for combo in itertools.product(*(v for _, v in self.axes))]

    def __len__(self) -> int:
        return math.prod(len(v) for _, v in self.axes) if self.axes else 0


def _max_features(v):
    return "all" if v in ("auto", None) else v


def fit_model(algorithm: str, X, y, params: dict, seed: int):
    """Fit one learner with grid-style parameters (``max_features="auto"`` = all)."""
    p = dict(params)
    if "max_features" in p:
        p["max_features"] = _max_features(p["max_features"])
    if algorithm == "dt":
        return fit_tree(X, y, TreeParams(**p), seed)
    if algorithm == "rf":
        return fit_forest(X, y, ForestParams(**p), seed)
    if algorithm == "gbm":
        return fit_gbm(X, y, GbmParams(**p), seed)
    raise ValueError(f"unknown algorithm {algorithm!r}")


def params_key(params: dict) -> str:
    return json.dumps(params, sort_keys=True, separators=(",", ":"))


def model_digest(model) -> str:
    """SHA-256 over every fitted number in a tree, forest or boosting model."""
    h = hashlib.sha256()
    trees = getattr(model, "trees", None)
    if trees is None:
        trees = (model,)
    else:
        h.update(np.float64(getattr(model, "init", 0.0)).tobytes())
    for t in trees:
        for arr in (t.feature, t.threshold, t.left, t.right, t.value, t.n_samples):
            h.update(np.ascontiguousarray(arr).tobytes())
    return h.hexdigest()


# -- encoding ---------------------------------------------------------------

@dataclass(frozen=True)
class Encoder:
    """Per categorical column, category -> code in 1..n (sorted); 0 = unseen."""

    columns: tuple
    categorical: tuple
    mapping: dict

    @classmethod
    def fit(cls, ds: Dataset) -> "Encoder":
        mapping = {}
        for c in ds.categorical:
            cats = sorted(set(ds.X[c].tolist()))
            mapping[c] = {cat: i + 1 for i, cat in enumerate(cats)}
        return cls(ds.columns, ds.categorical, mapping)

    def transform(self, ds: Dataset) -> np.ndarray:
        if ds.columns != self.columns:
            raise ValueError("dataset schema differs from the encoder's")
        out = np.empty((len(ds), len(self.columns)), dtype=np.float64)
        for j, c in enumerate(self.columns):
            if c in self.mapping:
                m = self.mapping[c]
                out[:, j] = [m.get(v, 0) for v in ds.X[c].tolist()]
            else:
                out[:, j] = ds.X[c].to_numpy(dtype=np.float64)
        return np.ascontiguousarray(out)

    def decode(self, column: str, codes) -> list:
        inverse = {code: cat for cat, code in self.mapping[column].items()}
        return [inverse.get(int(c)) for c in codes]


def encode(train: Dataset, apply: Optional[Dataset] = None):
    """Fit an ordinal encoder on ``train`` only; returns (X_train, X_apply, encoder)."""
    enc = Encoder.fit(train)
    Xa = enc.transform(apply) if apply is not None else None
    return enc.transform(train), Xa, enc


# -- cross-validation -------------------------------------------------------

def kfold(n: int, k: int, rng: np.random.Generator) -> list:
    """Shuffled, disjoint, exhaustive folds whose sizes differ by at most one."""
    if k < 2 or n < k:
        raise ValueError(f"cannot split {n} rows into {k} folds")
    return [np.sort(f) for f in np.array_split(rng.permutation(n), k)]


def mean_absolute_error(y_true, y_pred) -> float:
    y_true = np.asarray(y_true, dtype=np.float64)
    y_pred = np.asarray(y_pred, dtype=np.float64)
    if y_true.shape != y_pred.shape:
        raise ValueError("length mismatch")
    if y_true.size == 0:
        raise ValueError("empty input")
    return float(np.mean(np.abs(y_true - y_pred)))


@dataclass
class GridSearchResult:
    best_params: dict
    best_index: int
    mean_mae: list
    fold_mae: list  # per grid point, per inner fold


def grid_search_cv(train: Dataset, grid: ParamGrid, k_inner: int = 3, seed: int = 0) -> GridSearchResult:
    """Inner k-fold CV over every grid point; lowest mean MAE wins, earliest on ties.

    Inner folds come from ``(seed, "inner")`` and are shared by all grid
    points; the encoder is refit on each inner training part.
    """
    points = grid.points()
    if not points:
        raise ValueError("empty parameter grid")
    n = len(train)
    if n < k_inner:
        raise ValueError(f"{n} rows is fewer than k_inner={k_inner}")
    folds = kfold(n, k_inner, substream(seed, "inner"))
    prepared = []
    for i, test_idx in enumerate(folds):
        train_idx = np.concatenate([f for j, f in enumerate(folds) if j != i])
        tr, te = train.take(train_idx), train.take(test_idx)
        Xtr, Xte, _ = encode(tr, te)
        prepared.append((Xtr, tr.y, Xte, te.y))
    fold_mae = []
    for g, params in enumerate(points):
        maes = []
        for i, (Xtr, ytr, Xte, yte) in enumerate(prepared):
            model = fit_model(grid.algorithm, Xtr, ytr, params, derive_seed(seed, "fit", g, i))
            maes.append(mean_absolute_error(yte, model.predict(Xte)))
        fold_mae.append(maes)
    mean_mae = [float(np.mean(m)) for m in fold_mae]
    best = int(np.argmin(mean_mae))  # first minimum
    return GridSearchResult(points[best], best, mean_mae, fold_mae)


@dataclass
class FoldResult:
    repeat: int
    fold: int
    params: dict
    mae: float
    n_train: int
    n_test: int
    digest: str = ""


@dataclass
class CvReport:
    algorithm: str
    variant: str
    folds: list = field(default_factory=list)

    @property
    def maes(self) -> np.ndarray:
        return np.array([f.mae for f in self.folds], dtype=np.float64)

    @property
    def mae_mean(self) -> float:
        return float(np.mean(self.maes))

    @property
    def mae_std(self) -> float:
        return float(np.std(self.maes))

    def rows(self):
        for f in self.folds:
            yield (f.repeat, f.fold, self.algorithm, self.variant, params_key(f.params), f"{f.mae:.6f}")

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["repeat", "fold", "algo", "variant", "params", "mae_s"])
        w.writerows(self.rows())
        return buf.getvalue()


def nested_cv(dataset: Dataset, algorithm: str, grid: ParamGrid, k_outer: int = 5, k_inner: int = 3,
              repeats: int = 3, seed: int = 0, keep_models: bool = False) -> CvReport:
    """Repeated k-fold assessment with grid search inside each outer training part.

    With ``keep_models`` the refitted models are attached as ``report.models``
    keyed by ``(repeat, fold)``.
    """
    if grid.algorithm != algorithm:
        raise ValueError("grid is for a different algorithm")
    n = len(dataset)
    if n < k_outer * k_inner:
        raise ValueError(f"nested CV needs at least {k_outer * k_inner} rows, got {n}")
    report = CvReport(algorithm, dataset.variant)
    models = {}
    for r in range(repeats):
        folds = kfold(n, k_outer, substream(seed, "outer", r))
        for i, test_idx in enumerate(folds):
            train_idx = np.concatenate([f for j, f in enumerate(folds) if j != i])
            tr, te = dataset.take(train_idx), dataset.take(test_idx)
            gs = grid_search_cv(tr, grid, k_inner, derive_seed(seed, "search", r, i))
            Xtr, Xte, _ = encode(tr, te)
            model = fit_model(algorithm, Xtr, tr.y, gs.best_params, derive_seed(seed, "refit", r, i))
            mae = mean_absolute_error(te.y, model.predict(Xte))
            report.folds.append(FoldResult(r, i, gs.best_params, mae, len(tr), len(te), model_digest(model)))
            if keep_models:
                models[(r, i)] = model
    if keep_models:
        report.models = models
    return report


@dataclass(frozen=True)
class EvalMetrics:
    mae: float
    target_sigma: float
    uncertainty_reduction: float


def evaluate(y_true, y_pred, target_sigma: float) -> EvalMetrics:
    if not target_sigma > 0:
        raise ValueError("target_sigma must be positive")
    mae = mean_absolute_error(y_true, y_pred)
    return EvalMetrics(mae, float(target_sigma), 1.0 - mae / target_sigma)


def uncertainty_reduction(mae: float, target_sigma: float) -> float:
    if not target_sigma > 0:
        raise ValueError("target_sigma must be positive")
    return 1.0 - mae / target_sigma
