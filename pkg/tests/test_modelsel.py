import numpy as np
import pandas as pd
import pytest
from hypothesis import given, strategies as st

from arot.cart import TreeParams, fit_tree
from arot.features import Dataset
from arot.modelsel import (
    Encoder, ParamGrid, encode, evaluate, grid_search_cv, kfold, mean_absolute_error, nested_cv,
    uncertainty_reduction,
)
from arot.seeding import derive_seed, substream


def make_dataset(X: dict, y, categorical=(), variant="mixed"):
    frame = pd.DataFrame(X)
    cols = tuple(frame.columns)
    n = len(frame)
    return Dataset(variant, cols, frame, np.asarray(y, dtype=np.float64), np.full(n, "DCA"),
                   np.arange(n), 0, tuple(categorical))


def numeric_dataset(seed, n=60):
    rng = np.random.default_rng(seed)
    x0, x1 = rng.uniform(0, 10, n).round(1), rng.integers(0, 5, n).astype(float)
    return make_dataset({"a": x0, "b": x1}, (3 * x0 - 2 * x1 + rng.normal(0, 1, n)).round(2), variant="numerical")


def test_encoder_codes_and_unseen():
    train = make_dataset({"aircraft_type": ["B738", "A320", "B738"], "w": [1.0, 2.0, 3.0]}, [1, 2, 3],
                         categorical=("aircraft_type",))
    test = make_dataset({"aircraft_type": ["E190", "A320"], "w": [4.0, 5.0]}, [1, 2],
                        categorical=("aircraft_type",))
    Xtr, Xte, enc = encode(train, test)
    assert enc.mapping == {"aircraft_type": {"A320": 1, "B738": 2}}
    assert Xtr[:, 0].tolist() == [2, 1, 2] and Xte[:, 0].tolist() == [0, 1]
    assert Xte[:, 1].tolist() == [4.0, 5.0]
    assert enc.decode("aircraft_type", Xtr[:, 0]) == ["B738", "A320", "B738"]


def test_numerical_encoder_is_passthrough():
    ds = numeric_dataset(0, 20)
    X, _, enc = encode(ds)
    assert enc.mapping == {}
    assert np.array_equal(X, ds.X.to_numpy(dtype=np.float64))


@given(st.lists(st.sampled_from(["A320", "B738", "E190", "CRJ9", "A321"]), min_size=1, max_size=40))
def test_encoder_round_trip(cats):
    ds = make_dataset({"aircraft_type": cats}, np.zeros(len(cats)), categorical=("aircraft_type",))
    enc = Encoder.fit(ds)
    assert enc.decode("aircraft_type", enc.transform(ds)[:, 0]) == cats


def test_grid_sizes():
    assert [len(ParamGrid.preset(a, "full")) for a in ("dt", "rf", "gbm")] == [120, 576, 2880]
    g = ParamGrid.from_dict("dt", {"max_features": ["auto"], "splitter": ["best", "random"]})
    assert [p["splitter"] for p in g.points()] == ["best", "random"]
    with pytest.raises(ValueError):
        ParamGrid.from_dict("dt", {"bogus": [1]})


@given(st.integers(2, 200), st.integers(2, 10), st.integers(0, 2**32))
def test_kfold_partition(n, k, seed):
    if n < k:
        with pytest.raises(ValueError):
            kfold(n, k, substream(seed))
        return
    folds = kfold(n, k, substream(seed))
    flat = np.concatenate(folds)
    assert sorted(flat.tolist()) == list(range(n))
    sizes = [len(f) for f in folds]
    assert max(sizes) - min(sizes) <= 1


def test_single_point_grid():
    ds = numeric_dataset(1, 30)
    g = ParamGrid.from_dict("dt", {"max_depth": [3]})
    res = grid_search_cv(ds, g, 3, seed=0)
    assert res.best_params == {"max_depth": 3} and res.best_index == 0 and len(res.fold_mae) == 1


def test_dominated_point_loses():
    ds = numeric_dataset(2, 60)
    g = ParamGrid.from_dict("dt", {"max_depth": [1, 6], "min_samples_leaf": [3]})
    res = grid_search_cv(ds, g, 3, seed=4)
    assert all(a > b for a, b in zip(res.fold_mae[0], res.fold_mae[1]))
    assert res.best_params["max_depth"] == 6


def test_grid_search_matches_recomputation():
    ds = numeric_dataset(3, 60)
    g = ParamGrid.from_dict("dt", {"splitter": ["random"], "max_depth": [2, 4, 6], "min_samples_leaf": [3]})
    points = g.points()
    res = grid_search_cv(ds, g, 3, seed=11)
    X, y = ds.X.to_numpy(dtype=np.float64), ds.y
    perm = substream(11, "inner").permutation(60)
    folds = [np.sort(perm[i * 20:(i + 1) * 20]) for i in range(3)]
    for gi, params in enumerate(points):
        for fi, te in enumerate(folds):
            tr = np.concatenate([f for j, f in enumerate(folds) if j != fi])
            tree = fit_tree(X[tr], y[tr], TreeParams(**params), derive_seed(11, "fit", gi, fi))
            assert res.fold_mae[gi][fi] == float(np.mean(np.abs(y[te] - tree.predict(X[te]))))
    assert res.best_index == int(np.argmin([np.mean(m) for m in res.fold_mae]))


def test_nested_cv_uninformative_features():
    # constant features: every model predicts its training mean
    rng = np.random.default_rng(5)
    y = rng.normal(40, 5, 30).round(1)
    ds = make_dataset({"a": np.ones(30)}, y, variant="numerical")
    rep = nested_cv(ds, "dt", ParamGrid.from_dict("dt", {"max_depth": [3]}), k_outer=3, k_inner=2, repeats=2, seed=1)
    for f in rep.folds:
        folds = kfold(30, 3, substream(1, "outer", f.repeat))
        te = folds[f.fold]
        tr = np.setdiff1d(np.arange(30), te)
        assert f.mae == pytest.approx(np.mean(np.abs(y[te] - y[tr].mean())), rel=1e-12)
    const = make_dataset({"a": np.arange(30.0)}, np.full(30, 7.0), variant="numerical")
    rep = nested_cv(const, "gbm", ParamGrid.from_dict("gbm", {"n_estimators": [5]}), 3, 2, 1, seed=0)
    assert rep.mae_mean == 0.0


def test_nested_cv_cardinality_and_determinism():
    ds = numeric_dataset(6, 10)
    g = ParamGrid.from_dict("dt", {"max_depth": [1, 2]})
    rep = nested_cv(ds, "dt", g, k_outer=2, k_inner=2, repeats=1, seed=3)
    assert len(rep.folds) == 2
    big = numeric_dataset(7, 50)
    a = nested_cv(big, "rf", ParamGrid.from_dict("rf", {"n_estimators": [3], "max_samples": [0.5]}), seed=9)
    b = nested_cv(big, "rf", ParamGrid.from_dict("rf", {"n_estimators": [3], "max_samples": [0.5]}), seed=9)
    assert a.to_csv() == b.to_csv() and [f.digest for f in a.folds] == [f.digest for f in b.folds]
    assert a.to_csv().splitlines()[0] == "repeat,fold,algo,variant,params,mae_s"
    with pytest.raises(ValueError):
        nested_cv(numeric_dataset(0, 5), "dt", g, k_outer=2, k_inner=3)


def test_evaluate_identities():
    for mae, sigma, ur in ((3.69, 5.46, 0.324), (6.79, 12.65, 0.463), (4.37, 7.57, 0.423)):
        assert abs(uncertainty_reduction(mae, sigma) - ur) <= 0.001
    m = evaluate([40.0, 50.0], [40.0, 50.0], 5.0)
    assert (m.mae, m.uncertainty_reduction) == (0.0, 1.0)
    with pytest.raises(ValueError):
        mean_absolute_error([1.0, 2.0], [1.0])
    with pytest.raises(ValueError):
        evaluate([1.0], [1.0], 0.0)
