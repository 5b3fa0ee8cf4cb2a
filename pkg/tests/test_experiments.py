import pandas as pd
import pytest
from hypothesis import given, strategies as st

from arot.experiments import (
    DataError, ExperimentConfig, generalized_cases, generalized_csv, generalized_summary,
    prediction_point_summary, run_generalized_experiment, run_unseen_experiment, target_split,
)


@pytest.fixture(scope="module")
def tables(small_dca):
    base = small_dca[2].table
    out = {}
    for i, ap in enumerate(("AAA", "BBB", "CCC")):
        t = base.iloc[i * 40: i * 40 + 60].copy()
        t["airport"] = ap
        out[ap] = t
    return out


def test_unseen_cardinality_and_determinism(tables):
    cfg = ExperimentConfig(airports=("AAA", "BBB", "CCC"), cv_repeats=1, k_outer=2, k_inner=2, seed=5)
    rep = run_unseen_experiment(cfg, tables)
    assert len(rep.reports) == 27
    assert all(len(r.folds) == 2 for r in rep.reports.values())
    again = run_unseen_experiment(ExperimentConfig(**{**cfg.__dict__, "jobs": 2}), tables)
    assert rep.to_csv() == again.to_csv() and rep.summary_csv() == again.summary_csv()
    assert len(rep.summary_csv().splitlines()) == 28


def test_unseen_missing_airport(tables):
    with pytest.raises(DataError):
        run_unseen_experiment(ExperimentConfig(airports=("ZZZ",)), tables)


@given(st.integers(10, 500), st.integers(0, 2**32), st.integers(0, 8))
def test_target_split_prefix(n, seed, repeat):
    prev = set()
    for alpha in (0.1, 0.2, 0.3, 0.5, 0.9):
        tr, te = target_split(n, alpha, seed, "DCA", repeat)
        assert len(tr) == int(alpha * n + 1e-9)
        assert not set(tr) & set(te) and len(tr) + len(te) == n
        assert prev <= set(tr)
        prev = set(tr)


def test_generalized_cardinality(tables):
    cfg = ExperimentConfig(airports=("AAA", "BBB"), algos=("dt",), alphas=(0.9,), repeats=9, seed=1)
    rows = run_generalized_experiment(cfg, tables, cases=[(("AAA",), "BBB")])
    assert len(rows) == 9
    # both models are scored on the same held-out rows
    assert all(r.n_test == 60 - 54 and r.n_train_normal == 54 and r.n_train_generalized == 114 for r in rows)
    assert generalized_csv(rows) == generalized_csv(run_generalized_experiment(cfg, tables, [(("AAA",), "BBB")]))


def test_generalized_cases():
    assert generalized_cases(("A", "B", "C"), 2) == [(("B", "C"), "A"), (("A", "C"), "B"), (("A", "B"), "C")]
    assert len(generalized_cases(("A", "B", "C"), 1)) == 6


def test_source_identical_to_target(small_dca):
    table = small_dca[2].table.copy()
    src = table.copy()
    src["airport"] = "SRC"
    cfg = ExperimentConfig(airports=("DCA", "SRC"), algos=("gbm",), alphas=(0.1,), repeats=9, seed=2)
    rows = run_generalized_experiment(cfg, {"DCA": table, "SRC": src}, cases=[(("SRC",), "DCA")])
    (_, _, _, _, k, med_g, med_n, win), = generalized_summary(rows)
    assert k == 9 and win and med_g <= med_n


def test_prediction_point_arithmetic():
    one = pd.DataFrame({"airport": ["DCA"], "runway": ["1"], "flight_id": ["x"], "distance_nm": [4.82],
                        "speed_kt": [166.38]})
    s = prediction_point_summary(one)
    assert s["seconds_to_threshold"].iloc[0] == pytest.approx(104.29, abs=0.01)
    two = pd.concat([one, one], ignore_index=True)
    s2 = prediction_point_summary(two)
    assert s2.drop(columns="flights").equals(s.drop(columns="flights"))
    assert s2["flights"].tolist() == [2]


def test_config_validation():
    for bad in (dict(airports=()), dict(alphas=(1.0,)), dict(variants=("x",)), dict(grid="huge"),
                dict(repeats=0)):
        with pytest.raises(ValueError):
            ExperimentConfig(**bad)
