"""Unseen-data and generalized-learning experiments, approach timing summary,
and the CSV/SVG reports built from them.
"""
from __future__ import annotations

import csv
import io
import itertools
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Optional

import numpy as np
import pandas as pd

from arot.features import DEFAULT_FAF_NM, VARIANTS, Dataset, build_dataset, read_feature_table
from arot.modelsel import (
    ALGORITHMS, ParamGrid, encode, fit_model, grid_search_cv, mean_absolute_error, nested_cv,
    params_key, uncertainty_reduction,
)
from arot.seeding import derive_seed, substream

log = logging.getLogger(__name__)

DEFAULT_ALPHAS = tuple(round(0.1 * i, 1) for i in range(1, 10))
FEATURES_FILE = "features.csv"
SNAPSHOTS_FILE = "snapshots.csv"
REPORT_DECIMALS = 6


class DataError(Exception):
    """Missing or unusable experiment input."""


@dataclass(frozen=True)
class ExperimentConfig:
    airports: tuple = ("DCA", "MIA", "PHX")
    variants: tuple = VARIANTS
    algos: tuple = ALGORITHMS
    alphas: tuple = DEFAULT_ALPHAS
    repeats: int = 9  # generalized experiment, per alpha
    grid: str = "reduced"
    seed: int = 0
    faf_distance: float = DEFAULT_FAF_NM
    out_dir: str = "."
    cv_repeats: int = 3
    k_outer: int = 5
    k_inner: int = 3
    jobs: int = 1

    def __post_init__(self):
        if not self.airports:
            raise ValueError("at least one airport is required")
        for v in self.variants:
            if v not in VARIANTS:
                raise ValueError(f"unknown variant {v!r}")
        for a in self.algos:
            if a not in ALGORITHMS:
                raise ValueError(f"unknown algorithm {a!r}")
        for a in self.alphas:
            if not 0 < a < 1:
                raise ValueError(f"alpha {a} outside (0, 1)")
        if self.repeats < 1 or self.cv_repeats < 1:
            raise ValueError("repeats must be >= 1")
        if self.grid not in ("full", "reduced"):
            raise ValueError(f"unknown grid preset {self.grid!r}")


# -- inputs -----------------------------------------------------------------

def airport_dir(root: str, airport: str) -> str:
    for name in (airport, airport.lower(), airport.upper()):
        path = os.path.join(root, name)
        if os.path.isdir(path):
            return path
    raise DataError(f"no data directory for airport {airport} under {root}")


def load_tables(root: str, airports) -> dict:
    tables = {}
    for ap in airports:
        path = os.path.join(airport_dir(root, ap), FEATURES_FILE)
        if not os.path.exists(path):
            raise DataError(f"missing feature table {path}")
        table = read_feature_table(path)
        if len(table) == 0:
            raise DataError(f"empty feature table {path}")
        table["airport"] = ap
        tables[ap] = table
    return tables


def _map(fn, tasks, jobs: int):
    # results come back in task order whatever the worker count
    if jobs <= 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, tasks))


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def _write(path, text):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)
    return path


# -- unseen-data experiment -------------------------------------------------

UNSEEN_HEADER = ("airport", "repeat", "fold", "algo", "variant", "params", "mae_s")
SUMMARY_HEADER = ("airport", "variant", "algo", "n", "arot_mean_s", "arot_sigma_s",
                  "mae_mean_s", "mae_std_s", "uncertainty_reduction")


def _unseen_cell(task):
    airport, variant, algo, ds, grid, cfg = task
    seed = derive_seed(cfg.seed, "unseen", airport)
    rep = nested_cv(ds, algo, grid, cfg.k_outer, cfg.k_inner, cfg.cv_repeats, seed)
    for f in rep.folds:
        f.mae = round(f.mae, REPORT_DECIMALS)  # summaries rebuilt from the CSV then match exactly
    return airport, variant, algo, rep


@dataclass
class UnseenReport:
    reports: dict  # (airport, variant, algo) -> CvReport
    targets: dict  # airport -> (n, mean, sigma)

    def rows(self):
        for (ap, variant, algo), rep in self.reports.items():
            for f in rep.folds:
                yield (ap, f.repeat, f.fold, algo, variant, params_key(f.params), f"{f.mae:.6f}")

    def summary_rows(self):
        for (ap, variant, algo), rep in self.reports.items():
            n, mean, sigma = self.targets[ap]
            yield (ap, variant, algo, n, f"{mean:.6f}", f"{sigma:.6f}", f"{rep.mae_mean:.6f}",
                   f"{rep.mae_std:.6f}", f"{uncertainty_reduction(rep.mae_mean, sigma):.6f}")

    def to_csv(self) -> str:
        return _csv_text(UNSEEN_HEADER, self.rows())

    def summary_csv(self) -> str:
        return _csv_text(SUMMARY_HEADER, self.summary_rows())


def target_stats(y) -> tuple:
    y = np.asarray(y, dtype=np.float64)
    return len(y), float(np.mean(y)), float(np.std(y))


def run_unseen_experiment(cfg: ExperimentConfig, tables: dict) -> UnseenReport:
    """Nested CV for every (airport, variant, algorithm) on that airport's own data.

    Within an airport every variant and algorithm sees the same outer folds.
    """
    tasks = []
    targets = {}
    for ap in cfg.airports:
        if ap not in tables:
            raise DataError(f"no feature table for airport {ap}")
        for variant in cfg.variants:
            ds = build_dataset(tables[ap], variant)
            if variant == cfg.variants[0]:
                targets[ap] = target_stats(ds.y)
            for algo in cfg.algos:
                tasks.append((ap, variant, algo, ds, ParamGrid.preset(algo, cfg.grid), cfg))
    results = _map(_unseen_cell, tasks, cfg.jobs)
    return UnseenReport({(ap, v, a): rep for ap, v, a, rep in results}, targets)


# -- generalized-learning experiment ----------------------------------------

GENERALIZED_HEADER = ("target", "sources", "alpha", "repeat", "algo", "mae_generalized_s", "mae_normal_s",
                      "n_train_generalized", "n_train_normal", "n_test")


@dataclass(frozen=True)
class GeneralizedRow:
    target: str
    sources: tuple
    alpha: float
    repeat: int
    algo: str
    mae_generalized: float
    mae_normal: float
    n_train_generalized: int
    n_train_normal: int
    n_test: int

    def cells(self):
        return (self.target, "+".join(self.sources), f"{self.alpha:g}", self.repeat, self.algo,
                f"{self.mae_generalized:.6f}", f"{self.mae_normal:.6f}",
                self.n_train_generalized, self.n_train_normal, self.n_test)


def target_split(n: int, alpha: float, seed: int, target: str, repeat: int):
    """Training prefix and held-out rest of one seeded shuffle of the target rows.

    The shuffle depends on (seed, target, repeat) only, so a larger alpha
    always extends the training prefix.
    """
    order = substream(seed, "generalized", target, repeat).permutation(n)
    m = int(math.floor(alpha * n + 1e-9))
    return np.sort(order[:m]), np.sort(order[m:])


def _fit_and_score(train: Dataset, test: Dataset, grid: ParamGrid, k_inner: int, seed: int) -> float:
    gs = grid_search_cv(train, grid, k_inner, derive_seed(seed, "search"))
    Xtr, Xte, _ = encode(train, test)
    model = fit_model(grid.algorithm, Xtr, train.y, gs.best_params, derive_seed(seed, "refit"))
    return mean_absolute_error(test.y, model.predict(Xte))


def _generalized_cell(task):
    target, sources, alpha, repeat, algo, target_ds, source_ds, grid, cfg = task
    train_idx, test_idx = target_split(len(target_ds), alpha, cfg.seed, target, repeat)
    if len(train_idx) < cfg.k_inner or len(test_idx) == 0:
        return None
    part, test = target_ds.take(train_idx), target_ds.take(test_idx)
    general = Dataset.concat(list(source_ds) + [part])
    base = ("cell", target, "+".join(sources), alpha, repeat, algo)
    mae_g = _fit_and_score(general, test, grid, cfg.k_inner, derive_seed(cfg.seed, *base, "generalized"))
    mae_n = _fit_and_score(part, test, grid, cfg.k_inner, derive_seed(cfg.seed, *base, "normal"))
    return GeneralizedRow(target, tuple(sources), alpha, repeat, algo,
                          round(mae_g, REPORT_DECIMALS), round(mae_n, REPORT_DECIMALS),
                          len(general), len(part), len(test))


def generalized_cases(airports, n_sources: int):
    """(sources, target) pairs: ordered pairs for one source, unordered source sets otherwise."""
    cases = []
    for target in airports:
        others = [a for a in airports if a != target]
        for combo in itertools.combinations(others, n_sources):
            cases.append((tuple(combo), target))
    return cases


def run_generalized_experiment(cfg: ExperimentConfig, tables: dict, cases=None,
                               variant: str = "numerical") -> list:
    """Generalized vs Normal model MAE for every case, alpha, repeat and algorithm.

    ``cases`` defaults to every one- and two-source combination over the
    configured airports. Cells whose target prefix is smaller than the inner
    fold count are skipped with a log message.
    """
    if cases is None:
        cases = generalized_cases(cfg.airports, 1) + generalized_cases(cfg.airports, 2)
    datasets = {}
    for ap in {a for srcs, tgt in cases for a in (*srcs, tgt)}:
        if ap not in tables:
            raise DataError(f"no feature table for airport {ap}")
        datasets[ap] = build_dataset(tables[ap], variant)
    tasks = []
    for (sources, target), alpha, repeat, algo in itertools.product(cases, cfg.alphas, range(cfg.repeats), cfg.algos):
        tasks.append((target, tuple(sources), alpha, repeat, algo, datasets[target],
                      tuple(datasets[s] for s in sources), ParamGrid.preset(algo, cfg.grid), cfg))
    rows = []
    for task, row in zip(tasks, _map(_generalized_cell, tasks, cfg.jobs)):
        if row is None:
            log.warning("skipped %s <- %s alpha=%g repeat=%d: target prefix smaller than %d rows",
                        task[0], "+".join(task[1]), task[2], task[3], cfg.k_inner)
            continue
        rows.append(row)
    return rows


def generalized_csv(rows) -> str:
    return _csv_text(GENERALIZED_HEADER, (r.cells() for r in rows))


GEN_SUMMARY_HEADER = ("target", "sources", "alpha", "algo", "repeats", "median_generalized_s",
                      "median_normal_s", "generalized_wins")


def generalized_summary(rows) -> list:
    """Median MAE per (target, sources, alpha, algo); ties count as a win."""
    groups = {}
    for r in rows:
        groups.setdefault((r.target, r.sources, r.alpha, r.algo), []).append(r)
    out = []
    for (target, sources, alpha, algo), items in groups.items():
        mg = float(np.median([r.mae_generalized for r in items]))
        mn = float(np.median([r.mae_normal for r in items]))
        out.append((target, sources, alpha, algo, len(items), mg, mn, mg <= mn))
    return out


def generalized_summary_csv(rows) -> str:
    return _csv_text(GEN_SUMMARY_HEADER, (
        (t, "+".join(s), f"{a:g}", algo, k, f"{mg:.6f}", f"{mn:.6f}", int(win))
        for t, s, a, algo, k, mg, mn, win in generalized_summary(rows)))


# -- prediction point timing --------------------------------------------------

PREDICTION_HEADER = ("airport", "runway", "flights", "distance_nm", "speed_kt", "seconds_to_threshold")


def prediction_point_summary(snapshots: pd.DataFrame) -> pd.DataFrame:
    """Per (airport, runway) mean snapshot distance, speed and per-flight time to threshold."""
    df = snapshots.copy()
    df["runway"] = df["runway"].astype(str)
    df["seconds_to_threshold"] = df["distance_nm"] / df["speed_kt"] * 3600.0
    g = df.groupby(["airport", "runway"], sort=True)
    out = pd.DataFrame({
        "flights": g.size(),
        "distance_nm": g["distance_nm"].mean(),
        "speed_kt": g["speed_kt"].mean(),
        "seconds_to_threshold": g["seconds_to_threshold"].mean(),
    }).reset_index()
    return out[list(PREDICTION_HEADER)]


def prediction_point_csv(summary: pd.DataFrame) -> str:
    return summary.to_csv(index=False, float_format="%.4f", lineterminator="\n")


# -- plots ------------------------------------------------------------------

def _figure(width, height):
    import matplotlib
    from matplotlib.figure import Figure

    matplotlib.rcParams["svg.hashsalt"] = "arot"
    matplotlib.rcParams["svg.fonttype"] = "path"
    return Figure(figsize=(width, height))


def _save_svg(fig, path):
    fig.savefig(path, format="svg", metadata={"Date": None})
    return path


def plot_unseen(report: UnseenReport, airport: str, path: str) -> str:
    """Box plot of outer-fold MAE per (variant, algorithm) for one airport."""
    keys = [k for k in report.reports if k[0] == airport]
    fig = _figure(max(4.0, 0.8 * len(keys) + 1.5), 4.0)
    ax = fig.add_subplot(1, 1, 1)
    ax.boxplot([report.reports[k].maes for k in keys])
    ax.set_xticks(range(1, len(keys) + 1))
    ax.set_xticklabels([f"{v[:3]}\n{a}" for _, v, a in keys])
    ax.set_ylabel("MAE (s)")
    ax.set_title(f"{airport}: nested CV MAE")
    fig.tight_layout()
    return _save_svg(fig, path)


def plot_generalized(rows, sources: tuple, target: str, algo: str, path: str) -> str:
    """Generalized vs Normal MAE across alpha for one case and algorithm."""
    sel = [r for r in rows if r.sources == sources and r.target == target and r.algo == algo]
    alphas = sorted({r.alpha for r in sel})
    fig = _figure(max(5.0, 0.9 * len(alphas) + 1.5), 4.0)
    ax = fig.add_subplot(1, 1, 1)
    pos_g = [i * 3 + 1 for i in range(len(alphas))]
    pos_n = [i * 3 + 2 for i in range(len(alphas))]
    if alphas:
        bg = ax.boxplot([[r.mae_generalized for r in sel if r.alpha == a] for a in alphas],
                        positions=pos_g, patch_artist=True)
        bn = ax.boxplot([[r.mae_normal for r in sel if r.alpha == a] for a in alphas],
                        positions=pos_n, patch_artist=True)
        for b in bg["boxes"]:
            b.set_facecolor("#9ecae1")
        for b in bn["boxes"]:
            b.set_facecolor("#fdae6b")
        ax.legend([bg["boxes"][0], bn["boxes"][0]], ["generalized", "normal"])
        ax.set_xticks([p + 0.5 for p in pos_g])
        ax.set_xticklabels([f"{a:g}" for a in alphas])
    ax.set_xlabel("alpha (target fraction in training)")
    ax.set_ylabel("MAE (s)")
    ax.set_title(f"{'+'.join(sources)} -> {target} ({algo})")
    fig.tight_layout()
    return _save_svg(fig, path)


# -- file outputs -----------------------------------------------------------

def write_unseen_outputs(report: UnseenReport, out_dir: str) -> list:
    os.makedirs(out_dir, exist_ok=True)
    paths = [_write(os.path.join(out_dir, "unseen_report.csv"), report.to_csv()),
             _write(os.path.join(out_dir, "unseen_summary.csv"), report.summary_csv())]
    for ap in dict.fromkeys(k[0] for k in report.reports):
        paths.append(plot_unseen(report, ap, os.path.join(out_dir, f"unseen_{ap}.svg")))
    return paths


def write_generalized_outputs(rows, out_dir: str) -> list:
    os.makedirs(out_dir, exist_ok=True)
    paths = [_write(os.path.join(out_dir, "generalized_report.csv"), generalized_csv(rows)),
             _write(os.path.join(out_dir, "generalized_summary.csv"), generalized_summary_csv(rows))]
    cases = dict.fromkeys((r.sources, r.target, r.algo) for r in rows)
    for sources, target, algo in cases:
        name = f"generalized_{'+'.join(sources)}_to_{target}_{algo}.svg"
        paths.append(plot_generalized(rows, sources, target, algo, os.path.join(out_dir, name)))
    return paths


def read_unseen_report(path: str, targets: Optional[dict] = None) -> UnseenReport:
    """Rebuild an ``UnseenReport`` from ``unseen_report.csv`` (params are kept as JSON)."""
    import json

    from arot.modelsel import CvReport, FoldResult

    df = pd.read_csv(path, dtype={"airport": str, "algo": str, "variant": str, "params": str})
    reports = {}
    for row in df.itertuples(index=False):
        key = (row.airport, row.variant, row.algo)
        rep = reports.setdefault(key, CvReport(row.algo, row.variant))
        rep.folds.append(FoldResult(int(row.repeat), int(row.fold), json.loads(row.params), float(row.mae_s), 0, 0))
    return UnseenReport(reports, targets or {})


def read_generalized_report(path: str) -> list:
    df = pd.read_csv(path, dtype={"target": str, "sources": str, "algo": str})
    return [GeneralizedRow(r.target, tuple(r.sources.split("+")), float(r.alpha), int(r.repeat), r.algo,
                           float(r.mae_generalized_s), float(r.mae_normal_s), int(r.n_train_generalized),
                           int(r.n_train_normal), int(r.n_test)) for r in df.itertuples(index=False)]
