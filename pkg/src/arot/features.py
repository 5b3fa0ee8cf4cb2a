"""Per-flight model inputs: runway and gate equivalences, the approach
snapshot near the final approach fix, weather, and short-term runway usage.
"""
from __future__ import annotations

import bisect
import logging
import math
from collections import defaultdict
from dataclasses import dataclass, field
from datetime import datetime
from typing import NamedTuple, Sequence

import numpy as np
import pandas as pd

from arot.ingest import FlightRecord, RunwayInfo, WeatherObservation

log = logging.getLogger(__name__)

NM = 1852.0

FEATURE_COLUMNS = (
    "runway_assigned",
    "runway_length",
    "runway_width",
    "runway_altitude",
    "runway_true_heading",
    "gate_assigned",
    "last_point_to_runway_distance",
    "aircraft_type",
    "max_landing_weight",
    "distance_to_threshold",
    "flight_level",
    "true_heading",
    "temperature",
    "visibility",
    "wind_direction",
    "wind_speed",
    "pressure_altimeter",
    "landings_last_30min",
    "avg_arot_last_30min",
)
CATEGORICAL_FEATURES = ("runway_assigned", "gate_assigned", "aircraft_type")
# numerical stand-ins for the categorical features above
EQUIVALENT_FEATURES = (
    "runway_length",
    "runway_width",
    "runway_altitude",
    "runway_true_heading",
    "last_point_to_runway_distance",
    "max_landing_weight",
)
VARIANTS = ("categorical", "numerical", "mixed")
VARIANT_COLUMNS = {
    "categorical": tuple(c for c in FEATURE_COLUMNS if c not in EQUIVALENT_FEATURES),
    "numerical": tuple(c for c in FEATURE_COLUMNS if c not in CATEGORICAL_FEATURES),
    "mixed": FEATURE_COLUMNS,
}
TARGET_COLUMN = "arot_s"
TABLE_COLUMNS = FEATURE_COLUMNS + (TARGET_COLUMN, "airport")

DEFAULT_FAF_NM = 5.0
DEFAULT_STALENESS_MIN = 90.0
DEFAULT_WINDOW_S = 1800.0
DEFAULT_AROT_S = 50.0
HEADING_GATE_DEG = 45.0


class FlightExcluded(ValueError):
    """The flight cannot produce a complete feature row."""


class NoPredictionPoint(FlightExcluded):
    pass


class NoWeather(FlightExcluded):
    pass


class NoLandingRollout(FlightExcluded):
    pass


@dataclass(frozen=True)
class ApproachSnapshot:
    distance_to_threshold: float
    flight_level: float
    true_heading: float
    speed: float
    snapshot_time: datetime

    @property
    def seconds_to_threshold(self) -> float:
        return self.distance_to_threshold / self.speed * 3600.0


class Landing(NamedTuple):
    runway: str
    time: float  # epoch seconds of threshold crossing
    arot: float


def _epoch(t) -> float:
    return t.timestamp() if isinstance(t, datetime) else float(t)


def heading_difference(a: float, b: float) -> float:
    return abs((a - b + 180.0) % 360.0 - 180.0)


def point_segment_distance(px, py, ax, ay, bx, by) -> float:
    """Euclidean distance from point P to segment AB in the plane."""
    dx, dy = bx - ax, by - ay
    seg2 = dx * dx + dy * dy
    if seg2 == 0:
        return math.hypot(px - ax, py - ay)
    u = ((px - ax) * dx + (py - ay) * dy) / seg2
    u = min(1.0, max(0.0, u))
    return math.hypot(px - (ax + u * dx), py - (ay + u * dy))


def locate_prediction_point(flight: FlightRecord, runway: RunwayInfo,
                            faf_distance: float = DEFAULT_FAF_NM) -> ApproachSnapshot:
    """Earliest airborne sample inside the FAF ring and aligned with the runway."""
    crossing = flight.threshold_crossing_time
    for s in flight.tracks:
        if crossing is not None and s.timestamp >= crossing:
            break
        if s.flight_level <= 0 or s.speed <= 0:
            continue
        d = math.hypot(s.x - runway.threshold_x, s.y - runway.threshold_y) / NM
        if 0 < d <= faf_distance and heading_difference(s.heading, runway.true_heading) <= HEADING_GATE_DEG:
            return ApproachSnapshot(d, s.flight_level, s.heading, s.speed, s.timestamp)
    raise NoPredictionPoint(f"{flight.flight_id}: no aligned sample within {faf_distance} NM")


class WeatherIndex:
    """Time-sorted observations with bisect lookup."""

    def __init__(self, observations: Sequence[WeatherObservation]):
        self.observations = sorted(observations, key=lambda w: w.timestamp)
        self.times = [w.timestamp.timestamp() for w in self.observations]


def attach_weather(when, observations, max_staleness: float = DEFAULT_STALENESS_MIN) -> WeatherObservation:
    """Latest observation at or before ``when`` no older than ``max_staleness`` minutes."""
    idx = observations if isinstance(observations, WeatherIndex) else WeatherIndex(observations)
    if isinstance(when, ApproachSnapshot):
        when = when.snapshot_time
    t = _epoch(when)
    i = bisect.bisect_right(idx.times, t) - 1
    if i < 0 or t - idx.times[i] > max_staleness * 60.0:
        raise NoWeather(f"no weather within {max_staleness} min before {when}")
    return idx.observations[i]


class LandingLog:
    """Landings grouped per runway, sorted by threshold-crossing time."""

    def __init__(self, landings: Sequence[Landing]):
        per = defaultdict(list)
        for ld in landings:
            per[ld.runway].append((float(ld.time), float(ld.arot)))
        self.times = {}
        self.arots = {}
        for rw, items in per.items():
            items.sort(key=lambda it: it[0])  # stable for equal times
            self.times[rw] = [it[0] for it in items]
            self.arots[rw] = [it[1] for it in items]


def runway_rolling_stats(landings, runway: str, t, window: float = DEFAULT_WINDOW_S,
                         default_arot: float = DEFAULT_AROT_S):
    """Count and mean AROT of landings on ``runway`` in ``[t - window, t)``.

    An empty window reports the most recent earlier AROT on the runway, or
    ``default_arot`` when there is none.
    """
    log_ = landings if isinstance(landings, LandingLog) else LandingLog(landings)
    t = _epoch(t)
    times = log_.times.get(runway, [])
    arots = log_.arots.get(runway, [])
    lo = bisect.bisect_left(times, t - window)
    hi = bisect.bisect_left(times, t)
    count = hi - lo
    if count:
        return count, math.fsum(arots[lo:hi]) / count
    if hi > 0:
        return 0, arots[hi - 1]
    return 0, default_arot


def last_point_distance(flight: FlightRecord, runway: RunwayInfo) -> float:
    """Distance (NM) from the final track sample to the landing runway segment."""
    last = flight.tracks[-1] if flight.tracks else None
    if last is None or flight.threshold_crossing_time is None or last.timestamp <= flight.threshold_crossing_time:
        raise NoLandingRollout(f"{flight.flight_id}: no track samples after threshold crossing")
    d = point_segment_distance(last.x, last.y, runway.threshold_x, runway.threshold_y,
                               runway.far_end_x, runway.far_end_y)
    return d / NM


@dataclass
class FeatureStats:
    flights: int = 0
    rows: int = 0
    no_runway_info: int = 0
    no_prediction_point: int = 0
    no_weather: int = 0
    no_rollout: int = 0

    @property
    def excluded(self) -> int:
        return self.no_runway_info + self.no_prediction_point + self.no_weather + self.no_rollout


@dataclass
class FeatureResult:
    table: pd.DataFrame
    snapshots: pd.DataFrame
    stats: FeatureStats


def compute_features(flights: Sequence[FlightRecord], runways, weather, airport: str,
                     faf_distance: float = DEFAULT_FAF_NM,
                     max_staleness: float = DEFAULT_STALENESS_MIN,
                     default_arot: float = DEFAULT_AROT_S) -> FeatureResult:
    """Feature table (mixed layout + target + airport) for AROT-labelled flights.

    Rows are ordered by threshold-crossing time, then flight id.
    """
    rw_table = runways if isinstance(runways, dict) else {r.runway_name: r for r in runways}
    wx = weather if isinstance(weather, WeatherIndex) else WeatherIndex(weather)
    labelled = sorted((f for f in flights if f.arot is not None),
                      key=lambda f: (f.threshold_crossing_time, f.flight_id))
    landings = LandingLog([Landing(f.runway_assigned, f.threshold_crossing_time.timestamp(), f.arot)
                           for f in labelled])
    stats = FeatureStats(flights=len(labelled))
    rows, ids, snaps = [], [], []
    for f in labelled:
        rw = rw_table.get(f.runway_assigned)
        if rw is None:
            stats.no_runway_info += 1
            continue
        try:
            snap = locate_prediction_point(f, rw, faf_distance)
        except NoPredictionPoint:
            stats.no_prediction_point += 1
            continue
        try:
            obs = attach_weather(snap.snapshot_time, wx, max_staleness)
        except NoWeather:
            stats.no_weather += 1
            continue
        try:
            lp = last_point_distance(f, rw)
        except NoLandingRollout:
            stats.no_rollout += 1
            continue
        count, avg = runway_rolling_stats(landings, f.runway_assigned, f.threshold_crossing_time,
                                          DEFAULT_WINDOW_S, default_arot)
        rows.append((
            f.runway_assigned, rw.length, rw.width, rw.altitude, rw.true_heading,
            f.gate_assigned, lp, f.aircraft_type, f.max_landing_weight,
            snap.distance_to_threshold, snap.flight_level, snap.true_heading,
            obs.temperature, obs.visibility, obs.wind_direction, obs.wind_speed,
            obs.pressure_altimeter, float(count), avg, f.arot, airport,
        ))
        ids.append(f.flight_id)
        snaps.append((airport, f.runway_assigned, f.flight_id, snap.distance_to_threshold,
                      snap.speed, snap.seconds_to_threshold))
    stats.rows = len(rows)
    table = pd.DataFrame(rows, columns=list(TABLE_COLUMNS), index=pd.Index(ids, name="flight_id"))
    snapshots = pd.DataFrame(snaps, columns=["airport", "runway", "flight_id", "distance_nm",
                                             "speed_kt", "seconds_to_threshold"])
    if stats.excluded:
        log.info("%s: %d of %d flights excluded from features", airport, stats.excluded, stats.flights)
    return FeatureResult(table, snapshots, stats)


@dataclass
class Dataset:
    variant: str
    columns: tuple
    X: pd.DataFrame
    y: np.ndarray
    airport: np.ndarray
    row_ids: np.ndarray
    excluded: int = 0
    categorical: tuple = field(default=())

    def __len__(self) -> int:
        return len(self.y)

    def take(self, rows) -> "Dataset":
        rows = np.asarray(rows, dtype=np.intp)
        return Dataset(self.variant, self.columns, self.X.iloc[rows].reset_index(drop=True),
                       self.y[rows], self.airport[rows], self.row_ids[rows], 0, self.categorical)

    def with_target(self, y) -> "Dataset":
        return Dataset(self.variant, self.columns, self.X, np.asarray(y, dtype=np.float64),
                       self.airport, self.row_ids, self.excluded, self.categorical)

    @staticmethod
    def concat(parts) -> "Dataset":
        parts = list(parts)
        first = parts[0]
        if any(p.columns != first.columns for p in parts):
            raise ValueError("datasets must share a column schema")
        return Dataset(
            first.variant, first.columns,
            pd.concat([p.X for p in parts], ignore_index=True),
            np.concatenate([p.y for p in parts]),
            np.concatenate([p.airport for p in parts]),
            np.concatenate([p.row_ids for p in parts]),
            0, first.categorical,
        )


def build_dataset(table: pd.DataFrame, variant: str) -> Dataset:
    """Project the feature table onto one variant's columns.

    Rows with any non-finite numerical feature or target are dropped and
    counted in ``Dataset.excluded``.
    """
    if variant not in VARIANT_COLUMNS:
        raise ValueError(f"unknown variant {variant!r}")
    cols = VARIANT_COLUMNS[variant]
    numeric = [c for c in cols if c not in CATEGORICAL_FEATURES]
    num = table[numeric].to_numpy(dtype=np.float64)
    target = table[TARGET_COLUMN].to_numpy(dtype=np.float64)
    ok = np.isfinite(num).all(axis=1) & np.isfinite(target)
    for c in cols:
        if c in CATEGORICAL_FEATURES:
            ok &= table[c].astype(str).str.len().to_numpy() > 0
    keep = np.flatnonzero(ok)
    X = table.iloc[keep][list(cols)].reset_index(drop=True)
    for c in numeric:
        X[c] = X[c].astype(np.float64)
    for c in cols:
        if c in CATEGORICAL_FEATURES:
            X[c] = X[c].astype(str)
    airport = table["airport"].to_numpy()[keep].astype(str) if "airport" in table else np.full(len(keep), "")
    return Dataset(
        variant=variant,
        columns=cols,
        X=X,
        y=target[keep],
        airport=airport,
        row_ids=keep.astype(np.intp),
        excluded=int(len(table) - len(keep)),
        categorical=tuple(c for c in cols if c in CATEGORICAL_FEATURES),
    )


def write_feature_table(table: pd.DataFrame, path):
    table.to_csv(path, columns=list(TABLE_COLUMNS), index=False, float_format="%.6f", lineterminator="\n")


def read_feature_table(path) -> pd.DataFrame:
    dtypes = {c: str for c in CATEGORICAL_FEATURES}
    dtypes["airport"] = str
    table = pd.read_csv(path, dtype=dtypes, keep_default_na=False)
    missing = [c for c in TABLE_COLUMNS if c not in table.columns]
    if missing:
        raise ValueError(f"{path}: missing columns {missing}")
    for c in TABLE_COLUMNS:
        if c not in CATEGORICAL_FEATURES and c != "airport":
            table[c] = pd.to_numeric(table[c], errors="coerce")
    return table[list(TABLE_COLUMNS)]
