"""Read the region-occupancy, surveillance-track, weather and runway CSV files,
join them into per-flight records and extract each arrival's runway
occupancy time.
"""
from __future__ import annotations

import csv
import logging
import math
import os
from collections import defaultdict
from dataclasses import dataclass, field, replace
from datetime import date, datetime, timezone
from typing import Optional

log = logging.getLogger(__name__)

REGION_COLUMNS = (
    "callsign", "airline", "aircraft_type", "max_landing_weight_kg", "origin", "destination",
    "flight_date", "gate_assigned", "runway_assigned", "region_name", "region_type",
    "time_entered", "time_exited", "occupancy_time_s",
)
TRACK_COLUMNS = (
    "timestamp", "callsign", "origin", "destination", "x_m", "y_m", "z_m",
    "flight_level", "heading_deg", "speed_kt",
)
WEATHER_COLUMNS = (
    "timestamp", "temperature_f", "visibility_mi", "wind_dir_deg", "wind_speed_kt",
    "pressure_altimeter_in",
)
RUNWAY_COLUMNS = (
    "airport", "runway_name", "length_ft", "width_ft", "altitude_ft", "true_heading_deg",
    "threshold_x_m", "threshold_y_m", "far_end_x_m", "far_end_y_m",
)
REGION_TYPES = ("TMA", "Runway", "Taxiway", "Ramp", "Gate")

MAX_REJECT_FRACTION = 0.10
FT_TO_M = 0.3048
# track samples are attached to a flight whose region intervals lie within this margin
TRACK_WINDOW_S = 2 * 3600.0


class IngestError(Exception):
    """Unrecoverable input problem (missing file or column, too many bad rows)."""


class RowError(ValueError):
    pass


@dataclass(frozen=True)
class RegionOccupancy:
    callsign: str
    airline: str
    aircraft_type: str
    max_landing_weight: float
    origin: str
    destination: str
    flight_date: date
    gate_assigned: str
    runway_assigned: str
    region_name: str
    region_type: str
    time_entered: datetime
    time_exited: datetime
    occupancy_time: float

    @property
    def key(self):
        return (self.callsign, self.origin, self.destination, self.flight_date)


@dataclass(frozen=True)
class TrackSample:
    timestamp: datetime
    callsign: str
    x: float
    y: float
    z: float
    origin: str
    destination: str
    flight_level: float
    heading: float
    speed: float


@dataclass(frozen=True)
class WeatherObservation:
    timestamp: datetime
    temperature: float
    visibility: float
    wind_direction: float
    wind_speed: float
    pressure_altimeter: float


@dataclass(frozen=True)
class RunwayInfo:
    airport: str
    runway_name: str
    length: float
    width: float
    altitude: float
    true_heading: float
    threshold_x: float
    threshold_y: float
    far_end_x: float
    far_end_y: float


@dataclass(frozen=True)
class FlightRecord:
    callsign: str
    origin: str
    destination: str
    flight_date: date
    airline: str
    aircraft_type: str
    max_landing_weight: float
    gate_assigned: str
    runway_assigned: str
    regions: tuple
    tracks: tuple
    arot: Optional[float] = None
    threshold_crossing_time: Optional[datetime] = None

    @property
    def key(self):
        return (self.callsign, self.origin, self.destination, self.flight_date)

    @property
    def flight_id(self) -> str:
        return f"{self.callsign}|{self.origin}|{self.destination}|{self.flight_date.isoformat()}"


@dataclass
class FileStats:
    rows: int = 0
    rejected: int = 0
    reasons: dict = field(default_factory=dict)

    def reject(self, reason: str):
        self.rejected += 1
        self.reasons[reason] = self.reasons.get(reason, 0) + 1


@dataclass
class RawBundle:
    regions: tuple
    tracks: tuple
    weather: tuple
    runways: tuple
    stats: dict

    def runway_table(self) -> dict:
        return {r.runway_name: r for r in self.runways}


@dataclass
class JoinStats:
    keys: int = 0
    emitted: int = 0
    no_runway: int = 0
    no_tracks: int = 0
    conflicting: int = 0

    @property
    def dropped(self) -> int:
        return self.no_runway + self.no_tracks + self.conflicting


# -- value parsing ----------------------------------------------------------

def parse_timestamp(text: str) -> datetime:
    """ISO-8601 to an aware UTC datetime; naive values are taken as UTC."""
    s = text.strip()
    if s.endswith(("Z", "z")):
        s = s[:-1] + "+00:00"
    try:
        dt = datetime.fromisoformat(s)
    except ValueError as exc:
        raise RowError(f"bad timestamp {text!r}") from exc
    if dt.tzinfo is None:
        return dt.replace(tzinfo=timezone.utc)
    return dt.astimezone(timezone.utc)


def format_timestamp(dt: datetime) -> str:
    return dt.astimezone(timezone.utc).isoformat(timespec="milliseconds").replace("+00:00", "Z")


def _num(row, col) -> float:
    raw = row[col]
    try:
        v = float(raw)
    except (TypeError, ValueError) as exc:
        raise RowError(f"non-numeric {col}={raw!r}") from exc
    if not math.isfinite(v):
        raise RowError(f"non-finite {col}")
    return v


def _text(row, col) -> str:
    v = (row[col] or "").strip()
    if not v:
        raise RowError(f"empty {col}")
    return v


def _date(row, col) -> date:
    try:
        return date.fromisoformat(row[col].strip())
    except (AttributeError, ValueError) as exc:
        raise RowError(f"bad date {col}={row[col]!r}") from exc


def parse_region_row(row) -> RegionOccupancy:
    entered = parse_timestamp(row["time_entered"])
    exited = parse_timestamp(row["time_exited"])
    occ = _num(row, "occupancy_time_s")
    if exited < entered:
        raise RowError("time_exited before time_entered")
    if abs((exited - entered).total_seconds() - occ) > 1.0:
        raise RowError("occupancy_time inconsistent with interval")
    rtype = _text(row, "region_type")
    if rtype not in REGION_TYPES:
        raise RowError(f"unknown region_type {rtype!r}")
    mlw = _num(row, "max_landing_weight_kg")
    if mlw <= 0:
        raise RowError("max_landing_weight must be positive")
    return RegionOccupancy(
        callsign=_text(row, "callsign"),
        airline=_text(row, "airline"),
        aircraft_type=_text(row, "aircraft_type"),
        max_landing_weight=mlw,
        origin=_text(row, "origin"),
        destination=_text(row, "destination"),
        flight_date=_date(row, "flight_date"),
        gate_assigned=_text(row, "gate_assigned"),
        runway_assigned=_text(row, "runway_assigned"),
        region_name=_text(row, "region_name"),
        region_type=rtype,
        time_entered=entered,
        time_exited=exited,
        occupancy_time=occ,
    )


def parse_track_row(row) -> TrackSample:
    heading = _num(row, "heading_deg")
    speed = _num(row, "speed_kt")
    if not 0 <= heading < 360:
        raise RowError("heading outside [0, 360)")
    if speed < 0:
        raise RowError("negative speed")
    return TrackSample(
        timestamp=parse_timestamp(row["timestamp"]),
        callsign=_text(row, "callsign"),
        x=_num(row, "x_m"),
        y=_num(row, "y_m"),
        z=_num(row, "z_m"),
        origin=_text(row, "origin"),
        destination=_text(row, "destination"),
        flight_level=_num(row, "flight_level"),
        heading=heading,
        speed=speed,
    )


def parse_weather_row(row) -> WeatherObservation:
    obs = WeatherObservation(
        timestamp=parse_timestamp(row["timestamp"]),
        temperature=_num(row, "temperature_f"),
        visibility=_num(row, "visibility_mi"),
        wind_direction=_num(row, "wind_dir_deg"),
        wind_speed=_num(row, "wind_speed_kt"),
        pressure_altimeter=_num(row, "pressure_altimeter_in"),
    )
    if obs.visibility < 0 or obs.wind_speed < 0:
        raise RowError("negative visibility or wind speed")
    if not 0 <= obs.wind_direction < 360:
        raise RowError("wind direction outside [0, 360)")
    return obs


def parse_runway_row(row) -> RunwayInfo:
    rw = RunwayInfo(
        airport=_text(row, "airport"),
        runway_name=_text(row, "runway_name"),
        length=_num(row, "length_ft"),
        width=_num(row, "width_ft"),
        altitude=_num(row, "altitude_ft"),
        true_heading=_num(row, "true_heading_deg"),
        threshold_x=_num(row, "threshold_x_m"),
        threshold_y=_num(row, "threshold_y_m"),
        far_end_x=_num(row, "far_end_x_m"),
        far_end_y=_num(row, "far_end_y_m"),
    )
    if rw.length <= 0 or rw.width <= 0:
        raise RowError("runway length and width must be positive")
    seg = math.hypot(rw.far_end_x - rw.threshold_x, rw.far_end_y - rw.threshold_y)
    if seg == 0:
        raise RowError("threshold and far end coincide")
    if abs(seg - rw.length * FT_TO_M) > 0.05 * rw.length * FT_TO_M:
        raise RowError("runway segment inconsistent with length")
    return rw


def read_csv(path, columns, parse_row, label):
    """Parse one CSV file; returns (rows, FileStats)."""
    if not os.path.exists(path):
        raise IngestError(f"{label} file not found: {path}")
    stats = FileStats()
    out = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        for col in columns:
            if col not in header:
                raise IngestError(f"{label} file {path} is missing column {col!r}")
        for row in reader:
            stats.rows += 1
            try:
                if None in row or any(row[c] is None for c in columns):
                    raise RowError("wrong field count")
                out.append(parse_row(row))
            except RowError as exc:
                stats.reject(str(exc))
    if stats.rows and stats.rejected > MAX_REJECT_FRACTION * stats.rows:
        raise IngestError(
            f"{label} file {path}: {stats.rejected} of {stats.rows} rows malformed "
            f"(limit {MAX_REJECT_FRACTION:.0%})"
        )
    if stats.rejected:
        log.warning("%s: skipped %d of %d rows", label, stats.rejected, stats.rows)
    return out, stats


def parse_bundle(region_path, track_path, weather_path, runway_path) -> RawBundle:
    regions, rs = read_csv(region_path, REGION_COLUMNS, parse_region_row, "regions")
    tracks, ts = read_csv(track_path, TRACK_COLUMNS, parse_track_row, "tracks")
    weather, ws = read_csv(weather_path, WEATHER_COLUMNS, parse_weather_row, "weather")
    runways, ns = read_csv(runway_path, RUNWAY_COLUMNS, parse_runway_row, "runways")
    weather.sort(key=lambda w: w.timestamp)
    return RawBundle(
        regions=tuple(regions),
        tracks=tuple(tracks),
        weather=tuple(weather),
        runways=tuple(runways),
        stats={"regions": rs, "tracks": ts, "weather": ws, "runways": ns},
    )


def parse_directory(path) -> RawBundle:
    """``parse_bundle`` on the four standard file names inside ``path``."""
    return parse_bundle(
        os.path.join(path, "regions.csv"),
        os.path.join(path, "tracks.csv"),
        os.path.join(path, "weather.csv"),
        os.path.join(path, "runways.csv"),
    )


# -- join -------------------------------------------------------------------

_STATIC = ("airline", "aircraft_type", "max_landing_weight", "gate_assigned", "runway_assigned")


def join_flights(bundle: RawBundle):
    """Group region rows by flight key and attach the flight's track samples.

    Track rows carry no flight date, so a sample belongs to the flight with
    the same callsign/origin/destination whose region intervals, widened by
    two hours, contain the sample time (closest interval wins). Samples that
    match no flight form orphan keys dated by their UTC day.

    Returns ``(records, JoinStats)``.
    """
    by_key = defaultdict(list)
    for r in bundle.regions:
        by_key[r.key].append(r)

    spans = defaultdict(list)
    for key, rows in by_key.items():
        lo = min(r.time_entered for r in rows).timestamp() - TRACK_WINDOW_S
        hi = max(r.time_exited for r in rows).timestamp() + TRACK_WINDOW_S
        spans[key[:3]].append((lo, hi, key))

    tracks_by_key = defaultdict(list)
    for s in bundle.tracks:
        t = s.timestamp.timestamp()
        best, best_d = None, math.inf
        for lo, hi, key in spans.get((s.callsign, s.origin, s.destination), ()):
            if lo <= t <= hi:
                d = abs(t - 0.5 * (lo + hi))
                if d < best_d:
                    best, best_d = key, d
        if best is None:
            best = (s.callsign, s.origin, s.destination, s.timestamp.date())
        tracks_by_key[best].append(s)

    stats = JoinStats()
    keys = sorted(set(by_key) | set(tracks_by_key))
    stats.keys = len(keys)
    records = []
    for key in keys:
        rows = by_key.get(key, [])
        if not any(r.region_type == "Runway" for r in rows):
            stats.no_runway += 1
            continue
        samples = tracks_by_key.get(key, [])
        if not samples:
            stats.no_tracks += 1
            continue
        static = {tuple(getattr(r, f) for f in _STATIC) for r in rows}
        if len(static) != 1:
            stats.conflicting += 1
            continue
        samples = sorted(samples, key=lambda s: s.timestamp)
        tracks = [samples[0]]
        for s in samples[1:]:
            if s.timestamp > tracks[-1].timestamp:
                tracks.append(s)
        airline, actype, mlw, gate, runway = next(iter(static))
        records.append(FlightRecord(
            callsign=key[0], origin=key[1], destination=key[2], flight_date=key[3],
            airline=airline, aircraft_type=actype, max_landing_weight=mlw,
            gate_assigned=gate, runway_assigned=runway,
            regions=tuple(sorted(rows, key=lambda r: (r.time_entered, r.time_exited, r.region_name))),
            tracks=tuple(tracks),
        ))
    stats.emitted = len(records)
    return records, stats


class NoLandingOccupancy(ValueError):
    pass


def extract_arot(flight: FlightRecord) -> float:
    """Occupancy time of the earliest Runway region named like the assigned runway."""
    return landing_occupancy(flight).occupancy_time


def landing_occupancy(flight: FlightRecord) -> RegionOccupancy:
    matches = [
        r for r in flight.regions
        if r.region_type == "Runway" and r.region_name == flight.runway_assigned
    ]
    if not matches:
        raise NoLandingOccupancy(f"{flight.flight_id}: no occupancy of runway {flight.runway_assigned}")
    return min(matches, key=lambda r: r.time_entered)


def label_flights(records):
    """Attach AROT and threshold-crossing time; returns (labelled, n_excluded)."""
    out, excluded = [], 0
    for rec in records:
        try:
            occ = landing_occupancy(rec)
        except NoLandingOccupancy:
            excluded += 1
            continue
        if not occ.occupancy_time > 0:
            excluded += 1
            continue
        out.append(replace(rec, arot=occ.occupancy_time, threshold_crossing_time=occ.time_entered))
    return out, excluded


# -- writers ----------------------------------------------------------------

def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(float(v))  # plain repr for numpy scalars too
    if isinstance(v, datetime):
        return format_timestamp(v)
    if isinstance(v, date):
        return v.isoformat()
    return str(v)


def write_rows(path, columns, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def region_row(r: RegionOccupancy):
    return (r.callsign, r.airline, r.aircraft_type, r.max_landing_weight, r.origin, r.destination,
            r.flight_date, r.gate_assigned, r.runway_assigned, r.region_name, r.region_type,
            r.time_entered, r.time_exited, r.occupancy_time)


def track_row(s: TrackSample):
    return (s.timestamp, s.callsign, s.origin, s.destination, s.x, s.y, s.z,
            s.flight_level, s.heading, s.speed)


def weather_row(w: WeatherObservation):
    return (w.timestamp, w.temperature, w.visibility, w.wind_direction, w.wind_speed,
            w.pressure_altimeter)


def runway_row(r: RunwayInfo):
    return (r.airport, r.runway_name, r.length, r.width, r.altitude, r.true_heading,
            r.threshold_x, r.threshold_y, r.far_end_x, r.far_end_y)


def write_records(directory, records, weather, runways):
    """Serialize joined flights back into the four input files."""
    os.makedirs(directory, exist_ok=True)
    write_rows(os.path.join(directory, "regions.csv"), REGION_COLUMNS,
               [region_row(r) for rec in records for r in rec.regions])
    write_rows(os.path.join(directory, "tracks.csv"), TRACK_COLUMNS,
               [track_row(s) for rec in records for s in rec.tracks])
    write_rows(os.path.join(directory, "weather.csv"), WEATHER_COLUMNS, [weather_row(w) for w in weather])
    write_rows(os.path.join(directory, "runways.csv"), RUNWAY_COLUMNS, [runway_row(r) for r in runways])
