import os
import random
from datetime import date, datetime, timedelta, timezone

import pytest
from hypothesis import given, strategies as st

from arot.ingest import (
    REGION_COLUMNS, RUNWAY_COLUMNS, TRACK_COLUMNS, WEATHER_COLUMNS, IngestError, NoLandingOccupancy,
    extract_arot, join_flights, label_flights, parse_bundle, parse_directory, parse_timestamp,
    write_records, write_rows,
)

T0 = datetime(2019, 5, 16, 14, 0, tzinfo=timezone.utc)
RUNWAY = ("KDCA", "1", 7169, 150, 15, 0.0, 0.0, 0.0, 0.0, 2185.1)


def region(cs, name, rtype, start_s, dur_s, runway="1", actype="A320", origin="KATL"):
    t_in = T0 + timedelta(seconds=start_s)
    return (cs, cs[:3], actype, 64500.0, origin, "KDCA", date(2019, 5, 16), "B12", runway, name, rtype,
            t_in, t_in + timedelta(seconds=dur_s), float(dur_s))


def track(cs, t_s, origin="KATL"):
    return (T0 + timedelta(seconds=t_s), cs, origin, "KDCA", 0.0, -9000.0 + 10 * t_s, 1000.0, 30.0, 0.0, 160.0)


def weather(t_s=0):
    return (T0 + timedelta(seconds=t_s), 75.0, 10.0, 320.0, 12.0, 29.92)


def write_bundle(d, regions, tracks, weathers=(None,), runways=(RUNWAY,)):
    os.makedirs(d, exist_ok=True)
    write_rows(os.path.join(d, "regions.csv"), REGION_COLUMNS, regions)
    write_rows(os.path.join(d, "tracks.csv"), TRACK_COLUMNS, tracks)
    write_rows(os.path.join(d, "weather.csv"), WEATHER_COLUMNS, [w or weather() for w in weathers])
    write_rows(os.path.join(d, "runways.csv"), RUNWAY_COLUMNS, runways)
    return d


def one_flight(cs="AAL1", start=0, runway_dur=41.0):
    regs = [region(cs, "TMA", "TMA", start - 600, 590), region(cs, "1", "Runway", start, runway_dur),
            region(cs, "TWY A", "Taxiway", start + runway_dur, 120)]
    return regs, [track(cs, start - 300 + 4 * i) for i in range(80)]


def test_three_region_rows(tmp_path):
    regs, trks = one_flight()
    b = parse_directory(write_bundle(str(tmp_path), regs, trks))
    assert len(b.regions) == 3 and b.stats["regions"].rejected == 0


def test_exit_before_entry_rejected(tmp_path):
    regs, trks = one_flight()
    bad = list(region("AAL9", "1", "Runway", 0, 30))
    bad[11], bad[12] = bad[12], bad[11]
    regs = regs * 4 + [tuple(bad)]
    b = parse_directory(write_bundle(str(tmp_path), regs, trks))
    assert b.stats["regions"].rejected == 1
    assert len(b.regions) == 12


def test_weather_rows_match_hand_parser(tmp_path):
    rng = random.Random(0)
    rows = []
    for i in range(50):
        rows.append((T0 + timedelta(minutes=60 * i), round(rng.uniform(20, 100), 1), rng.choice([0.25, 3.0, 10.0]),
                     float(rng.randrange(0, 360, 10)), float(rng.randint(0, 30)), round(rng.uniform(29, 31), 2)))
    regs, trks = one_flight()
    d = write_bundle(str(tmp_path), regs, trks, weathers=rows)
    with open(os.path.join(d, "weather.csv")) as fh:
        lines = fh.read().splitlines()[1:]
    b = parse_directory(d)
    assert len(b.weather) == 50
    for line, obs in zip(lines, b.weather):
        ts, *vals = line.split(",")
        assert obs.timestamp == datetime.fromisoformat(ts.replace("Z", "+00:00"))
        got = (obs.temperature, obs.visibility, obs.wind_direction, obs.wind_speed, obs.pressure_altimeter)
        assert got == tuple(float(v) for v in vals)


def test_weather_example_row(tmp_path):
    d = str(tmp_path)
    regs, trks = one_flight()
    write_bundle(d, regs, trks)
    with open(os.path.join(d, "weather.csv"), "w") as fh:
        fh.write(",".join(WEATHER_COLUMNS) + "\n2019-05-16T14:00:00Z,75.0,10.0,320,12,29.92\n")
    w = parse_directory(d).weather[0]
    assert (w.temperature, w.visibility, w.wind_direction, w.wind_speed, w.pressure_altimeter) == \
        (75.0, 10.0, 320.0, 12.0, 29.92)


def test_missing_file_and_column(tmp_path):
    regs, trks = one_flight()
    d = write_bundle(str(tmp_path), regs, trks)
    os.remove(os.path.join(d, "tracks.csv"))
    with pytest.raises(IngestError, match="not found"):
        parse_directory(d)
    write_bundle(d, regs, trks)
    with open(os.path.join(d, "runways.csv"), "w") as fh:
        fh.write("airport,runway_name,length_ft\nKDCA,1,7169\n")
    with pytest.raises(IngestError, match="width_ft"):
        parse_directory(d)


def test_too_many_bad_rows_is_fatal(tmp_path):
    regs, trks = one_flight()
    d = write_bundle(str(tmp_path), regs, trks)
    with open(os.path.join(d, "tracks.csv"), "a") as fh:
        for _ in range(20):
            fh.write("not-a-time,AAL1,KATL,KDCA,0,0,0,1,1,1\n")
    with pytest.raises(IngestError, match="malformed"):
        parse_directory(d)


def test_timestamps_normalised_to_utc():
    assert parse_timestamp("2019-05-16T10:00:00-04:00") == datetime(2019, 5, 16, 14, tzinfo=timezone.utc)
    assert parse_timestamp("2019-05-16T14:00:00") == datetime(2019, 5, 16, 14, tzinfo=timezone.utc)
    assert parse_timestamp("2019-05-16T14:00:00.250Z").microsecond == 250000


def test_join_single_and_missing_runway(tmp_path):
    regs, trks = one_flight("AAL1")
    orphan = [track("UAL5", 100 + i) for i in range(3)]
    b = parse_directory(write_bundle(str(tmp_path), regs, trks + orphan))
    records, stats = join_flights(b)
    assert [r.callsign for r in records] == ["AAL1"]
    assert stats.no_runway == 1 and stats.keys == 2
    assert stats.emitted + stats.dropped == stats.keys


def test_join_conflicting_static_fields(tmp_path):
    regs, trks = one_flight("AAL1")
    regs[2] = region("AAL1", "TWY A", "Taxiway", 41, 120, actype="B738")
    records, stats = join_flights(parse_directory(write_bundle(str(tmp_path), regs, trks)))
    assert records == [] and stats.conflicting == 1


def test_join_drops_flights_without_tracks(tmp_path):
    rng = random.Random(1)
    regs, trks = [], []
    for i in range(100):
        r, t = one_flight(f"AAL{i}", start=i * 900)
        regs += r
        trks.append(t)
    deleted = set(rng.sample(range(100), 7))
    tracks = [s for i, t in enumerate(trks) if i not in deleted for s in t]
    records, stats = join_flights(parse_directory(write_bundle(str(tmp_path), regs, tracks)))
    keys_regions = {f"AAL{i}" for i in range(100)}
    keys_tracks = {f"AAL{i}" for i in range(100) if i not in deleted}
    assert {r.callsign for r in records} == keys_regions & keys_tracks
    assert len(records) == 93 and stats.no_tracks == 7


def test_extract_arot_first_runway_occupancy(tmp_path):
    regs, trks = one_flight("AAL1", runway_dur=38.0)
    regs.append(region("AAL1", "1", "Runway", 400, 9))
    records, _ = join_flights(parse_directory(write_bundle(str(tmp_path), regs, trks)))
    assert extract_arot(records[0]) == 38.0
    labelled, excluded = label_flights(records)
    assert excluded == 0 and labelled[0].threshold_crossing_time == T0


def test_runway_name_mismatch_excluded(tmp_path):
    regs, trks = one_flight("AAL1")
    regs = [region("AAL1", r[9], r[10], (r[11] - T0).total_seconds(), r[13], runway="19") for r in regs]
    records, _ = join_flights(parse_directory(write_bundle(str(tmp_path), regs, trks)))
    with pytest.raises(NoLandingOccupancy):
        extract_arot(records[0])
    assert label_flights(records) == ([], 1)


def test_same_callsign_two_dates_joined_separately(tmp_path):
    r1, t1 = one_flight("AAL1", start=0)
    r2, t2 = one_flight("AAL1", start=86400)
    r2 = [tuple(list(r[:6]) + [date(2019, 5, 17)] + list(r[7:])) for r in r2]
    records, _ = join_flights(parse_directory(write_bundle(str(tmp_path), r1 + r2, t1 + t2)))
    assert [r.flight_date.day for r in records] == [16, 17]
    assert all(len(r.tracks) == 80 for r in records)


def test_join_round_trip_on_synthetic(small_dca, tmp_path):
    raw, _, _ = small_dca
    bundle = parse_directory(raw)
    records, stats = join_flights(bundle)
    assert stats.emitted + stats.dropped == stats.keys
    labelled, _ = label_flights(records)
    for f in labelled:
        occ = [r for r in f.regions if r.region_type == "Runway" and r.region_name == f.runway_assigned][0]
        assert abs((occ.time_exited - occ.time_entered).total_seconds() - f.arot) <= 1.0
        assert f.arot > 0
        ts = [s.timestamp for s in f.tracks]
        assert all(a < b for a, b in zip(ts, ts[1:]))
    write_records(str(tmp_path), records, bundle.weather, bundle.runways)
    again, _ = join_flights(parse_directory(str(tmp_path)))
    assert again == records


@given(st.integers(0, 10**6))
def test_join_counts_balance(seed):
    rng = random.Random(seed)
    regions, tracks = [], []
    for i in range(rng.randint(1, 8)):
        cs = f"AAL{i}"
        if rng.random() < 0.8:
            regions.append(region(cs, "1", "Runway" if rng.random() < 0.7 else "Taxiway", i * 500, 40))
        if rng.random() < 0.8:
            tracks.append(track(cs, i * 500))
    from arot.ingest import RawBundle, parse_region_row, parse_track_row
    to_row = lambda cols, vals: {c: (v.isoformat() if hasattr(v, "isoformat") else str(v)) for c, v in zip(cols, vals)}
    b = RawBundle(tuple(parse_region_row(to_row(REGION_COLUMNS, r)) for r in regions),
                  tuple(parse_track_row(to_row(TRACK_COLUMNS, t)) for t in tracks), (), (), {})
    records, stats = join_flights(b)
    assert stats.emitted == len(records)
    assert stats.emitted + stats.dropped == stats.keys
