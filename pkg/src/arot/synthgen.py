"""Seeded synthetic airports that emit the four ingest CSV files.

Each flight's runway occupancy time is drawn from one documented model
shared by every airport (only the airport intercepts and small per-runway
offsets differ)::

    AROT = intercept[airport] + offset[runway]
           + 1.0  * (length_ft / 1000 - 9)       # runway length
           + 0.25 * w                            # w = min(mlw_t - 60, 60), tonnes
           - 0.6  * headwind_kt                  # wind component along the runway
           + 10.0 * (last_point_nm - 0.5)        # final stop distance to the runway
           - 0.4  * (landings_30min - 4)         # same-runway landings in the last 30 min
           + 0.1  * w * (last_point_nm - 0.5)
           + Normal(0, noise_sigma)

and floored at ``MIN_AROT_S``. The weight term saturates above 120 t, so
widebody types all add the same amount. The headwind uses the weather observation the
feature pipeline attaches at the default 5 NM prediction point, and the
congestion count uses the same half-open 30 minute window, so with
``noise_sigma = 0`` the target is a deterministic function of the features.

Approach tracks fly a base leg perpendicular to final and turn onto the
extended centreline at a per-runway distance, so the first aligned sample
inside the prediction ring sits near the profile's approach distance.
"""
from __future__ import annotations

import bisect
import configparser
import math
import os
from dataclasses import dataclass, field
from datetime import date, datetime, timedelta, timezone
from importlib import resources
from typing import Optional

import numpy as np

from arot.features import DEFAULT_FAF_NM, DEFAULT_STALENESS_MIN, NM, heading_difference, point_segment_distance
from arot.ingest import (
    FT_TO_M, REGION_COLUMNS, RUNWAY_COLUMNS, TRACK_COLUMNS, WEATHER_COLUMNS, write_rows,
)
from arot.seeding import substream

AROT_MODEL = {
    "length_per_kft": 1.0,
    "length_center_kft": 9.0,
    "weight_per_tonne": 0.25,
    "weight_center_t": 60.0,
    "weight_cap_t": 60.0,  # heavier aircraft add nothing beyond center + cap
    "headwind_per_kt": -0.6,
    "last_point_per_nm": 10.0,
    "last_point_center_nm": 0.5,
    "congestion_per_landing": -0.4,
    "congestion_center": 4.0,
    "weight_x_last_point": 0.1,
}
MIN_AROT_S = 12.0

TRACK_STEP_S = 4.0
TAXI_STEP_S = 15.0
BASE_LEG_NM = 2.0
SLOWDOWN_NM = 2.0
TOUCHDOWN_DROP_KT = 20.0
TAXI_SPEED_MS = 8.0
KT_TO_MS = 1852.0 / 3600.0
EPOCH = datetime(1970, 1, 1, tzinfo=timezone.utc)
PROFILE_NAMES = ("dca", "mia", "phx")


@dataclass
class RunwaySpec:
    name: str
    length_ft: float
    width_ft: float
    altitude_ft: float
    true_heading: float
    threshold_x: float
    threshold_y: float
    offset: float
    approach_nm: float
    approach_kt: float

    @property
    def direction(self):
        h = math.radians(self.true_heading)
        return math.sin(h), math.cos(h)

    @property
    def far_end(self):
        ux, uy = self.direction
        length = self.length_ft * FT_TO_M
        return self.threshold_x + length * ux, self.threshold_y + length * uy


@dataclass
class Flow:
    name: str
    heading: float
    runways: dict  # name -> weight


@dataclass
class Concourse:
    name: str
    gates: list  # (gate name, x, y)
    airlines: tuple


@dataclass
class AirportProfile:
    code: str
    icao: str
    arot_mean: float
    intercept: float
    arot_sigma: float
    noise_sigma: float
    start_date: date
    days: int
    first_hour_utc: float
    operating_hours: float
    utc_offset_h: float
    runways: dict
    flows: list
    aircraft: dict  # type -> (mlw kg, weight)
    airlines: dict  # code -> weight
    origins: tuple
    concourses: list
    weather: dict
    flights: int = 0  # default traffic volume for the simulated days
    flow_block_h: float = 3.0
    source: str = ""

    def validate(self):
        if not self.arot_sigma > 0:
            raise ValueError(f"{self.code}: arot_sigma must be positive")
        for rw in self.runways.values():
            if rw.length_ft <= 0 or rw.width_ft <= 0:
                raise ValueError(f"{self.code}: runway {rw.name} needs positive length and width")
        for fl in self.flows:
            for name in fl.runways:
                if name not in self.runways:
                    raise ValueError(f"{self.code}: flow {fl.name} references unknown runway {name}")
        return self


def _floats(text):
    return [float(v) for v in text.replace(",", " ").split()]


def load_profile(name_or_path: str) -> AirportProfile:
    """Read a profile by bundled name (``dca``/``mia``/``phx``) or file path."""
    parser = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    parser.optionxform = str
    key = name_or_path.lower()
    if key in PROFILE_NAMES and not os.path.exists(name_or_path):
        text = resources.files("arot").joinpath("profiles", f"{key}.ini").read_text(encoding="utf-8")
        parser.read_string(text)
        source = f"builtin:{key}"
    else:
        if not os.path.exists(name_or_path):
            raise FileNotFoundError(f"profile not found: {name_or_path}")
        with open(name_or_path, encoding="utf-8") as fh:
            parser.read_file(fh)
        source = os.path.abspath(name_or_path)
    return parse_profile(parser, source)


def parse_profile(parser: configparser.ConfigParser, source: str = "") -> AirportProfile:
    a = parser["airport"]
    runways = {}
    for sec in parser.sections():
        if not sec.startswith("runway "):
            continue
        name = sec.split(" ", 1)[1].strip()
        s = parser[sec]
        if "reciprocal_of" in s:
            other = runways[s["reciprocal_of"]]
            fx, fy = other.far_end
            rw = RunwaySpec(name, other.length_ft, other.width_ft,
                            s.getfloat("altitude_ft", other.altitude_ft),
                            (other.true_heading + 180.0) % 360.0, fx, fy,
                            s.getfloat("offset_s", 0.0), s.getfloat("approach_nm"), s.getfloat("approach_kt"))
        else:
            rw = RunwaySpec(name, s.getfloat("length_ft"), s.getfloat("width_ft"), s.getfloat("altitude_ft"),
                            s.getfloat("true_heading_deg"), s.getfloat("threshold_x_m"),
                            s.getfloat("threshold_y_m"), s.getfloat("offset_s", 0.0),
                            s.getfloat("approach_nm"), s.getfloat("approach_kt"))
        runways[name] = rw
    flows = []
    for sec in parser.sections():
        if sec.startswith("flow "):
            s = parser[sec]
            weights = {}
            for item in s["runways"].split(","):
                rw, w = item.split(":")
                weights[rw.strip()] = float(w)
            flows.append(Flow(sec.split(" ", 1)[1].strip(), s.getfloat("heading_deg"), weights))
    concourses = []
    for sec in parser.sections():
        if sec.startswith("concourse "):
            s = parser[sec]
            cname = sec.split(" ", 1)[1].strip()
            n = s.getint("gates")
            first = s.getint("first_number", 1)
            x0, y0 = s.getfloat("start_x_m"), s.getfloat("start_y_m")
            dx, dy = s.getfloat("step_x_m"), s.getfloat("step_y_m")
            gates = [(f"{cname}{first + i}", x0 + i * dx, y0 + i * dy) for i in range(n)]
            airlines = tuple(v.strip() for v in s.get("airlines", "").split(",") if v.strip())
            concourses.append(Concourse(cname, gates, airlines))
    aircraft = {}
    for k, v in parser["aircraft"].items():
        mlw, w = _floats(v)
        aircraft[k] = (mlw, w)
    airlines = {k: float(v) for k, v in parser["airlines"].items()}
    return AirportProfile(
        code=a["code"],
        icao=a["icao"],
        arot_mean=a.getfloat("arot_mean_s"),
        intercept=a.getfloat("intercept_s"),
        arot_sigma=a.getfloat("arot_sigma_s"),
        noise_sigma=a.getfloat("noise_sigma_s"),
        start_date=date.fromisoformat(a["start_date"]),
        days=a.getint("days"),
        first_hour_utc=a.getfloat("first_hour_utc"),
        operating_hours=a.getfloat("operating_hours"),
        utc_offset_h=a.getfloat("utc_offset_h"),
        runways=runways,
        flows=flows,
        aircraft=aircraft,
        airlines=airlines,
        origins=tuple(v.strip() for v in a["origins"].split(",")),
        concourses=concourses,
        weather=dict(parser["weather"].items()),
        flights=a.getint("flights", 0),
        flow_block_h=a.getfloat("flow_block_h", 3.0),
        source=source,
    ).validate()


# -- helpers ----------------------------------------------------------------

def _ts(ms: int) -> datetime:
    return EPOCH + timedelta(milliseconds=int(ms))


def _heading(vx, vy) -> float:
    h = round(math.degrees(math.atan2(vx, vy)) % 360.0, 1)
    return 0.0 if h >= 360.0 else h


def headwind(wind_dir: float, wind_speed: float, runway_heading: float) -> float:
    return wind_speed * math.cos(math.radians(wind_dir - runway_heading))


def runway_base(profile: "AirportProfile", rw: RunwaySpec, coef=AROT_MODEL) -> float:
    return (profile.intercept + rw.offset
            + coef["length_per_kft"] * (rw.length_ft / 1000.0 - coef["length_center_kft"]))


def arot_signal(base, mlw_kg, head_kt, last_point_nm, landings_30, coef=AROT_MODEL) -> float:
    w = min(mlw_kg / 1000.0 - coef["weight_center_t"], coef["weight_cap_t"])
    lp = last_point_nm - coef["last_point_center_nm"]
    return (base
            + coef["weight_per_tonne"] * w
            + coef["headwind_per_kt"] * head_kt
            + coef["last_point_per_nm"] * lp
            + coef["congestion_per_landing"] * (landings_30 - coef["congestion_center"])
            + coef["weight_x_last_point"] * w * lp)


@dataclass
class WeatherSeries:
    times_ms: list
    rows: list  # (temp, vis, dir, speed, altimeter)

    def at(self, t_ms: int):
        i = bisect.bisect_right(self.times_ms, t_ms) - 1
        if i < 0 or t_ms - self.times_ms[i] > DEFAULT_STALENESS_MIN * 60_000:
            return None
        return self.rows[i]


def _weather(profile: AirportProfile, start_ms: int, end_ms: int, rng) -> WeatherSeries:
    w = profile.weather
    t_mean, t_amp = float(w["temp_mean_f"]), float(w["temp_diurnal_f"])
    d_prev, s_mean = float(w["wind_dir_deg"]), float(w["wind_speed_kt"])
    vis_clear, alt_mean = float(w["visibility_mi"]), float(w["altimeter_in"])
    first = start_ms - start_ms % 3_600_000 - 3 * 3_600_000 + 52 * 60_000
    times, rows = [], []
    temp_ar = speed_ar = 0.0
    direction = d_prev
    vis = vis_clear
    alt = alt_mean
    t = first
    while t <= end_ms:
        hour_local = ((t / 3_600_000.0) + profile.utc_offset_h) % 24.0
        temp_ar = 0.85 * temp_ar + rng.normal(0.0, 1.2)
        temp = t_mean + t_amp * math.sin(2 * math.pi * (hour_local - 9.0) / 24.0) + temp_ar
        pull = ((d_prev - direction + 180.0) % 360.0) - 180.0
        direction = (direction + 0.12 * pull + rng.normal(0.0, 18.0)) % 360.0
        speed_ar = 0.8 * speed_ar + rng.normal(0.0, 2.2)
        speed = max(0.0, s_mean + speed_ar)
        vis = min(vis_clear, max(0.5, vis + 0.5 * (vis_clear - vis) + rng.normal(0.0, 1.2)))
        alt = alt + 0.2 * (alt_mean - alt) + rng.normal(0.0, 0.012)
        wd = round(direction / 10.0) * 10.0 % 360.0
        times.append(t)
        rows.append((round(temp, 1), round(vis * 4.0) / 4.0, wd, float(round(speed)), round(alt, 2)))
        t += 3_600_000
    return WeatherSeries(times, rows)


def _choose(rng, weights: dict):
    keys = list(weights)
    p = np.array([weights[k] for k in keys], dtype=np.float64)
    return keys[int(rng.choice(len(keys), p=p / p.sum()))]


# -- approach geometry ------------------------------------------------------

def _final_distance(tau: float, v_faf: float, v_td: float) -> float:
    """Distance to threshold (NM) ``tau`` seconds before crossing it on final."""
    b = (v_faf - v_td) / SLOWDOWN_NM
    if b <= 0:
        return v_faf * tau / 3600.0
    tau_slow = 3600.0 / b * math.log(1.0 + SLOWDOWN_NM * b / v_td)
    if tau <= tau_slow:
        return v_td / b * (math.exp(b * tau / 3600.0) - 1.0)
    return SLOWDOWN_NM + v_faf * (tau - tau_slow) / 3600.0


def _final_speed(d: float, v_faf: float, v_td: float) -> float:
    if d >= SLOWDOWN_NM:
        return v_faf
    return v_td + (v_faf - v_td) * d / SLOWDOWN_NM


@dataclass
class GeneratedAirport:
    profile: AirportProfile
    out_dir: Optional[str]
    n_flights: int
    arot: np.ndarray
    signal: np.ndarray
    files: dict = field(default_factory=dict)


def generate_airport(profile: AirportProfile, n_flights: int, seed: int, out_dir: Optional[str] = None,
                     noise_sigma: Optional[float] = None) -> GeneratedAirport:
    """Simulate ``n_flights`` arrivals over the profile's days and write the CSVs.

    ``noise_sigma`` overrides the profile's residual noise (0 = noiseless).
    """
    if n_flights < 1:
        raise ValueError("n_flights must be >= 1")
    noise = profile.noise_sigma if noise_sigma is None else float(noise_sigma)
    rng = substream(seed, "synth", profile.code)

    # schedule: uniform arrival instants inside each day's operating window
    day0 = int(datetime(profile.start_date.year, profile.start_date.month, profile.start_date.day,
                        tzinfo=timezone.utc).timestamp() * 1000)
    win_ms = profile.operating_hours * 3_600_000
    day = rng.integers(0, profile.days, size=n_flights)
    offs = rng.random(n_flights) * win_ms
    times = np.sort(day0 + day * 86_400_000 + int(profile.first_hour_utc * 3_600_000) + offs.astype(np.int64))

    start_ms, end_ms = int(times[0]), int(times[-1])
    weather = _weather(profile, start_ms, end_ms + 3_600_000, substream(seed, "weather", profile.code))

    # runway flow per block, preferring the flow most into the wind
    block_ms = int(profile.flow_block_h * 3_600_000)
    flow_cache = {}

    def flow_for(t_ms):
        b = t_ms // block_ms
        if b not in flow_cache:
            frng = substream(seed, "flow", profile.code, int(b))
            obs = weather.at(int(b * block_ms)) or weather.rows[0]
            ranked = sorted(profile.flows, key=lambda f: -math.cos(math.radians(obs[2] - f.heading)))
            pick = ranked[0] if len(ranked) == 1 or frng.random() < 0.85 else ranked[int(frng.integers(1, len(ranked)))]
            flow_cache[b] = pick
        return flow_cache[b]

    gates_by_airline = {}
    for c in profile.concourses:
        for al in c.airlines:
            gates_by_airline.setdefault(al, []).extend(c.gates)
    all_gates = [g for c in profile.concourses for g in c.gates]

    last_landing = {}
    landing_log = {name: [] for name in profile.runways}
    flight_numbers = {}
    region_rows, track_rows = [], []
    arots, signals = [], []

    for t_nominal in times:
        t0 = int(t_nominal)
        flow = flow_for(t0)
        rw = profile.runways[_choose(rng, flow.runways)]
        prev = last_landing.get(rw.name)
        if prev is not None and t0 - prev < 75_000:
            t0 = prev + 75_000 + int(rng.integers(0, 20_000))
        last_landing[rw.name] = t0
        when = _ts(t0)

        airline = _choose(rng, profile.airlines)
        actype = _choose(rng, {k: v[1] for k, v in profile.aircraft.items()})
        mlw = profile.aircraft[actype][0]
        origin = profile.origins[int(rng.integers(0, len(profile.origins)))]
        used = flight_numbers.setdefault(airline, set())  # unique over the whole run
        while True:
            number = int(rng.integers(100, 10000))
            if number not in used:
                used.add(number)
                break
        callsign = f"{airline}{number}"
        gate_pool = gates_by_airline.get(airline) or all_gates
        gate, gx, gy = gate_pool[int(rng.integers(0, len(gate_pool)))]

        # -- approach samples (before threshold crossing)
        ux, uy = rw.direction
        px, py = -uy, ux  # perpendicular
        side = 1.0 if rng.random() < 0.5 else -1.0
        d_align = float(np.clip(rng.normal(rw.approach_nm, 0.25), 2.6, 9.0))
        v_faf = float(rw.approach_kt + 0.05 * (mlw / 1000.0 - 65.0) + rng.normal(0.0, 5.0))
        v_td = v_faf - TOUCHDOWN_DROP_KT
        v_base = v_faf + 15.0
        phase = float(rng.random() * TRACK_STEP_S)
        approach = []  # (t_ms, x, y, alt_ft, heading, speed)
        tau = phase
        while True:
            d = _final_distance(tau, v_faf, v_td)
            if d <= d_align:
                x = rw.threshold_x - d * NM * ux
                y = rw.threshold_y - d * NM * uy
                hdg = (rw.true_heading + rng.normal(0.0, 1.5)) % 360.0
                approach.append((t0 - int(round(tau * 1000)), x, y, d * 318.0, hdg, _final_speed(d, v_faf, v_td)))
            else:
                tau_align = tau  # first sample beyond the turn
                break
            tau += TRACK_STEP_S
        # time spent on final beyond the last aligned sample
        t_turn = tau_align - TRACK_STEP_S
        while True:
            d_last = _final_distance(t_turn, v_faf, v_td)
            if d_last >= d_align:
                break
            t_turn += 0.25
        tau = tau_align
        while True:
            s = v_base * (tau - t_turn) / 3600.0
            if s > BASE_LEG_NM:
                break
            x = rw.threshold_x - d_align * NM * ux + side * s * NM * px
            y = rw.threshold_y - d_align * NM * uy + side * s * NM * py
            hdg = _heading(-side * px, -side * py)
            approach.append((t0 - int(round(tau * 1000)), x, y, d_align * 318.0, hdg, v_base))
            tau += TRACK_STEP_S
        approach.sort()

        # prediction point as the feature pipeline will find it (default ring)
        snap_t = None
        for (ts, x, y, alt, hdg, spd) in approach:
            dist = math.hypot(x - rw.threshold_x, y - rw.threshold_y) / NM
            if 0 < dist <= DEFAULT_FAF_NM and heading_difference(round(hdg, 1) % 360.0, rw.true_heading) <= 45.0:
                snap_t = ts
                break
        obs = weather.at(snap_t if snap_t is not None else t0)
        head = headwind(obs[2], obs[3], rw.true_heading) if obs is not None else 0.0

        # final stop near the gate
        lx = gx + rng.normal(0.0, 8.0)
        ly = gy + rng.normal(0.0, 8.0)
        fx, fy = rw.far_end
        lp_nm = point_segment_distance(round(lx, 1), round(ly, 1), rw.threshold_x, rw.threshold_y, fx, fy) / NM

        log_ = landing_log[rw.name]
        lo = bisect.bisect_left(log_, t0 - 1_800_000)
        hi = bisect.bisect_left(log_, t0)
        count = hi - lo
        bisect.insort(log_, t0)

        signal = arot_signal(runway_base(profile, rw), mlw, head, lp_nm, count)
        arot = round(max(MIN_AROT_S, signal + (rng.normal(0.0, noise) if noise > 0 else 0.0)), 1)
        arots.append(arot)
        signals.append(signal)
        arot_ms = int(round(arot * 1000))

        # -- surface samples: rollout, taxi, stop
        length_m = rw.length_ft * FT_TO_M
        rollout = min(0.85 * length_m, 38.0 * arot)
        surface = []
        k = 1
        while k * TRACK_STEP_S * 1000 < arot_ms:
            frac = k * TRACK_STEP_S * 1000 / arot_ms
            s = rollout * frac * (2.0 - frac)
            spd = 2.0 * rollout / arot * (1.0 - frac) / KT_TO_MS
            surface.append((t0 + int(k * TRACK_STEP_S * 1000), rw.threshold_x + s * ux, rw.threshold_y + s * uy,
                            rw.true_heading, spd))
            k += 1
        ex, ey = rw.threshold_x + rollout * ux, rw.threshold_y + rollout * uy
        t_exit = t0 + arot_ms
        taxi_m = math.hypot(lx - ex, ly - ey)
        taxi_ms = int(taxi_m / TAXI_SPEED_MS * 1000) + 30_000
        hdg_taxi = _heading(lx - ex, ly - ey) if taxi_m > 0 else rw.true_heading
        k = 0
        while True:
            tt = t_exit + int(k * TAXI_STEP_S * 1000)
            if tt >= t_exit + taxi_ms:
                break
            f = (tt - t_exit) / taxi_ms
            surface.append((tt, ex + f * (lx - ex), ey + f * (ly - ey), hdg_taxi, TAXI_SPEED_MS / KT_TO_MS))
            k += 1
        t_gate = t_exit + taxi_ms
        surface.append((t_gate, lx, ly, hdg_taxi, 0.0))

        alt_m_rw = rw.altitude_ft * FT_TO_M
        for (ts, x, y, alt, hdg, spd) in approach:
            alt_ft = rw.altitude_ft + alt
            track_rows.append((_ts(ts), callsign, origin, profile.icao, round(x, 1), round(y, 1),
                               round(alt_ft * FT_TO_M, 1), round(alt_ft / 100.0, 2), round(hdg, 1) % 360.0,
                               round(spd, 1)))
        for (ts, x, y, hdg, spd) in surface:
            track_rows.append((_ts(ts), callsign, origin, profile.icao, round(x, 1), round(y, 1),
                               round(alt_m_rw, 1), 0.0, round(hdg, 1) % 360.0, round(max(spd, 0.0), 1)))

        # -- region occupancy report
        static = (callsign, airline, actype, float(mlw), origin, profile.icao, when.date(), gate, rw.name)

        def region(name, rtype, a_ms, b_ms):
            occ = round((b_ms - a_ms) / 1000.0, 1)
            region_rows.append(static + (name, rtype, _ts(a_ms), _ts(b_ms), occ))

        t_first = approach[0][0]
        region("TMA", "TMA", t_first, t0)
        region(rw.name, "Runway", t0, t_exit)
        others = [n for n in profile.runways if n != rw.name]
        ramp_ms = min(60_000, taxi_ms // 3)
        if others and rng.random() < 0.2:
            cross_at = t_exit + int(rng.integers(5_000, 20_000))
            if cross_at + 15_000 < t_gate - ramp_ms:
                region(others[int(rng.integers(0, len(others)))], "Runway", cross_at, cross_at + int(rng.integers(6_000, 15_000)))
        region(f"TWY {gate[0]}", "Taxiway", t_exit, t_gate - ramp_ms)
        region(f"RAMP {gate[0]}", "Ramp", t_gate - ramp_ms, t_gate)
        region(gate, "Gate", t_gate, t_gate + 45 * 60_000)

    gen = GeneratedAirport(profile, out_dir, n_flights, np.array(arots), np.array(signals))
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        region_rows.sort(key=lambda r: (r[11], r[0]))
        track_rows.sort(key=lambda r: (r[0], r[1]))
        wx_rows = [(_ts(t),) + row for t, row in zip(weather.times_ms, weather.rows)]
        rw_rows = []
        for rw in profile.runways.values():
            fx, fy = rw.far_end
            rw_rows.append((profile.icao, rw.name, rw.length_ft, rw.width_ft, rw.altitude_ft, rw.true_heading,
                            round(rw.threshold_x, 1), round(rw.threshold_y, 1), round(fx, 1), round(fy, 1)))
        for fname, cols, rows in (("regions.csv", REGION_COLUMNS, region_rows),
                                  ("tracks.csv", TRACK_COLUMNS, track_rows),
                                  ("weather.csv", WEATHER_COLUMNS, wx_rows),
                                  ("runways.csv", RUNWAY_COLUMNS, rw_rows)):
            path = os.path.join(out_dir, fname)
            write_rows(path, cols, rows)
            gen.files[fname] = path
    return gen
