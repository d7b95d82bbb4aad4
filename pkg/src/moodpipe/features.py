"""3-hour windowing and the 113-dimensional per-window feature vector.

The vector concatenates per-sensor blocks in a fixed order (accelerometer 23,
barometer 5, battery 7, location 12, network 5, weather 50, screen 11). Block
layouts are a compatibility contract: column names and positions never change
without a format version bump. A sensor with no samples in a window
contributes an all-zero block and a cleared presence bit.

Conventions: population variance/covariance throughout; skewness and excess
kurtosis are moment-based and defined as 0 for zero-variance input, as are
correlations. All outputs are finite for any non-empty input.
"""

from __future__ import annotations

import datetime as dt
from dataclasses import dataclass
from pathlib import Path
from zoneinfo import ZoneInfo

import numpy as np

from .ingest import (
    SCREEN_CODES,
    SENSOR_TYPES,
    MoodAnnotation,
    SensorStream,
)

WINDOW_HOURS = 3
WINDOWS_PER_DAY = 24 // WINDOW_HOURS
_DAY_MS = 86_400_000
_EPOCH_ORDINAL = dt.date(1970, 1, 1).toordinal()

EARTH_RADIUS_KM = 6371.0088
MOVING_SPEED_KMH = 1.0  # consecutive-fix speed above this counts as moving
CELL_DECIMALS = 3  # lat/lon grid snap, ~110 m cells

_ACCEL_NAMES = (
    ["accel_mag_mean", "accel_mag_std", "accel_mag_median", "accel_mag_min", "accel_mag_max"]
    + [f"accel_mean_{a}" for a in "xyz"]
    + [f"accel_var_{a}" for a in "xyz"]
    + [f"accel_skew_{a}" for a in "xyz"]
    + [f"accel_kurt_{a}" for a in "xyz"]
    + ["accel_corr_xy", "accel_corr_yz", "accel_corr_zx"]
    + ["accel_cov_xy", "accel_cov_yz", "accel_cov_zx"]
)
_BARO_NAMES = ["baro_mean", "baro_std", "baro_median", "baro_min", "baro_max"]
_BATTERY_NAMES = [
    "batt_level_mean",
    "batt_level_std",
    "batt_level_median",
    "batt_level_min",
    "batt_level_max",
    "batt_n_charges",
    "batt_charge_minutes",
]
_LOCATION_NAMES = [
    "loc_entropy",
    "loc_n_transitions",
    "loc_moving_time_percent",
    "loc_total_distance_km",
    "loc_radius_of_gyration_km",
    "loc_max_displacement_km",
    "loc_n_unique_clusters",
    "loc_top_cluster_time_ratio",
    "loc_mean_speed_kmh",
    "loc_max_speed_kmh",
    "loc_std_speed_kmh",
    "loc_home_time_ratio",
]
_NETWORK_NAMES = [
    "net_n_wifi",
    "net_n_mobile",
    "net_most_frequent_code",
    "net_rate_wifi",
    "net_rate_mobile",
]
_WEATHER_CHANNELS = (
    "temp",
    "humidity",
    "pressure",
    "wind",
    "cloudiness",
    "precipitation",
    "visibility",
    "temp_change_rate",
)
_WEATHER_NAMES = [f"weather_type_{i}" for i in range(10)] + [
    f"weather_{ch}_{stat}"
    for ch in _WEATHER_CHANNELS
    for stat in ("mean", "std", "median", "min", "max")
]
_SCREEN_NAMES = [
    "screen_n_on",
    "screen_n_off",
    "screen_n_unlock",
    "screen_n_interaction",
    "screen_unlocks_per_min",
    "screen_interactions_per_min",
    "screen_on_time_ratio",
    "screen_n_on_per_min",
    "screen_on_bout_mean_min",
    "screen_on_bout_max_min",
    "screen_on_bout_std_min",
]

SENSOR_FEATURE_NAMES: dict[str, list[str]] = {
    "accelerometer": _ACCEL_NAMES,
    "barometer": _BARO_NAMES,
    "battery": _BATTERY_NAMES,
    "location": _LOCATION_NAMES,
    "network": _NETWORK_NAMES,
    "weather": _WEATHER_NAMES,
    "screen": _SCREEN_NAMES,
}

SENSOR_FEATURE_COUNTS = {s: len(names) for s, names in SENSOR_FEATURE_NAMES.items()}

FEATURE_NAMES: list[str] = [
    name for sensor in SENSOR_TYPES for name in SENSOR_FEATURE_NAMES[sensor]
]
N_FEATURES = len(FEATURE_NAMES)
assert N_FEATURES == 113, N_FEATURES

FEATURE_INDEX = {name: i for i, name in enumerate(FEATURE_NAMES)}

# (start, stop) slice of each sensor's block inside the 113 vector
SENSOR_SLICES: dict[str, tuple[int, int]] = {}
_pos = 0
for _sensor in SENSOR_TYPES:
    _n = SENSOR_FEATURE_COUNTS[_sensor]
    SENSOR_SLICES[_sensor] = (_pos, _pos + _n)
    _pos += _n
del _pos, _n, _sensor


@dataclass
class FeatureFrame:
    """One user's 3-hour window: feature vector plus labeling metadata."""

    user_id: str
    date: dt.date
    slot: int
    vector: np.ndarray
    presence: dict[str, bool]
    annotation: int | None = None  # raw Likert 1..7

    def window_start(self, tz: ZoneInfo) -> dt.datetime:
        return dt.datetime.combine(self.date, dt.time(hour=self.slot * WINDOW_HOURS), tzinfo=tz)

    def key(self) -> tuple[str, dt.date, int]:
        return (self.user_id, self.date, self.slot)


def window_bounds_ms(date: dt.date, slot: int, tz: ZoneInfo) -> tuple[int, int]:
    """UTC millisecond bounds of a local window [start, end)."""
    start = dt.datetime.combine(date, dt.time(hour=slot * WINDOW_HOURS), tzinfo=tz)
    end_naive = dt.datetime.combine(date, dt.time()) + dt.timedelta(hours=(slot + 1) * WINDOW_HOURS)
    end = end_naive.replace(tzinfo=tz)
    return int(start.timestamp() * 1000), int(end.timestamp() * 1000)


def _local_day_slot(ts: np.ndarray, tz: ZoneInfo, window_hours: int) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized (local day ordinal offset, slot) for UTC-ms timestamps.

    UTC offsets are resolved per 15-minute bucket; real zones only shift on
    such boundaries, so this is exact.
    """
    bucket = ts // 900_000
    uniq, inverse = np.unique(bucket, return_inverse=True)
    offsets = np.empty(uniq.shape[0], dtype=np.int64)
    for i, b in enumerate(uniq):
        t = dt.datetime.fromtimestamp(int(b) * 900, dt.timezone.utc).astimezone(tz)
        offsets[i] = int(t.utcoffset().total_seconds() * 1000)
    local = ts + offsets[inverse]
    day = local // _DAY_MS
    slot = (local % _DAY_MS) // (window_hours * 3_600_000)
    return day, slot


def _day_to_date(day: int) -> dt.date:
    return dt.date.fromordinal(int(day) + _EPOCH_ORDINAL)


def window_key_for_ts(ts_ms: int, tz: ZoneInfo) -> tuple[dt.date, int]:
    """Window (local date, slot) containing a single UTC-ms timestamp."""
    day, slot = _local_day_slot(np.asarray([ts_ms], dtype=np.int64), tz, WINDOW_HOURS)
    return _day_to_date(day[0]), int(slot[0])


def partition_windows(
    stream: SensorStream, tz: ZoneInfo, window_hours: int = WINDOW_HOURS
) -> dict[tuple[str, dt.date, int], dict[str, dict[str, np.ndarray]]]:
    """Assign every sample to its local-midnight-aligned window.

    Returns window key -> sensor -> column views (including ``ts``). Windows
    are half-open [start, end): a sample exactly on a boundary belongs to the
    later window. Empty stream yields no windows.
    """
    if 24 % window_hours != 0:
        raise ValueError(f"window_hours {window_hours} must divide 24")
    windows: dict[tuple[str, dt.date, int], dict[str, dict[str, np.ndarray]]] = {}
    for (user, sensor), block in sorted(stream.blocks.items()):
        if len(block) == 0:
            continue
        day, slot = _local_day_slot(block.ts, tz, window_hours)
        combined = day * (24 // window_hours) + slot
        # blocks are ts-sorted, so windows form contiguous runs
        boundaries = np.flatnonzero(np.diff(combined)) + 1
        starts = np.concatenate(([0], boundaries))
        stops = np.concatenate((boundaries, [combined.shape[0]]))
        for a, b in zip(starts, stops):
            key = (user, _day_to_date(day[a]), int(slot[a]))
            cols = {"ts": block.ts[a:b]}
            for name, col in block.columns.items():
                cols[name] = col[a:b]
            windows.setdefault(key, {})[sensor] = cols
    return windows


def _stats5(v: np.ndarray) -> list[float]:
    """mean, population std, median, min, max."""
    return [
        float(np.mean(v)),
        float(np.std(v)),
        float(np.median(v)),
        float(np.min(v)),
        float(np.max(v)),
    ]


def _skew_kurt(v: np.ndarray) -> tuple[float, float]:
    """Moment skewness and excess kurtosis; zero-variance input gives (0, 0)."""
    var = float(np.var(v))
    if var <= 0.0:
        return 0.0, 0.0
    d = v - np.mean(v)
    m3 = float(np.mean(d**3))
    m4 = float(np.mean(d**4))
    return m3 / var**1.5, m4 / var**2 - 3.0


def _corr(x: np.ndarray, y: np.ndarray) -> float:
    sx, sy = float(np.std(x)), float(np.std(y))
    if sx <= 0.0 or sy <= 0.0:
        return 0.0
    return float(np.mean((x - x.mean()) * (y - y.mean()))) / (sx * sy)


def _cov(x: np.ndarray, y: np.ndarray) -> float:
    return float(np.mean((x - x.mean()) * (y - y.mean())))


def accel_features(x: np.ndarray, y: np.ndarray, z: np.ndarray) -> np.ndarray:
    mag = np.sqrt(x * x + y * y + z * z)
    out = _stats5(mag)
    out += [float(np.mean(a)) for a in (x, y, z)]
    out += [float(np.var(a)) for a in (x, y, z)]
    sk = [_skew_kurt(a) for a in (x, y, z)]
    out += [s for s, _ in sk]
    out += [k for _, k in sk]
    out += [_corr(x, y), _corr(y, z), _corr(z, x)]
    out += [_cov(x, y), _cov(y, z), _cov(z, x)]
    return np.asarray(out)


def barometer_features(hpa: np.ndarray) -> np.ndarray:
    return np.asarray(_stats5(hpa))


def battery_features(ts: np.ndarray, level: np.ndarray, charging: np.ndarray) -> np.ndarray:
    out = _stats5(level)
    on = charging > 0.5
    # charging episodes: rising edges, with an initial charging sample counted
    edges = int(on[0]) + int(np.sum(~on[:-1] & on[1:])) if on.shape[0] else 0
    charge_minutes = 0.0
    if ts.shape[0] >= 2:
        dt_min = np.diff(ts).astype(np.float64) / 60_000.0
        charge_minutes = float(np.sum(dt_min[on[:-1]]))
    out += [float(edges), charge_minutes]
    return np.asarray(out)


def _haversine_km(lat1, lon1, lat2, lon2) -> np.ndarray:
    p1, p2 = np.radians(lat1), np.radians(lat2)
    dp = p2 - p1
    dl = np.radians(lon2) - np.radians(lon1)
    a = np.sin(dp / 2.0) ** 2 + np.cos(p1) * np.cos(p2) * np.sin(dl / 2.0) ** 2
    return 2.0 * EARTH_RADIUS_KM * np.arcsin(np.sqrt(np.clip(a, 0.0, 1.0)))


def snap_cell(lat: float, lon: float) -> tuple[int, int]:
    """Grid cell id: lat/lon rounded to 3 decimals, scaled to ints."""
    scale = 10**CELL_DECIMALS
    return int(np.round(lat * scale)), int(np.round(lon * scale))


def _cells(lat: np.ndarray, lon: np.ndarray) -> np.ndarray:
    scale = 10**CELL_DECIMALS
    return np.stack(
        [np.round(lat * scale).astype(np.int64), np.round(lon * scale).astype(np.int64)], axis=1
    )


def location_features(
    ts: np.ndarray, lat: np.ndarray, lon: np.ndarray, home_cell: tuple[int, int] | None = None
) -> np.ndarray:
    """Mobility block; ``home_cell`` is the user's modal dwell cell over the
    full stream (kept as a parameter so per-window computation stays pure)."""
    n = lat.shape[0]
    cells = _cells(lat, lon)
    cell_keys = [tuple(c) for c in cells]
    n_unique = len(set(cell_keys))

    entropy = 0.0
    transitions = 0
    moving_pct = 0.0
    total_km = 0.0
    top_ratio = 1.0
    home_ratio = 0.0
    mean_speed = max_speed = std_speed = 0.0

    centroid_lat, centroid_lon = float(np.mean(lat)), float(np.mean(lon))
    rog = float(np.sqrt(np.mean(_haversine_km(lat, lon, centroid_lat, centroid_lon) ** 2)))
    max_disp = float(np.max(_haversine_km(lat, lon, lat[0], lon[0])))

    if n >= 2:
        seg_km = _haversine_km(lat[:-1], lon[:-1], lat[1:], lon[1:])
        seg_h = np.diff(ts).astype(np.float64) / 3_600_000.0
        total_km = float(np.sum(seg_km))
        transitions = int(np.sum(np.any(cells[:-1] != cells[1:], axis=1)))

        valid = seg_h > 0.0
        if np.any(valid):
            speeds = seg_km[valid] / seg_h[valid]
            mean_speed = float(np.mean(speeds))
            max_speed = float(np.max(speeds))
            std_speed = float(np.std(speeds))
            moving = speeds > MOVING_SPEED_KMH
            moving_pct = 100.0 * float(np.sum(seg_h[valid][moving])) / float(np.sum(seg_h[valid]))

        # dwell time: each inter-fix interval belongs to the earlier fix's cell
        dwell: dict[tuple[int, int], float] = {}
        for i in range(n - 1):
            d = float(seg_h[i])
            if d > 0.0:
                dwell[cell_keys[i]] = dwell.get(cell_keys[i], 0.0) + d
        total_dwell = sum(dwell.values())
        if total_dwell > 0.0:
            probs = np.asarray([v / total_dwell for v in dwell.values()])
            entropy = float(-np.sum(probs * np.log(probs)))
            top_ratio = float(np.max(probs))
            if home_cell is not None:
                home_ratio = dwell.get(home_cell, 0.0) / total_dwell
        elif home_cell is not None:
            home_ratio = 1.0 if cell_keys[0] == home_cell else 0.0
    elif home_cell is not None:
        home_ratio = 1.0 if cell_keys[0] == home_cell else 0.0

    return np.asarray(
        [
            entropy,
            float(transitions),
            moving_pct,
            total_km,
            rog,
            max_disp,
            float(n_unique),
            top_ratio,
            mean_speed,
            max_speed,
            std_speed,
            home_ratio,
        ]
    )


def network_features(type_codes: np.ndarray) -> np.ndarray:
    n = type_codes.shape[0]
    counts = np.bincount(type_codes.astype(np.int64), minlength=3)
    most = int(np.argmax(counts))  # ties -> smaller code
    return np.asarray(
        [
            float(counts[1]),
            float(counts[2]),
            float(most),
            counts[1] / n,
            counts[2] / n,
        ]
    )


def weather_features(ts: np.ndarray, cols: dict[str, np.ndarray]) -> np.ndarray:
    codes = cols["type"].astype(np.int64)
    counts = np.bincount(codes, minlength=10)
    onehot = np.zeros(10)
    onehot[int(np.argmax(counts))] = 1.0

    out = list(onehot)
    for ch in _WEATHER_CHANNELS[:-1]:
        out += _stats5(cols[ch])
    # temperature change rate: per-minute first differences
    rate = np.empty(0)
    if ts.shape[0] >= 2:
        dt_min = np.diff(ts).astype(np.float64) / 60_000.0
        valid = dt_min > 0.0
        if np.any(valid):
            rate = np.diff(cols["temp"])[valid] / dt_min[valid]
    out += _stats5(rate) if rate.shape[0] else [0.0] * 5
    return np.asarray(out)


def screen_features(
    ts: np.ndarray, events: np.ndarray, window_start_ms: int, window_end_ms: int
) -> np.ndarray:
    minutes = (window_end_ms - window_start_ms) / 60_000.0
    ev = events.astype(np.int64)
    n_on = int(np.sum(ev == SCREEN_CODES["on"]))
    n_off = int(np.sum(ev == SCREEN_CODES["off"]))
    n_unlock = int(np.sum(ev == SCREEN_CODES["unlock"]))
    n_interaction = int(np.sum(ev == SCREEN_CODES["interaction"]))

    # reconstruct on-bouts from on/off edges; an off with no prior on means
    # the screen was on since the window start, a trailing on is clipped
    bouts: list[float] = []
    on_since: int | None = None
    first_onoff_seen = False
    for t, e in zip(ts, ev):
        if e == SCREEN_CODES["on"]:
            if not first_onoff_seen:
                first_onoff_seen = True
            if on_since is None:
                on_since = int(t)
        elif e == SCREEN_CODES["off"]:
            if not first_onoff_seen:
                first_onoff_seen = True
                bouts.append((int(t) - window_start_ms) / 60_000.0)
            elif on_since is not None:
                bouts.append((int(t) - on_since) / 60_000.0)
                on_since = None
    if on_since is not None:
        bouts.append((window_end_ms - on_since) / 60_000.0)

    on_minutes = float(sum(bouts))
    if bouts:
        arr = np.asarray(bouts)
        bout_mean, bout_max, bout_std = float(arr.mean()), float(arr.max()), float(arr.std())
    else:
        bout_mean = bout_max = bout_std = 0.0

    return np.asarray(
        [
            float(n_on),
            float(n_off),
            float(n_unlock),
            float(n_interaction),
            n_unlock / minutes,
            n_interaction / minutes,
            min(on_minutes / minutes, 1.0),
            n_on / minutes,
            bout_mean,
            bout_max,
            bout_std,
        ]
    )


def home_cells(stream: SensorStream) -> dict[str, tuple[int, int]]:
    """Per-user modal location cell over the whole stream (ties: smallest)."""
    homes: dict[str, tuple[int, int]] = {}
    for (user, sensor), block in stream.blocks.items():
        if sensor != "location" or len(block) == 0:
            continue
        cells = _cells(block.columns["lat"], block.columns["lon"])
        uniq, counts = np.unique(cells, axis=0, return_counts=True)
        best = np.flatnonzero(counts == counts.max())
        candidates = sorted(tuple(uniq[i]) for i in best)
        homes[user] = (int(candidates[0][0]), int(candidates[0][1]))
    return homes


def _sensor_block_features(
    sensor: str,
    cols: dict[str, np.ndarray],
    window_ms: tuple[int, int],
    home_cell: tuple[int, int] | None,
) -> np.ndarray:
    if sensor == "accelerometer":
        return accel_features(cols["x"], cols["y"], cols["z"])
    if sensor == "barometer":
        return barometer_features(cols["hpa"])
    if sensor == "battery":
        return battery_features(cols["ts"], cols["level"], cols["charging"])
    if sensor == "location":
        return location_features(cols["ts"], cols["lat"], cols["lon"], home_cell)
    if sensor == "network":
        return network_features(cols["type"])
    if sensor == "weather":
        return weather_features(cols["ts"], cols)
    if sensor == "screen":
        return screen_features(cols["ts"], cols["event"], window_ms[0], window_ms[1])
    raise ValueError(f"unknown sensor {sensor!r}")


def compute_frames(stream: SensorStream, tz: ZoneInfo) -> list[FeatureFrame]:
    """Extract one :class:`FeatureFrame` per (user, window) with any samples.

    Output is sorted by (user, date, slot). Absent sensors contribute an
    all-zero block with the presence bit cleared.
    """
    windows = partition_windows(stream, tz)
    homes = home_cells(stream)
    frames: list[FeatureFrame] = []
    for key in sorted(windows):
        user, date, slot = key
        per_sensor = windows[key]
        window_ms = window_bounds_ms(date, slot, tz)
        vector = np.zeros(N_FEATURES)
        presence = {s: False for s in SENSOR_TYPES}
        for sensor, cols in per_sensor.items():
            lo, hi = SENSOR_SLICES[sensor]
            block = _sensor_block_features(sensor, cols, window_ms, homes.get(user))
            if not np.all(np.isfinite(block)):
                bad = [SENSOR_FEATURE_NAMES[sensor][i] for i in np.flatnonzero(~np.isfinite(block))]
                raise ValueError(f"non-finite features {bad} for {key}")
            vector[lo:hi] = block
            presence[sensor] = True
        frames.append(FeatureFrame(user, date, slot, vector, presence))
    return frames


def attach_annotations(
    frames: list[FeatureFrame], annotations: list[MoodAnnotation], tz: ZoneInfo
) -> int:
    """Label frames in place; latest annotation in a window wins.

    Returns the number of annotations that fell outside every data window.
    """
    by_key = {f.key(): f for f in frames}
    latest_ts: dict[tuple[str, dt.date, int], int] = {}
    dropped = 0
    for ann in annotations:
        date, slot = window_key_for_ts(ann.ts, tz)
        key = (ann.user_id, date, slot)
        frame = by_key.get(key)
        if frame is None:
            dropped += 1
            continue
        if key not in latest_ts or ann.ts >= latest_ts[key]:
            latest_ts[key] = ann.ts
            frame.annotation = ann.likert
    return dropped


_META_COLUMNS = ["user", "date", "slot", "annotation"] + [f"has_{s}" for s in SENSOR_TYPES]


def write_frames_csv(frames: list[FeatureFrame], path: str | Path) -> None:
    """Write frames with the full 113-column header (plus metadata columns).

    Floats are written with ``repr`` so a reload reproduces exact values.
    """
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(",".join(_META_COLUMNS + FEATURE_NAMES) + "\n")
        for f in frames:
            meta = [
                f.user_id,
                f.date.isoformat(),
                str(f.slot),
                "" if f.annotation is None else str(f.annotation),
            ] + ["1" if f.presence[s] else "0" for s in SENSOR_TYPES]
            fh.write(",".join(meta + [repr(float(v)) for v in f.vector]) + "\n")


def read_frames_csv(path: str | Path) -> list[FeatureFrame]:
    path = Path(path)
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().rstrip("\n").split(",")
        expected = _META_COLUMNS + FEATURE_NAMES
        if header != expected:
            raise ValueError(f"{path}: frame CSV header does not match feature contract")
        n_meta = len(_META_COLUMNS)
        frames = []
        for line in fh:
            parts = line.rstrip("\n").split(",")
            presence = {
                s: parts[4 + i] == "1" for i, s in enumerate(SENSOR_TYPES)
            }
            frames.append(
                FeatureFrame(
                    user_id=parts[0],
                    date=dt.date.fromisoformat(parts[1]),
                    slot=int(parts[2]),
                    vector=np.asarray([float(v) for v in parts[n_meta:]]),
                    presence=presence,
                    annotation=int(parts[3]) if parts[3] else None,
                )
            )
    return frames
