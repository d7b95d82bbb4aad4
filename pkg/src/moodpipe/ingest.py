"""Input log schemas, parsers, and model persistence.

All interchange is line-oriented: JSONL for sensor/annotation/query logs,
CSV for ad impressions and patient counts. Parsers skip malformed lines
with a warning counter and abort if more than half of a file is bad.
Timestamps are UTC milliseconds everywhere; a per-dataset IANA timezone
governs local-day and window alignment downstream.
"""

from __future__ import annotations

import csv
import datetime as dt
import json
import re
import unicodedata
from dataclasses import dataclass, field
from pathlib import Path
from zoneinfo import ZoneInfo

import numpy as np

SENSOR_TYPES = (
    "accelerometer",
    "barometer",
    "battery",
    "location",
    "network",
    "weather",
    "screen",
)

# Wire-format payload fields per sensor, in canonical column order.
SENSOR_FIELDS: dict[str, tuple[str, ...]] = {
    "accelerometer": ("x", "y", "z"),
    "barometer": ("hpa",),
    "battery": ("level", "charging"),
    "location": ("lat", "lon"),
    "network": ("type",),
    "weather": (
        "type",
        "temp",
        "humidity",
        "pressure",
        "wind",
        "cloudiness",
        "precipitation",
        "visibility",
    ),
    "screen": ("event",),
}

NETWORK_CODES = {"none": 0, "wifi": 1, "mobile": 2}
SCREEN_CODES = {"on": 0, "off": 1, "unlock": 2, "interaction": 3}
N_WEATHER_TYPES = 10

MAX_ANNOTATIONS_PER_DAY = 6

MODEL_FORMAT_VERSION = "1"
MODEL_KINDS = ("smm_forest", "qmm_logreg")

_WS_RE = re.compile(r"\s+")


class LogParseError(Exception):
    """Unrecoverable problem with an input log file."""


class ModelFormatError(Exception):
    """Model file is unreadable, corrupted, or from an unsupported version."""


def normalize_query(raw: str) -> str:
    """Canonicalize a query string: NFC, case-fold, trim, collapse whitespace."""
    text = unicodedata.normalize("NFC", raw).casefold().strip()
    return _WS_RE.sub(" ", text)


def local_datetime(ts_ms: int, tz: ZoneInfo) -> dt.datetime:
    """Convert UTC milliseconds to an aware local datetime."""
    return dt.datetime.fromtimestamp(ts_ms / 1000.0, tz)


def local_date(ts_ms: int, tz: ZoneInfo) -> dt.date:
    return local_datetime(ts_ms, tz).date()


@dataclass(frozen=True)
class SensorSample:
    """One raw sample; payload keys follow ``SENSOR_FIELDS[sensor]``."""

    user_id: str
    sensor: str
    ts: int
    payload: dict


@dataclass(frozen=True)
class MoodAnnotation:
    user_id: str
    ts: int
    likert: int


@dataclass(frozen=True)
class QueryEvent:
    user_id: str
    ts: int
    query: str


@dataclass(frozen=True)
class AdEvent:
    """One ad impression; ``clicked`` marks whether it was also clicked."""

    ts: int
    user_id: str
    ad_id: str
    clicked: bool


@dataclass
class SensorBlock:
    """Columnar samples for one (user, sensor), sorted by timestamp."""

    ts: np.ndarray
    columns: dict[str, np.ndarray]

    def __len__(self) -> int:
        return int(self.ts.shape[0])


class SensorStream:
    """All sensor samples of a dataset, keyed by (user_id, sensor)."""

    def __init__(self, blocks: dict[tuple[str, str], SensorBlock]):
        self.blocks = blocks

    def __len__(self) -> int:
        return sum(len(b) for b in self.blocks.values())

    def users(self) -> list[str]:
        return sorted({user for user, _ in self.blocks})

    def block(self, user_id: str, sensor: str) -> SensorBlock | None:
        return self.blocks.get((user_id, sensor))


@dataclass
class ParseStats:
    path: str
    n_records: int = 0
    n_warnings: int = 0
    messages: list[str] = field(default_factory=list)

    def warn(self, message: str) -> None:
        self.n_warnings += 1
        if len(self.messages) < 20:  # keep reports bounded
            self.messages.append(message)


def _check_malformed_ratio(stats: ParseStats, n_lines: int) -> None:
    if n_lines > 0 and stats.n_warnings > n_lines / 2:
        raise LogParseError(
            f"{stats.path}: {stats.n_warnings} of {n_lines} lines malformed (>50%)"
        )


def _validate_sensor_record(rec: dict) -> tuple[str, str, int, list[float]]:
    user = rec["user"]
    sensor = rec["sensor"]
    ts = rec["ts"]
    if not isinstance(user, str) or not user:
        raise ValueError("bad user")
    if sensor not in SENSOR_FIELDS:
        raise ValueError(f"unknown sensor {sensor!r}")
    if not isinstance(ts, int):
        raise ValueError("ts must be integer milliseconds")
    values = []
    for name in SENSOR_FIELDS[sensor]:
        v = rec[name]
        if sensor == "network" and name == "type":
            v = NETWORK_CODES[v]
        elif sensor == "screen" and name == "event":
            v = SCREEN_CODES[v]
        elif sensor == "battery" and name == "charging":
            v = 1.0 if v else 0.0
        v = float(v)
        if not np.isfinite(v):
            raise ValueError(f"non-finite {name}")
        values.append(v)
    if sensor == "battery" and not 0.0 <= values[0] <= 100.0:
        raise ValueError("battery level outside [0,100]")
    if sensor == "weather":
        code = values[0]
        if code != int(code) or not 0 <= code < N_WEATHER_TYPES:
            raise ValueError("weather type code outside 0..9")
        if not 0.0 <= values[2] <= 100.0:
            raise ValueError("humidity outside [0,100]")
    return user, sensor, ts, values


def parse_sensor_log(path: str | Path) -> tuple[SensorStream, ParseStats]:
    """Parse a sensor JSONL file into a sorted, columnar :class:`SensorStream`.

    Sorting is canonical: within each (user, sensor) block, samples are
    ordered by timestamp with payload columns as tie-breakers, so a
    shuffled input file yields an identical stream.
    """
    path = Path(path)
    stats = ParseStats(path=str(path))
    if not path.is_file():
        raise LogParseError(f"cannot read sensor log: {path}")

    raw: dict[tuple[str, str], tuple[list[int], list[list[float]]]] = {}
    n_lines = 0
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            n_lines += 1
            try:
                user, sensor, ts, values = _validate_sensor_record(json.loads(line))
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                stats.warn(f"line {lineno}: {exc}")
                continue
            ts_list, val_list = raw.setdefault((user, sensor), ([], []))
            ts_list.append(ts)
            val_list.append(values)
            stats.n_records += 1
    _check_malformed_ratio(stats, n_lines)

    blocks: dict[tuple[str, str], SensorBlock] = {}
    for key in sorted(raw):
        ts_list, val_list = raw[key]
        ts_arr = np.asarray(ts_list, dtype=np.int64)
        val_arr = np.asarray(val_list, dtype=np.float64)
        # lexsort keys: last key is primary, so ts goes last
        order = np.lexsort(tuple(val_arr[:, i] for i in range(val_arr.shape[1] - 1, -1, -1)) + (ts_arr,))
        names = SENSOR_FIELDS[key[1]]
        blocks[key] = SensorBlock(
            ts=ts_arr[order],
            columns={name: val_arr[order, i] for i, name in enumerate(names)},
        )
    return SensorStream(blocks), stats


def parse_annotation_log(
    path: str | Path, tz: ZoneInfo
) -> tuple[list[MoodAnnotation], ParseStats]:
    """Parse mood annotations; enforces the 6-per-user-per-local-day cap."""
    path = Path(path)
    stats = ParseStats(path=str(path))
    if not path.is_file():
        raise LogParseError(f"cannot read annotation log: {path}")

    rows: list[MoodAnnotation] = []
    n_lines = 0
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            n_lines += 1
            try:
                rec = json.loads(line)
                user, ts, likert = rec["user"], rec["ts"], rec["likert"]
                if not isinstance(user, str) or not user:
                    raise ValueError("bad user")
                if not isinstance(ts, int):
                    raise ValueError("ts must be integer milliseconds")
                if not isinstance(likert, int) or not 1 <= likert <= 7:
                    raise ValueError(f"likert {likert!r} outside 1..7")
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                stats.warn(f"line {lineno}: {exc}")
                continue
            rows.append(MoodAnnotation(user, ts, likert))
            stats.n_records += 1
    _check_malformed_ratio(stats, n_lines)

    rows.sort(key=lambda a: (a.user_id, a.ts, a.likert))
    kept: list[MoodAnnotation] = []
    day_counts: dict[tuple[str, dt.date], int] = {}
    for ann in rows:
        key = (ann.user_id, local_date(ann.ts, tz))
        n = day_counts.get(key, 0)
        if n >= MAX_ANNOTATIONS_PER_DAY:
            stats.warn(f"user {ann.user_id}: >{MAX_ANNOTATIONS_PER_DAY} annotations on {key[1]}")
            continue
        day_counts[key] = n + 1
        kept.append(ann)
    stats.n_records = len(kept)
    return kept, stats


def parse_query_log(path: str | Path) -> tuple[list[QueryEvent], ParseStats]:
    """Parse search queries; queries are normalized and empties skipped."""
    path = Path(path)
    stats = ParseStats(path=str(path))
    if not path.is_file():
        raise LogParseError(f"cannot read query log: {path}")

    rows: list[QueryEvent] = []
    n_lines = 0
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            n_lines += 1
            try:
                rec = json.loads(line)
                user, ts, q = rec["user"], rec["ts"], rec["q"]
                if not isinstance(user, str) or not user:
                    raise ValueError("bad user")
                if not isinstance(ts, int):
                    raise ValueError("ts must be integer milliseconds")
                query = normalize_query(str(q))
                if not query:
                    raise ValueError("empty query after normalization")
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                stats.warn(f"line {lineno}: {exc}")
                continue
            rows.append(QueryEvent(user, ts, query))
            stats.n_records += 1
    _check_malformed_ratio(stats, n_lines)
    rows.sort(key=lambda e: (e.user_id, e.ts, e.query))
    return rows, stats


def parse_ad_log(path: str | Path) -> tuple[list[AdEvent], ParseStats]:
    """Parse the ad impression CSV (``ts,user,ad,clicked``).

    Each row is one impression; a clicked row is both impression and click,
    so every click has its impression by construction.
    """
    path = Path(path)
    stats = ParseStats(path=str(path))
    if not path.is_file():
        raise LogParseError(f"cannot read ad log: {path}")

    rows: list[AdEvent] = []
    n_lines = 0
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["ts", "user", "ad", "clicked"]:
            raise LogParseError(f"{path}: expected header ts,user,ad,clicked, got {header}")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            n_lines += 1
            try:
                ts_s, user, ad, clicked_s = row
                ts = int(ts_s)
                if clicked_s not in ("0", "1"):
                    raise ValueError(f"clicked {clicked_s!r} not in {{0,1}}")
                if not user or not ad:
                    raise ValueError("empty user or ad id")
            except ValueError as exc:
                stats.warn(f"line {lineno}: {exc}")
                continue
            rows.append(AdEvent(ts, user, ad, clicked_s == "1"))
            stats.n_records += 1
    _check_malformed_ratio(stats, n_lines)
    rows.sort(key=lambda e: (e.ad_id, e.ts, e.user_id))
    return rows, stats


def parse_patient_csv(path: str | Path) -> tuple[dict[dt.date, int], ParseStats]:
    """Parse daily patient counts (``date,count`` with ISO dates)."""
    path = Path(path)
    stats = ParseStats(path=str(path))
    if not path.is_file():
        raise LogParseError(f"cannot read patient csv: {path}")

    counts: dict[dt.date, int] = {}
    n_lines = 0
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["date", "count"]:
            raise LogParseError(f"{path}: expected header date,count, got {header}")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            n_lines += 1
            try:
                date = dt.date.fromisoformat(row[0])
                count = int(row[1])
                if count < 0:
                    raise ValueError("negative count")
                if date in counts:
                    raise ValueError(f"duplicate date {date}")
            except (IndexError, ValueError) as exc:
                stats.warn(f"line {lineno}: {exc}")
                continue
            counts[date] = count
            stats.n_records += 1
    _check_malformed_ratio(stats, n_lines)
    return counts, stats


@dataclass
class ModelArtifact:
    """Serializable trained model: a forest or a logistic regression."""

    kind: str
    version: str
    seed: int
    payload: dict

    def __post_init__(self) -> None:
        if self.kind not in MODEL_KINDS:
            raise ValueError(f"unknown model kind {self.kind!r}")


def save_model(artifact: ModelArtifact, path: str | Path) -> None:
    """Write an artifact as canonical JSON (sorted keys, fixed separators)."""
    doc = {
        "version": artifact.version,
        "kind": artifact.kind,
        "seed": artifact.seed,
        "payload": artifact.payload,
    }
    text = json.dumps(doc, sort_keys=True, separators=(",", ":"), allow_nan=False)
    Path(path).write_text(text + "\n", encoding="utf-8")


def load_model(path: str | Path) -> ModelArtifact:
    """Load a model artifact, checking format version and kind."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ModelFormatError(f"cannot read model file {path}: {exc}") from exc
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ModelFormatError(
            f"corrupted model file {path}: {exc.msg} at offset {exc.pos}"
        ) from exc
    if not isinstance(doc, dict) or "version" not in doc:
        raise ModelFormatError(f"model file {path} has no version field")
    if doc["version"] != MODEL_FORMAT_VERSION:
        raise ModelFormatError(
            f"model format version mismatch: file has {doc['version']!r}, "
            f"this build supports {MODEL_FORMAT_VERSION!r}"
        )
    try:
        return ModelArtifact(
            kind=doc["kind"], version=doc["version"], seed=doc["seed"], payload=doc["payload"]
        )
    except (KeyError, ValueError) as exc:
        raise ModelFormatError(f"model file {path}: {exc}") from exc
