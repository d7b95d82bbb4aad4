"""Synthetic population generator with planted, recoverable ground truth.

Every user carries a latent per-window mood in [-1, 1] built from an AR(1)
process plus a weekly offset on effective Mondays/weekends and a national
component tied to the patient-count wave. All generated views are driven by
that one latent value: sensor windows shift their distributions with it,
questionnaire answers quantize it, queries draw from a mood-tilted word
mixture, and mood-effective ads click more (or less) when it is high.

Sensor windows are generated at feature-level fidelity: enough raw samples
that the per-window statistics separate mood classes, not physically
realistic traces. Everything is deterministic per seed, with per-user /
per-ad RNG substreams so output does not depend on generation order.

The ground-truth file is written under ``truth/`` next to the logs and is
meant for verification only; pipeline stages never read it.
"""

from __future__ import annotations

import datetime as dt
import json
import math
from dataclasses import dataclass, field, asdict
from pathlib import Path
from zoneinfo import ZoneInfo

import numpy as np

from .adpair import CampaignSummary
from .national import CorrelationReport, WeekdayProfile, effective_monday
from .qmm import EvalReport
from .smm import FrameLabel, map_likert

PROMPT_HOURS = (8, 10, 12, 14, 16, 18)

_USER_NS = 1
_WEATHER_NS = 2
_AD_NS = 3

# Table 1 sampling rates expressed as samples per 3-hour window
FULL_SCALE_SAMPLES = {
    "accelerometer": 108_000,  # 10 Hz
    "barometer": 10_800,  # 1 Hz
    "battery": 10_800,  # 1 Hz
    "location": 60,  # 1/180 Hz
    "weather": 180,  # 1/60 Hz
}


@dataclass
class MoodProcessConfig:
    ar_coef: float = 0.6
    noise_sigma: float = 0.35
    monday_offset: float = -0.3
    weekend_offset: float = 0.12


@dataclass
class SensorCouplingConfig:
    """How strongly each sensor channel shifts with mood (0 disables)."""

    accel_noise: float = 0.06
    battery_level: float = 60.0
    location_spread: float = 0.5
    screen_unlock: float = 0.3
    network_wifi: float = 0.25


@dataclass
class QueryConfig:
    n_positive_words: int = 1500
    n_negative_words: int = 1500
    n_neutral_words: int = 3000
    queries_per_session: int = 3
    base_word_rate: float = 0.25
    word_mood_slope: float = 0.22


@dataclass
class AdConfig:
    n_ads: int = 24
    n_mood_effective: int = 6
    impressions_per_day: int = 800
    ctr_base: float = 0.15
    ctr_mood_slope: float = 0.25
    delivery_days: int = 14


@dataclass
class PatientConfig:
    base_count: int = 50
    peak_day_fracs: tuple[float, ...] = (0.6,)
    amplitudes: tuple[float, ...] = (1200.0,)
    width_days: float = 5.0
    mood_coupling: float = 0.3


@dataclass
class SynthConfig:
    n_users: int = 200
    n_days: int = 28
    seed: int = 0
    start_date: dt.date = dt.date(2019, 11, 1)
    timezone: str = "Asia/Tokyo"
    annotation_compliance: float = 0.3
    holidays: tuple[dt.date, ...] = ()
    samples_per_window: dict[str, int] = field(
        default_factory=lambda: {
            "accelerometer": 24,
            "barometer": 8,
            "battery": 10,
            "location": 8,
            "network": 3,
            "weather": 4,
            "screen": 10,
        }
    )
    mood: MoodProcessConfig = field(default_factory=MoodProcessConfig)
    coupling: SensorCouplingConfig = field(default_factory=SensorCouplingConfig)
    queries: QueryConfig = field(default_factory=QueryConfig)
    ads: AdConfig = field(default_factory=AdConfig)
    patients: PatientConfig = field(default_factory=PatientConfig)

    def __post_init__(self) -> None:
        if not 0.0 <= self.annotation_compliance <= 1.0:
            raise ValueError("annotation_compliance must be in [0,1]")
        if self.ads.n_mood_effective > self.ads.n_ads:
            raise ValueError("n_mood_effective cannot exceed n_ads")
        for prob in (self.queries.base_word_rate, self.ads.ctr_base):
            if not 0.0 <= prob <= 1.0:
                raise ValueError("rates and probabilities must be in [0,1]")
        if self.n_users < 1 or self.n_days < 1:
            raise ValueError("n_users and n_days must be positive")

    @classmethod
    def full_scale(cls, seed: int = 0) -> "SynthConfig":
        """The original study shape: 460 users for 90 days at Table-1 rates."""
        cfg = cls(n_users=460, n_days=90, seed=seed)
        cfg.samples_per_window.update(FULL_SCALE_SAMPLES)
        return cfg


def expected_counts(config: SynthConfig) -> dict[str, int]:
    """Exact record counts implied by the config arithmetic."""
    windows = config.n_users * config.n_days * 8
    out = {f"sensor_{name}": windows * n for name, n in config.samples_per_window.items()}
    out["sensor_total"] = sum(out[f"sensor_{n}"] for n in config.samples_per_window)
    out["queries"] = windows * config.queries.queries_per_session
    out["ads"] = (
        config.ads.n_ads
        * min(config.ads.delivery_days, config.n_days)
        * config.ads.impressions_per_day
    )
    out["patients"] = config.n_days
    out["annotations_at_full_compliance"] = config.n_users * config.n_days * len(PROMPT_HOURS)
    return out


def _wave_norm(config: SynthConfig) -> np.ndarray:
    """Planted national wave in [0, 1] per day."""
    days = np.arange(config.n_days, dtype=np.float64)
    wave = np.zeros(config.n_days)
    for frac, amp in zip(config.patients.peak_day_fracs, config.patients.amplitudes):
        peak = frac * config.n_days
        wave += amp * np.exp(-0.5 * ((days - peak) / config.patients.width_days) ** 2)
    top = wave.max()
    return wave / top if top > 0 else wave


def patient_counts(config: SynthConfig) -> dict[dt.date, int]:
    wave = _wave_norm(config)
    amp = max(config.patients.amplitudes) if config.patients.amplitudes else 0.0
    out = {}
    for d in range(config.n_days):
        date = config.start_date + dt.timedelta(days=d)
        out[date] = int(round(config.patients.base_count + amp * wave[d]))
    return out


def likert_from_mood(m: float) -> int:
    return int(min(7, max(1, round(4.0 + 3.0 * m))))


def true_class(m: float) -> int:
    return map_likert(likert_from_mood(m))


@dataclass
class GroundTruth:
    """Planted signals, persisted next to the logs for verification only."""

    start_date: dt.date
    n_days: int
    latent_mood: dict[str, list[float]]  # user -> mood per (day*8 + slot)
    planted_ads: dict[str, int]  # ad id -> direction (+1 / -1)
    wave_norm: list[float]
    patients: dict[dt.date, int]
    monday_offset: float
    weekend_offset: float
    holidays: tuple[dt.date, ...]

    def mood(self, user: str, date: dt.date, slot: int) -> float:
        day = (date - self.start_date).days
        return self.latent_mood[user][day * 8 + slot]

    def true_class(self, user: str, date: dt.date, slot: int) -> int:
        return true_class(self.mood(user, date, slot))

    def save(self, path: str | Path) -> None:
        doc = {
            "start_date": self.start_date.isoformat(),
            "n_days": self.n_days,
            "monday_offset": self.monday_offset,
            "weekend_offset": self.weekend_offset,
            "holidays": [d.isoformat() for d in self.holidays],
            "wave_norm": self.wave_norm,
            "patients": {d.isoformat(): c for d, c in sorted(self.patients.items())},
            "planted_ads": dict(sorted(self.planted_ads.items())),
            "latent_mood": {u: self.latent_mood[u] for u in sorted(self.latent_mood)},
        }
        Path(path).write_text(
            json.dumps(doc, sort_keys=True, separators=(",", ":")) + "\n", encoding="utf-8"
        )

    @classmethod
    def load(cls, path: str | Path) -> "GroundTruth":
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
        return cls(
            start_date=dt.date.fromisoformat(doc["start_date"]),
            n_days=int(doc["n_days"]),
            latent_mood=doc["latent_mood"],
            planted_ads={k: int(v) for k, v in doc["planted_ads"].items()},
            wave_norm=[float(v) for v in doc["wave_norm"]],
            patients={dt.date.fromisoformat(k): int(v) for k, v in doc["patients"].items()},
            monday_offset=float(doc["monday_offset"]),
            weekend_offset=float(doc["weekend_offset"]),
            holidays=tuple(dt.date.fromisoformat(d) for d in doc["holidays"]),
        )


def _window_start_ms(date: dt.date, slot: int, tz: ZoneInfo) -> int:
    return int(dt.datetime.combine(date, dt.time(hour=slot * 3), tzinfo=tz).timestamp() * 1000)


def _latent_mood_for_user(
    config: SynthConfig, rng: np.random.Generator, wave: np.ndarray
) -> np.ndarray:
    """AR(1) plus weekly and national components, clipped to [-1, 1]."""
    n = config.n_days * 8
    ar, sigma = config.mood.ar_coef, config.mood.noise_sigma
    stationary = sigma / math.sqrt(max(1.0 - ar * ar, 1e-9))
    z = np.empty(n)
    z[0] = rng.normal(0.0, stationary)
    noise = rng.normal(0.0, sigma, size=n)
    for t in range(1, n):
        z[t] = ar * z[t - 1] + noise[t]
    holidays = frozenset(config.holidays)
    m = z.copy()
    for day in range(config.n_days):
        date = config.start_date + dt.timedelta(days=day)
        offset = 0.0
        if date.weekday() >= 5:
            offset += config.mood.weekend_offset
        else:
            monday = date - dt.timedelta(days=date.weekday())
            if date == effective_monday(monday, holidays):
                offset += config.mood.monday_offset
        offset -= config.patients.mood_coupling * wave[day]
        m[day * 8 : (day + 1) * 8] += offset
    return np.clip(m, -1.0, 1.0)


def _daily_weather(config: SynthConfig, tz: ZoneInfo) -> dict[tuple[int, int], list[dict]]:
    """One shared weather block per (day, slot); all users observe it."""
    rng = np.random.default_rng(np.random.SeedSequence([config.seed, _WEATHER_NS]))
    out: dict[tuple[int, int], list[dict]] = {}
    n = config.samples_per_window["weather"]
    for day in range(config.n_days):
        date = config.start_date + dt.timedelta(days=day)
        doy = date.timetuple().tm_yday
        for slot in range(8):
            base_temp = 12.0 + 8.0 * math.sin(2 * math.pi * (doy - 120) / 365.0)
            diurnal = 3.0 * math.sin(2 * math.pi * (slot * 3 - 6) / 24.0)
            code = int(rng.integers(0, 10))
            start = _window_start_ms(date, slot, tz)
            step = (3 * 3_600_000) // max(n, 1)
            samples = []
            temp = base_temp + diurnal + rng.normal(0, 0.5)
            for i in range(n):
                samples.append(
                    {
                        "ts": start + i * step,
                        "type": code,
                        "temp": round(temp + rng.normal(0, 0.2), 3),
                        "humidity": round(float(np.clip(60 + rng.normal(0, 8), 0, 100)), 2),
                        "pressure": round(1013 + rng.normal(0, 2), 2),
                        "wind": round(abs(rng.normal(3, 1.5)), 2),
                        "cloudiness": round(float(np.clip(rng.normal(40, 25), 0, 100)), 1),
                        "precipitation": round(max(0.0, rng.normal(-1.0, 1.0)), 2),
                        "visibility": round(float(np.clip(rng.normal(10000, 2000), 100, 20000)), 0),
                    }
                )
            out[(day, slot)] = samples
    return out


def _emit_user_window_sensors(
    fh,
    user: str,
    date: dt.date,
    slot: int,
    u01: float,
    config: SynthConfig,
    rng: np.random.Generator,
    weather_samples: list[dict],
    home: tuple[float, float],
    tz: ZoneInfo,
) -> int:
    spw = config.samples_per_window
    start = _window_start_ms(date, slot, tz)
    window_ms = 3 * 3_600_000
    cpl = config.coupling

    # accelerometer: noise scale grows with mood (more active when positive)
    n = spw["accelerometer"]
    sigma = 0.02 + cpl.accel_noise * u01
    step = window_ms // n
    xs = rng.normal(0.0, sigma, size=n)
    ys = rng.normal(0.0, sigma, size=n)
    zs = rng.normal(1.0, sigma, size=n)
    for i in range(n):
        fh.write(
            f'{{"user":"{user}","sensor":"accelerometer","ts":{start + i * step},'
            f'"x":{float(xs[i])!r},"y":{float(ys[i])!r},"z":{float(zs[i])!r}}}\n'
        )

    # barometer: uncoupled ambient pressure
    n = spw["barometer"]
    step = window_ms // n
    for i in range(n):
        hpa = float(1013.0 + rng.normal(0, 0.4))
        fh.write(f'{{"user":"{user}","sensor":"barometer","ts":{start + i * step},"hpa":{hpa!r}}}\n')

    # battery: mean level tracks mood; occasional uncoupled charging run
    n = spw["battery"]
    step = window_ms // n
    level = float(np.clip(20.0 + cpl.battery_level * u01 + rng.normal(0, 3), 0, 100))
    charging = np.zeros(n, dtype=int)
    if rng.random() < 0.3 and n >= 2:
        a = int(rng.integers(0, n - 1))
        b = int(rng.integers(a + 1, n + 1))
        charging[a:b] = 1
    for i in range(n):
        drift = float(np.clip(level + rng.normal(0, 0.5) + (2.0 if charging[i] else -0.5) * i / n, 0, 100))
        fh.write(
            f'{{"user":"{user}","sensor":"battery","ts":{start + i * step},'
            f'"level":{drift!r},"charging":{int(charging[i])}}}\n'
        )

    # location: second cluster visited more when mood is high
    n = spw["location"]
    step = window_ms // n
    away_frac = min(0.9, cpl.location_spread * u01)
    for i in range(n):
        if rng.random() < away_frac:
            lat, lon = home[0] + 0.02, home[1] + 0.02
        else:
            lat, lon = home
        lat = float(lat + rng.normal(0, 2e-4))
        lon = float(lon + rng.normal(0, 2e-4))
        fh.write(
            f'{{"user":"{user}","sensor":"location","ts":{start + i * step},'
            f'"lat":{lat!r},"lon":{lon!r}}}\n'
        )

    # network: wifi share rises with mood
    n = spw["network"]
    step = window_ms // n
    p_wifi = float(np.clip(0.4 + cpl.network_wifi * u01, 0.0, 0.95))
    for i in range(n):
        r = rng.random()
        kind = "wifi" if r < p_wifi else ("mobile" if r < p_wifi + 0.8 * (1 - p_wifi) else "none")
        fh.write(
            f'{{"user":"{user}","sensor":"network","ts":{start + i * step},"type":"{kind}"}}\n'
        )

    # weather: shared national block
    for s in weather_samples:
        fh.write(
            f'{{"user":"{user}","sensor":"weather","ts":{s["ts"]},"type":{s["type"]},'
            f'"temp":{s["temp"]},"humidity":{s["humidity"]},"pressure":{s["pressure"]},'
            f'"wind":{s["wind"]},"cloudiness":{s["cloudiness"]},'
            f'"precipitation":{s["precipitation"]},"visibility":{s["visibility"]}}}\n'
        )

    # screen: unlock share rises with mood
    n = spw["screen"]
    p_unlock = float(np.clip(0.15 + cpl.screen_unlock * u01, 0.0, 0.9))
    p_interaction = 0.35
    rest = max(0.0, 1.0 - p_unlock - p_interaction)
    probs = [rest / 2, rest / 2, p_unlock, p_interaction]
    times = np.sort(rng.integers(0, window_ms, size=n))
    names = ("on", "off", "unlock", "interaction")
    kinds = rng.choice(4, size=n, p=np.asarray(probs) / sum(probs))
    for i in range(n):
        fh.write(
            f'{{"user":"{user}","sensor":"screen","ts":{start + int(times[i])},'
            f'"event":"{names[kinds[i]]}"}}\n'
        )
    return sum(spw.values())


def generate(config: SynthConfig, out_dir: str | Path) -> GroundTruth:
    """Write all input logs plus the ground-truth file; returns the truth.

    Outputs: sensors.jsonl, annotations.jsonl, queries.jsonl, ads.csv,
    patients.csv, holidays.txt, truth/ground_truth.json. Deterministic per
    seed; record counts match :func:`expected_counts` exactly for the
    non-stochastic files.
    """
    out = Path(out_dir)
    (out / "truth").mkdir(parents=True, exist_ok=True)
    tz = ZoneInfo(config.timezone)
    wave = _wave_norm(config)
    counts = expected_counts(config)

    weather = _daily_weather(config, tz)
    users = [f"u{i:04d}" for i in range(config.n_users)]

    qc = config.queries
    pos_words = [f"pos{i:04d}" for i in range(qc.n_positive_words)]
    neg_words = [f"neg{i:04d}" for i in range(qc.n_negative_words)]
    mid_words = [f"mid{i:04d}" for i in range(qc.n_neutral_words)]

    latent: dict[str, list[float]] = {}
    n_sensor_rows = 0
    n_query_rows = 0
    with (
        open(out / "sensors.jsonl", "w", encoding="utf-8") as sensor_fh,
        open(out / "annotations.jsonl", "w", encoding="utf-8") as ann_fh,
        open(out / "queries.jsonl", "w", encoding="utf-8") as query_fh,
    ):
        for uidx, user in enumerate(users):
            rng = np.random.default_rng(np.random.SeedSequence([config.seed, _USER_NS, uidx]))
            m = _latent_mood_for_user(config, rng, wave)
            latent[user] = [float(v) for v in m]
            home = (35.0 + 0.01 * uidx, 139.0 + 0.005 * uidx)
            for day in range(config.n_days):
                date = config.start_date + dt.timedelta(days=day)
                for slot in range(8):
                    mood = m[day * 8 + slot]
                    u01 = (mood + 1.0) / 2.0
                    n_sensor_rows += _emit_user_window_sensors(
                        sensor_fh, user, date, slot, u01, config, rng, weather[(day, slot)], home, tz
                    )
                    # queries: mood-tilted word mixture, fixed count per window
                    start = _window_start_ms(date, slot, tz)
                    q_times = rng.integers(0, 3 * 3_600_000, size=qc.queries_per_session)
                    p_pos = float(np.clip(qc.base_word_rate + qc.word_mood_slope * mood, 0.01, 0.95))
                    p_neg = float(np.clip(qc.base_word_rate - qc.word_mood_slope * mood, 0.01, 0.95))
                    for qi in range(qc.queries_per_session):
                        r = rng.random()
                        if r < p_pos:
                            word = pos_words[rng.integers(len(pos_words))]
                        elif r < p_pos + p_neg:
                            word = neg_words[rng.integers(len(neg_words))]
                        else:
                            word = mid_words[rng.integers(len(mid_words))]
                        query_fh.write(
                            f'{{"user":"{user}","ts":{start + int(q_times[qi])},"q":"{word}"}}\n'
                        )
                        n_query_rows += 1
                # annotations at the six prompt hours
                for hour in PROMPT_HOURS:
                    if rng.random() >= config.annotation_compliance:
                        continue
                    slot = hour // 3
                    likert = likert_from_mood(m[day * 8 + slot])
                    ts = int(
                        dt.datetime.combine(date, dt.time(hour=hour), tzinfo=tz).timestamp() * 1000
                    )
                    ann_fh.write(f'{{"user":"{user}","ts":{ts},"likert":{likert}}}\n')

    if n_query_rows != counts["queries"]:
        raise AssertionError(f"query rows {n_query_rows} != expected {counts['queries']}")
    if n_sensor_rows != counts["sensor_total"]:
        raise AssertionError(f"sensor rows {n_sensor_rows} != expected {counts['sensor_total']}")

    # ads: planted mood-effective ads alternate direction
    planted: dict[str, int] = {}
    ac = config.ads
    delivery_days = min(ac.delivery_days, config.n_days)
    n_ad_rows = 0
    with open(out / "ads.csv", "w", encoding="utf-8", newline="") as fh:
        fh.write("ts,user,ad,clicked\n")
        for aidx in range(ac.n_ads):
            ad_id = f"ad{aidx:03d}"
            direction = 0
            if aidx < ac.n_mood_effective:
                direction = 1 if aidx % 2 == 0 else -1
                planted[ad_id] = direction
            rng = np.random.default_rng(np.random.SeedSequence([config.seed, _AD_NS, aidx]))
            for day in range(delivery_days):
                date = config.start_date + dt.timedelta(days=day)
                day_start = _window_start_ms(date, 0, tz)
                offsets = np.sort(rng.integers(0, 24 * 3_600_000, size=ac.impressions_per_day))
                viewers = rng.integers(0, config.n_users, size=ac.impressions_per_day)
                rolls = rng.random(ac.impressions_per_day)
                for off, viewer, roll in zip(offsets, viewers, rolls):
                    slot = int(off // (3 * 3_600_000))
                    mood = latent[users[viewer]][day * 8 + slot]
                    u01 = (mood + 1.0) / 2.0
                    p = ac.ctr_base + direction * ac.ctr_mood_slope * (u01 - 0.5)
                    clicked = 1 if roll < min(max(p, 0.001), 0.999) else 0
                    fh.write(f"{day_start + int(off)},{users[viewer]},{ad_id},{clicked}\n")
                    n_ad_rows += 1
    if n_ad_rows != counts["ads"]:
        raise AssertionError(f"ad rows {n_ad_rows} != expected {counts['ads']}")

    patients = patient_counts(config)
    with open(out / "patients.csv", "w", encoding="utf-8", newline="") as fh:
        fh.write("date,count\n")
        for date in sorted(patients):
            fh.write(f"{date.isoformat()},{patients[date]}\n")

    with open(out / "holidays.txt", "w", encoding="utf-8") as fh:
        for d in sorted(config.holidays):
            fh.write(d.isoformat() + "\n")

    truth = GroundTruth(
        start_date=config.start_date,
        n_days=config.n_days,
        latent_mood=latent,
        planted_ads=planted,
        wave_norm=[float(v) for v in wave],
        patients=patients,
        monday_offset=config.mood.monday_offset,
        weekend_offset=config.mood.weekend_offset,
        holidays=config.holidays,
    )
    truth.save(out / "truth" / "ground_truth.json")
    return truth


@dataclass
class RecoveryReport:
    """How well the pipeline recovered each planted signal."""

    smm_accuracy: float
    smm_n: int
    qmm_accuracy_with: float | None
    qmm_accuracy_without: float | None
    qmm_gap: float | None
    qmm_n_train_with: int | None
    qmm_n_train_without: int | None
    ad_true_positives: int
    ad_false_positives: int
    ad_false_negatives: int
    weekday_dip_on_effective_monday: bool
    correlation_r: float | None

    @property
    def ad_precision(self) -> float | None:
        flagged = self.ad_true_positives + self.ad_false_positives
        return self.ad_true_positives / flagged if flagged else None

    @property
    def ad_recall(self) -> float | None:
        planted = self.ad_true_positives + self.ad_false_negatives
        return self.ad_true_positives / planted if planted else None

    def as_text(self) -> str:
        lines = [
            f"smm_accuracy_vs_latent {self.smm_accuracy:.3f} (n={self.smm_n})",
            f"qmm_accuracy with={self.qmm_accuracy_with} without={self.qmm_accuracy_without} gap={self.qmm_gap}",
            f"qmm_n_train with={self.qmm_n_train_with} without={self.qmm_n_train_without}",
            f"ad_recovery tp={self.ad_true_positives} fp={self.ad_false_positives} "
            f"fn={self.ad_false_negatives} precision={self.ad_precision} recall={self.ad_recall}",
            f"weekday_dip_on_effective_monday {self.weekday_dip_on_effective_monday}",
            f"mood_patient_correlation_r {self.correlation_r}",
        ]
        return "\n".join(lines)


def flagged_ads(summaries: list[CampaignSummary], win_threshold: int = 13) -> set[str]:
    """Ads whose positive days (or losses) reach the threshold."""
    out = set()
    for s in summaries:
        if s.n_positive_days >= win_threshold or (s.days - s.n_positive_days) >= win_threshold:
            out.add(s.ad_id)
    return out


def verify_recovery(
    truth: GroundTruth,
    frame_labels: list[FrameLabel],
    summaries: list[CampaignSummary],
    weekday: WeekdayProfile,
    correlation: CorrelationReport,
    eval_with: EvalReport | None = None,
    eval_without: EvalReport | None = None,
    win_threshold: int = 13,
) -> RecoveryReport:
    """Score pipeline outputs against the planted ground truth."""
    if not frame_labels:
        raise ValueError("missing stage output: frame labels (predict-smm)")
    if not summaries:
        raise ValueError("missing stage output: campaign summaries (ad-pairwise)")

    hits = 0
    for lab in frame_labels:
        if lab.predicted == truth.true_class(lab.user_id, lab.date, lab.slot):
            hits += 1
    smm_accuracy = hits / len(frame_labels)

    flagged = flagged_ads(summaries, win_threshold)
    planted = set(truth.planted_ads)
    tp = len(flagged & planted)
    fp = len(flagged - planted)
    fn = len(planted - flagged)

    gap = None
    if eval_with is not None and eval_without is not None:
        gap = eval_with.accuracy_mean - eval_without.accuracy_mean

    return RecoveryReport(
        smm_accuracy=smm_accuracy,
        smm_n=len(frame_labels),
        qmm_accuracy_with=None if eval_with is None else eval_with.accuracy_mean,
        qmm_accuracy_without=None if eval_without is None else eval_without.accuracy_mean,
        qmm_gap=gap,
        qmm_n_train_with=None if eval_with is None else eval_with.n_train,
        qmm_n_train_without=None if eval_without is None else eval_without.n_train,
        ad_true_positives=tp,
        ad_false_positives=fp,
        ad_false_negatives=fn,
        weekday_dip_on_effective_monday=weekday.min_weekday() == 0,
        correlation_r=correlation.r,
    )


def config_to_dict(config: SynthConfig) -> dict:
    doc = asdict(config)
    doc["start_date"] = config.start_date.isoformat()
    doc["holidays"] = [d.isoformat() for d in config.holidays]
    return doc


def config_from_dict(doc: dict) -> SynthConfig:
    doc = dict(doc)
    kwargs = {}
    for simple in (
        "n_users",
        "n_days",
        "seed",
        "timezone",
        "annotation_compliance",
    ):
        if simple in doc:
            kwargs[simple] = doc[simple]
    if "start_date" in doc:
        kwargs["start_date"] = dt.date.fromisoformat(doc["start_date"])
    if "holidays" in doc:
        kwargs["holidays"] = tuple(dt.date.fromisoformat(d) for d in doc["holidays"])
    if "samples_per_window" in doc:
        kwargs["samples_per_window"] = dict(doc["samples_per_window"])
    for name, cls in (
        ("mood", MoodProcessConfig),
        ("coupling", SensorCouplingConfig),
        ("queries", QueryConfig),
        ("ads", AdConfig),
        ("patients", PatientConfig),
    ):
        if name in doc:
            section = dict(doc[name])
            for key in ("peak_day_fracs", "amplitudes"):
                if key in section:
                    section[key] = tuple(section[key])
            kwargs[name] = cls(**section)
    return SynthConfig(**kwargs)
