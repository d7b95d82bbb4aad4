"""Daily national mood series and its downstream analyses.

The daily national score is the unweighted mean, over users active that
day, of each user's mean session score. Series can be normalized to the
year's first Sunday, compared across years Sunday-by-Sunday, profiled by
weekday (with holiday-aware effective Mondays), and correlated against
daily patient counts.
"""

from __future__ import annotations

import csv
import datetime as dt
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .qmm import LogRegModel, Session, score_sessions

logger = logging.getLogger(__name__)

RAW = "raw"
FIRST_SUNDAY = "first_sunday"
RELATIVE_TO_YEAR = "relative_to_year"

WEEKDAY_NAMES = ("Mon", "Tue", "Wed", "Thu", "Fri", "Sat", "Sun")


@dataclass
class MoodSeries:
    """Dated score sequence; dates are strictly increasing, never invented."""

    dates: list[dt.date]
    scores: np.ndarray
    population: np.ndarray  # active users per day
    normalization: str = RAW

    def __post_init__(self) -> None:
        if list(self.dates) != sorted(set(self.dates)):
            raise ValueError("series dates must be strictly increasing")
        self.scores = np.asarray(self.scores, dtype=np.float64)
        self.population = np.asarray(self.population, dtype=np.int64)
        if not (len(self.dates) == self.scores.shape[0] == self.population.shape[0]):
            raise ValueError("dates, scores, population lengths differ")

    def __len__(self) -> int:
        return len(self.dates)

    def score_on(self, date: dt.date) -> float | None:
        try:
            return float(self.scores[self.dates.index(date)])
        except ValueError:
            return None

    def gaps(self) -> list[dt.date]:
        """Calendar days missing between the first and last date."""
        if not self.dates:
            return []
        have = set(self.dates)
        day = self.dates[0]
        out = []
        while day <= self.dates[-1]:
            if day not in have:
                out.append(day)
            day += dt.timedelta(days=1)
        return out


@dataclass
class WeekdayProfile:
    means: np.ndarray  # Mon..Sun, NaN where no data
    counts: np.ndarray
    holiday_adjusted: bool

    def min_weekday(self) -> int:
        """Index (0=Mon) of the lowest mean, ignoring empty weekdays."""
        masked = np.where(np.isnan(self.means), np.inf, self.means)
        return int(np.argmin(masked))


@dataclass
class CorrelationReport:
    r: float | None  # None when either side has zero variance
    n: int
    by_lag: dict[int, float | None] = field(default_factory=dict)


def daily_user_score(session_scores: list[float]) -> float:
    """Mean of one user's session scores for one day (callers skip empty days)."""
    if not session_scores:
        raise ValueError("daily_user_score needs at least one session score")
    return float(np.mean(session_scores))


def daily_scores(
    sessions: list[Session], model: LogRegModel
) -> dict[dt.date, dict[str, float]]:
    """Per-day, per-user daily mood scores over all sessions with queries."""
    if not sessions:
        return {}
    scores = score_sessions(model, sessions)
    per_user_day: dict[tuple[dt.date, str], list[float]] = {}
    for s, v in zip(sessions, scores):
        per_user_day.setdefault((s.date, s.user_id), []).append(float(v))
    out: dict[dt.date, dict[str, float]] = {}
    for (date, user), vals in per_user_day.items():
        out.setdefault(date, {})[user] = daily_user_score(vals)
    return out


def daily_national_score(per_day_user_scores: dict[dt.date, dict[str, float]]) -> MoodSeries:
    """Unweighted mean over each day's active users (dedup by user id)."""
    dates = sorted(per_day_user_scores)
    values, population = [], []
    for date in dates:
        users = per_day_user_scores[date]
        if not users:
            raise ValueError(f"day {date} has zero active users; gaps must be absent days")
        values.append(float(np.mean(list(users.values()))))
        population.append(len(users))
    return MoodSeries(dates, np.asarray(values), np.asarray(population), RAW)


def first_sunday_of_year(year: int) -> dt.date:
    day = dt.date(year, 1, 1)
    return day + dt.timedelta(days=(6 - day.weekday()) % 7)


def normalize_first_sunday(series: MoodSeries, year: int) -> MoodSeries:
    """Divide the whole series by its value on the year's first Sunday."""
    baseline_date = first_sunday_of_year(year)
    baseline = series.score_on(baseline_date)
    if baseline is None:
        raise ValueError(f"series does not cover the first Sunday of {year} ({baseline_date})")
    if baseline == 0.0:
        raise ValueError(f"first-Sunday baseline on {baseline_date} is zero")
    return MoodSeries(
        list(series.dates), series.scores / baseline, series.population.copy(), FIRST_SUNDAY
    )


def _sundays_by_week(series: MoodSeries) -> dict[int, tuple[dt.date, float]]:
    sundays = [(d, float(s)) for d, s in zip(series.dates, series.scores) if d.weekday() == 6]
    if not sundays:
        return {}
    first = sundays[0][0]
    return {(d - first).days // 7: (d, s) for d, s in sundays}


def relative_series(target: MoodSeries, base: MoodSeries) -> MoodSeries:
    """Sunday-by-Sunday ratio target/base, matched on week-of-year index.

    Values above 1 mean the target year scored higher that week. Weeks
    present in only one series are skipped with a warning.
    """
    for name, s in (("target", target), ("base", base)):
        if s.normalization != FIRST_SUNDAY:
            raise ValueError(f"{name} series must be first-Sunday normalized")
    t_weeks = _sundays_by_week(target)
    b_weeks = _sundays_by_week(base)
    common = sorted(set(t_weeks) & set(b_weeks))
    skipped = sorted(set(t_weeks) ^ set(b_weeks))
    if skipped:
        logger.warning("relative_series: %d unmatched weeks skipped", len(skipped))
    dates, values = [], []
    for week in common:
        t_date, t_score = t_weeks[week]
        _, b_score = b_weeks[week]
        if b_score == 0.0:
            logger.warning("relative_series: base score 0 on week %d skipped", week)
            continue
        dates.append(t_date)
        values.append(t_score / b_score)
    return MoodSeries(dates, np.asarray(values), np.zeros(len(dates), dtype=np.int64), RELATIVE_TO_YEAR)


def effective_monday(week_monday: dt.date, holidays: frozenset[dt.date] | set[dt.date]) -> dt.date | None:
    """First working day of the week starting at ``week_monday``."""
    for i in range(5):
        day = week_monday + dt.timedelta(days=i)
        if day not in holidays:
            return day
    return None


def weekday_profile(
    series: MoodSeries, holidays: set[dt.date] | None = None, min_weeks: int = 4
) -> WeekdayProfile:
    """Per-weekday mean scores.

    Without holidays this is the plain calendar-weekday profile. With
    holidays, each week's first working day is bucketed as Monday (the
    effective Monday), weekday holidays are excluded, and weekends keep
    their buckets.
    """
    iso_weeks = {d.isocalendar()[:2] for d in series.dates}
    if len(iso_weeks) < min_weeks:
        raise ValueError(f"weekday profile needs >= {min_weeks} weeks, got {len(iso_weeks)}")
    sums = np.zeros(7)
    counts = np.zeros(7, dtype=np.int64)
    adjusted = holidays is not None
    holiday_set = frozenset(holidays or ())
    eff_monday_cache: dict[dt.date, dt.date | None] = {}
    for date, score in zip(series.dates, series.scores):
        weekday = date.weekday()
        if adjusted and weekday < 5:
            week_monday = date - dt.timedelta(days=weekday)
            if week_monday not in eff_monday_cache:
                eff_monday_cache[week_monday] = effective_monday(week_monday, holiday_set)
            if date in holiday_set:
                continue  # a weekday holiday is not a working day
            if date == eff_monday_cache[week_monday]:
                weekday = 0
            elif weekday == 0:
                continue  # unreachable: a non-holiday Monday is the effective Monday
        sums[weekday] += float(score)
        counts[weekday] += 1
    means = np.where(counts > 0, sums / np.maximum(counts, 1), np.nan)
    return WeekdayProfile(means=means, counts=counts, holiday_adjusted=adjusted)


def _pearson(x: np.ndarray, y: np.ndarray) -> float | None:
    sx, sy = float(np.std(x)), float(np.std(y))
    if sx == 0.0 or sy == 0.0:
        return None
    return float(np.mean((x - x.mean()) * (y - y.mean())) / (sx * sy))


def mood_patient_correlation(
    series: MoodSeries, patient_counts: dict[dt.date, int], max_lag: int = 7
) -> CorrelationReport:
    """Pearson r on matched dates, plus r with patients lagged 0..max_lag days.

    Lag L correlates the mood on day d with the patient count on day d - L.
    """
    by_lag: dict[int, float | None] = {}
    r0: float | None = None
    n0 = 0
    for lag in range(max_lag + 1):
        xs, ys = [], []
        for date, score in zip(series.dates, series.scores):
            patients = patient_counts.get(date - dt.timedelta(days=lag))
            if patients is not None:
                xs.append(float(score))
                ys.append(float(patients))
        if lag == 0:
            n0 = len(xs)
            if n0 < 8:
                raise ValueError(f"need >= 8 overlapping dates, got {n0}")
        r = _pearson(np.asarray(xs), np.asarray(ys)) if len(xs) >= 2 else None
        if r is None and len(xs) >= 2:
            logger.warning("correlation undefined at lag %d (zero variance)", lag)
        by_lag[lag] = r
        if lag == 0:
            r0 = r
    return CorrelationReport(r=r0, n=n0, by_lag=by_lag)


def write_series_csv(series: MoodSeries, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["date", "score", "n_users"])
        for date, score, pop in zip(series.dates, series.scores, series.population):
            writer.writerow([date.isoformat(), repr(float(score)), int(pop)])


def read_series_csv(path: str | Path, normalization: str = RAW) -> MoodSeries:
    dates, scores, pops = [], [], []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header != ["date", "score", "n_users"]:
            raise ValueError(f"{path}: unexpected series CSV header")
        for row in reader:
            dates.append(dt.date.fromisoformat(row[0]))
            scores.append(float(row[1]))
            pops.append(int(row[2]))
    return MoodSeries(dates, np.asarray(scores), np.asarray(pops), normalization)


def read_holidays(path: str | Path) -> set[dt.date]:
    """One ISO date per line; blank lines and '#' comments ignored."""
    out = set()
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        out.add(dt.date.fromisoformat(line))
    return out
