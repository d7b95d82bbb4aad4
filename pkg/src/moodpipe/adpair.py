"""Pairwise mood-effectiveness analysis of ad click logs.

For each ad and day, random pairs of impression records are drawn; when
exactly one record of a pair is clicked, the pair votes "positive" if the
clicked user's mood score is strictly higher and "negative" if strictly
lower (equal scores are discarded). Days are summarized by which side wins,
campaigns by the number of positive days out of the delivery period, and
the whole population is compared against the exact coin-flip binomial.

Every (ad, day) unit draws from its own RNG stream derived from
(master seed, ad id, date), making results reproducible under any
parallel schedule.
"""

from __future__ import annotations

import csv
import datetime as dt
import math
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path
from zoneinfo import ZoneInfo

import numpy as np

from .ingest import AdEvent
from .qmm import LogRegModel, Session, score_sessions

DEFAULT_TRIALS = 100_000


@dataclass
class ScoredAdRecord:
    ts: int
    user_id: str
    ad_id: str
    clicked: bool
    mood_score: float
    date: dt.date


@dataclass
class DayResult:
    ad_id: str
    date: dt.date
    positive_wins: int
    negative_wins: int
    ties_discarded: int
    trials_effective: int  # pairs with exactly one click
    day_winner: str  # "positive" | "negative" | "tie"


@dataclass
class CampaignSummary:
    ad_id: str
    days: int
    n_positive_days: int

    @property
    def bucket(self) -> str:
        return f"{self.n_positive_days}/{self.days}"


def score_ad_records(
    ad_events: list[AdEvent],
    model: LogRegModel,
    sessions: list[Session],
    tz: ZoneInfo,
) -> tuple[list[ScoredAdRecord], int]:
    """Join each impression to its user's mood score for the containing window.

    Returns (scored records, dropped count); events whose user has no
    scoreable session in that window are dropped. Fatal if nothing joins.
    """
    scores = score_sessions(model, sessions)
    by_key = {s.key(): float(v) for s, v in zip(sessions, scores)}
    scored: list[ScoredAdRecord] = []
    dropped = 0
    if ad_events:
        ts = np.asarray([e.ts for e in ad_events], dtype=np.int64)
        from .features import _local_day_slot, _day_to_date, WINDOW_HOURS

        day, slot = _local_day_slot(ts, tz, WINDOW_HOURS)
        for e, d, s in zip(ad_events, day, slot):
            date = _day_to_date(d)
            key = (e.user_id, date, int(s))
            score = by_key.get(key)
            if score is None:
                dropped += 1
                continue
            scored.append(ScoredAdRecord(e.ts, e.user_id, e.ad_id, e.clicked, score, date))
    if not scored:
        raise ValueError("no ad events joined to a mood score")
    return scored, dropped


def _rng_for(seed: int, ad_id: str, date: dt.date) -> np.random.Generator:
    return np.random.default_rng(
        np.random.SeedSequence([seed, *(ord(c) for c in ad_id), date.toordinal()])
    )


def pairwise_day(
    records: list[ScoredAdRecord], trials: int, seed: int
) -> DayResult:
    """Monte-Carlo pairwise comparison for one ad on one day.

    Each trial draws two distinct records uniformly (without replacement
    within the trial, with replacement across trials). Only pairs with
    exactly one click are informative.
    """
    n = len(records)
    if n < 2:
        ad = records[0].ad_id if records else "?"
        date = records[0].date if records else "?"
        raise ValueError(f"ad {ad} on {date}: need at least 2 records, got {n}")
    ad_id = records[0].ad_id
    date = records[0].date
    clicked = np.asarray([r.clicked for r in records], dtype=bool)
    scores = np.asarray([r.mood_score for r in records])

    rng = _rng_for(seed, ad_id, date)
    first = rng.integers(0, n, size=trials)
    second = rng.integers(0, n - 1, size=trials)
    second = second + (second >= first)

    informative = clicked[first] != clicked[second]
    a, b = first[informative], second[informative]
    clicked_score = np.where(clicked[a], scores[a], scores[b])
    other_score = np.where(clicked[a], scores[b], scores[a])
    positive = int(np.sum(clicked_score > other_score))
    negative = int(np.sum(clicked_score < other_score))
    ties = int(np.sum(clicked_score == other_score))

    if positive > negative:
        winner = "positive"
    elif negative > positive:
        winner = "negative"
    else:
        winner = "tie"
    return DayResult(
        ad_id=ad_id,
        date=date,
        positive_wins=positive,
        negative_wins=negative,
        ties_discarded=ties,
        trials_effective=positive + negative + ties,
        day_winner=winner,
    )


def positive_ratio(result: DayResult) -> float | None:
    informative = result.positive_wins + result.negative_wins
    if informative == 0:
        return None
    return result.positive_wins / informative


def exhaustive_positive_ratio(records: list[ScoredAdRecord]) -> float | None:
    """Exact ratio over all clicked x non-clicked pairs; None if all pairs tie."""
    clicked = sorted(r.mood_score for r in records if r.clicked)
    non = sorted(r.mood_score for r in records if not r.clicked)
    if not clicked or not non:
        raise ValueError("need both clicked and non-clicked records")
    non_arr = np.asarray(non)
    clicked_arr = np.asarray(clicked)
    # for each clicked score: #non strictly below, and #non equal
    below = np.searchsorted(non_arr, clicked_arr, side="left")
    below_or_eq = np.searchsorted(non_arr, clicked_arr, side="right")
    wins = int(np.sum(below))
    ties = int(np.sum(below_or_eq - below))
    pairs = len(clicked) * len(non)
    if pairs == ties:
        return None
    return wins / (pairs - ties)


def campaign_summary(day_results: list[DayResult]) -> CampaignSummary:
    """Positive-day count for one ad; tie days count as non-positive."""
    if not day_results:
        raise ValueError("campaign_summary needs at least one day result")
    ad_ids = {r.ad_id for r in day_results}
    if len(ad_ids) != 1:
        raise ValueError(f"day results span multiple ads: {sorted(ad_ids)}")
    n_pos = sum(1 for r in day_results if r.day_winner == "positive")
    return CampaignSummary(ad_id=day_results[0].ad_id, days=len(day_results), n_positive_days=n_pos)


def binomial_baseline(days: int = 14) -> list[Fraction]:
    """Exact P(k positive days | fair coin) for k = 0..days."""
    if days < 1:
        raise ValueError("days must be >= 1")
    denom = Fraction(1, 2**days)
    return [math.comb(days, k) * denom for k in range(days + 1)]


def analyze_ads(
    scored: list[ScoredAdRecord], trials: int = DEFAULT_TRIALS, seed: int = 0, days: int | None = None
) -> tuple[list[DayResult], list[CampaignSummary]]:
    """Per-(ad, day) pairwise results plus per-ad summaries.

    When ``days`` is given, only each ad's first ``days`` distinct dates are
    analyzed. Days with fewer than 2 records are skipped.
    """
    by_ad_day: dict[tuple[str, dt.date], list[ScoredAdRecord]] = {}
    for r in scored:
        by_ad_day.setdefault((r.ad_id, r.date), []).append(r)

    per_ad_dates: dict[str, list[dt.date]] = {}
    for ad_id, date in sorted(by_ad_day):
        per_ad_dates.setdefault(ad_id, []).append(date)

    day_results: list[DayResult] = []
    summaries: list[CampaignSummary] = []
    for ad_id in sorted(per_ad_dates):
        dates = per_ad_dates[ad_id]
        if days is not None:
            dates = dates[:days]
        ad_days = []
        for date in dates:
            recs = by_ad_day[(ad_id, date)]
            if len(recs) < 2:
                continue
            ad_days.append(pairwise_day(recs, trials, seed))
        if ad_days:
            day_results.extend(ad_days)
            summaries.append(campaign_summary(ad_days))
    return day_results, summaries


def positive_day_distribution(
    summaries: list[CampaignSummary], days: int = 14
) -> tuple[np.ndarray, np.ndarray]:
    """(observed fraction, baseline probability) per k = 0..days."""
    observed = np.zeros(days + 1)
    for s in summaries:
        if s.days == days:
            observed[s.n_positive_days] += 1
    if observed.sum() > 0:
        observed = observed / observed.sum()
    baseline = np.asarray([float(p) for p in binomial_baseline(days)])
    return observed, baseline


def convergence_stdev(
    records: list[ScoredAdRecord],
    trial_counts: list[int],
    repetitions: int,
    seed: int,
) -> list[tuple[int, float]]:
    """Stdev of the positive ratio across repeated samplings per trial count."""
    if len(records) < 2:
        raise ValueError("need at least 2 records")
    out = []
    for t_i, trials in enumerate(trial_counts):
        ratios = []
        for rep in range(repetitions):
            # distinct stream per (trial count, repetition)
            shifted = seed + 1_000_003 * (t_i * repetitions + rep + 1)
            result = pairwise_day(records, trials, shifted)
            ratio = positive_ratio(result)
            if ratio is not None:
                ratios.append(ratio)
        out.append((trials, float(np.std(ratios)) if ratios else float("nan")))
    return out


def write_day_results_csv(day_results: list[DayResult], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["ad", "date", "wins", "losses", "ties", "winner"])
        for r in day_results:
            writer.writerow(
                [r.ad_id, r.date.isoformat(), r.positive_wins, r.negative_wins, r.ties_discarded, r.day_winner]
            )


def write_distribution_csv(
    observed: np.ndarray, baseline: np.ndarray, path: str | Path
) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["k", "observed_fraction", "baseline_probability"])
        for k, (o, b) in enumerate(zip(observed, baseline)):
            writer.writerow([k, repr(float(o)), repr(float(b))])
