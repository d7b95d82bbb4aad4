"""Single moodpipe binary: every pipeline stage as a subcommand.

All stage parameters come from one TOML run config (see ``--config``); the
``MOODPIPE_SEED`` environment variable overrides the config seed. Outputs go
under the config's ``paths.out_dir`` with fixed file names so stages chain
without extra flags. Exit codes: 0 success, 1 runtime error (single-line
``error: ...`` on stderr), 2 usage.
"""

from __future__ import annotations

import argparse
import datetime as dt
import json
import logging
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path
from zoneinfo import ZoneInfo

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from . import adpair, features, ingest, national, qmm, smm, synth

logger = logging.getLogger("moodpipe")

ENV_SEED = "MOODPIPE_SEED"

# fixed artifact names under out_dir
FRAMES_CSV = "frames.csv"
SMM_MODEL = "smm.json"
CV_REPORT = "cv_smm.txt"
FRAME_LABELS_CSV = "frame_labels.csv"
SESSIONS_JSONL = "sessions_{mode}.jsonl"
QMM_MODEL = "qmm_{mode}.json"
EVAL_JSON = "eval_{mode}.json"
SCORED_SESSIONS_CSV = "scored_sessions.csv"
AD_DAYS_CSV = "ad_days.csv"
AD_DISTRIBUTION_CSV = "ad_distribution.csv"
AD_DISTRIBUTION_SVG = "ad_distribution.svg"
NATIONAL_CSV = "national.csv"
NATIONAL_SVG = "national.svg"
RECOVERY_TXT = "recovery.txt"


class StageError(Exception):
    """Runtime failure with a single-line, machine-parsable message."""


@dataclass
class RunConfig:
    timezone: str = "Asia/Tokyo"
    seed: int = 0
    verbosity: int = 1
    data_dir: Path = Path("data")
    out_dir: Path = Path("out")
    synth: dict = field(default_factory=dict)
    smm: dict = field(default_factory=dict)
    qmm: dict = field(default_factory=dict)
    adpair: dict = field(default_factory=dict)
    national: dict = field(default_factory=dict)

    @property
    def tz(self) -> ZoneInfo:
        return ZoneInfo(self.timezone)

    def forest_params(self) -> smm.ForestParams:
        p = smm.ForestParams()
        for name in ("n_trees", "max_depth", "min_leaf", "features_per_split"):
            if name in self.smm:
                setattr(p, name, int(self.smm[name]))
        return p


CONFIG_KEYS = {
    "synth-gen": ["seed", "timezone", "synth.* (generator fields)"],
    "extract-features": ["timezone", "paths.data_dir", "paths.out_dir"],
    "train-smm": ["seed", "paths.out_dir", "smm.n_trees", "smm.max_depth", "smm.min_leaf", "smm.features_per_split"],
    "cv-smm": ["seed", "paths.out_dir", "smm.n_trees", "smm.max_depth", "smm.min_leaf", "smm.features_per_split", "smm.cv_folds"],
    "predict-smm": ["paths.out_dir"],
    "build-sessions": ["timezone", "paths.data_dir", "paths.out_dir", "qmm.min_confidence"],
    "train-qmm": ["seed", "paths.out_dir", "qmm.min_df", "qmm.max_size", "qmm.l2_lambda"],
    "eval-qmm": ["seed", "paths.out_dir", "qmm.min_df", "qmm.max_size", "qmm.l2_lambda", "qmm.splits", "qmm.train_frac"],
    "score": ["timezone", "paths.data_dir", "paths.out_dir"],
    "ad-pairwise": ["seed", "timezone", "paths.data_dir", "paths.out_dir", "adpair.trials", "adpair.days"],
    "national-mood": ["timezone", "paths.data_dir", "paths.out_dir", "national.normalize", "national.year"],
    "verify-recovery": ["timezone", "paths.data_dir", "paths.out_dir", "adpair.days", "adpair.win_threshold"],
}


def load_config(path: str | Path) -> RunConfig:
    path = Path(path)
    if not path.is_file():
        raise StageError(f"config file not found: {path}")
    with open(path, "rb") as fh:
        doc = tomllib.load(fh)
    paths = doc.get("paths", {})
    cfg = RunConfig(
        timezone=doc.get("timezone", "Asia/Tokyo"),
        seed=int(doc.get("seed", 0)),
        verbosity=int(doc.get("verbosity", 1)),
        data_dir=Path(paths.get("data_dir", "data")),
        out_dir=Path(paths.get("out_dir", "out")),
        synth=doc.get("synth", {}),
        smm=doc.get("smm", {}),
        qmm=doc.get("qmm", {}),
        adpair=doc.get("adpair", {}),
        national=doc.get("national", {}),
    )
    env_seed = os.environ.get(ENV_SEED)
    if env_seed is not None:
        cfg.seed = int(env_seed)
    return cfg


def _require(path: Path, stage_hint: str) -> Path:
    if not path.is_file():
        raise StageError(f"missing input {path} (produce it with: {stage_hint})")
    return path


def _data_paths(cfg: RunConfig) -> dict[str, Path]:
    d = cfg.data_dir
    return {
        "sensors": d / "sensors.jsonl",
        "annotations": d / "annotations.jsonl",
        "queries": d / "queries.jsonl",
        "ads": d / "ads.csv",
        "patients": d / "patients.csv",
        "holidays": d / "holidays.txt",
        "truth": d / "truth" / "ground_truth.json",
    }


# -- stage handlers ----------------------------------------------------------


def cmd_synth_gen(cfg: RunConfig, args: argparse.Namespace) -> None:
    doc = dict(cfg.synth)
    doc.setdefault("seed", cfg.seed)
    doc.setdefault("timezone", cfg.timezone)
    sc = synth.config_from_dict(doc)
    out = Path(args.out) if args.out else cfg.data_dir
    out.mkdir(parents=True, exist_ok=True)
    truth = synth.generate(sc, out)
    counts = synth.expected_counts(sc)
    print(
        f"generated {sc.n_users} users x {sc.n_days} days at {out} "
        f"({counts['sensor_total']} sensor rows, {counts['queries']} queries, "
        f"{counts['ads']} ad rows, {len(truth.planted_ads)} planted ads)"
    )


def cmd_extract_features(cfg: RunConfig, args: argparse.Namespace) -> None:
    paths = _data_paths(cfg)
    stream, stats = ingest.parse_sensor_log(_require(paths["sensors"], "synth-gen"))
    annotations, ann_stats = ingest.parse_annotation_log(
        _require(paths["annotations"], "synth-gen"), cfg.tz
    )
    frames = features.compute_frames(stream, cfg.tz)
    dropped = features.attach_annotations(frames, annotations, cfg.tz)
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    features.write_frames_csv(frames, cfg.out_dir / FRAMES_CSV)
    n_labeled = sum(1 for f in frames if f.annotation is not None)
    print(
        f"extracted {len(frames)} frames ({n_labeled} labeled, {dropped} annotations "
        f"outside windows, {stats.n_warnings + ann_stats.n_warnings} parse warnings)"
    )


def _load_labeled_matrix(cfg: RunConfig):
    frames = features.read_frames_csv(
        _require(cfg.out_dir / FRAMES_CSV, "extract-features")
    )
    labeled = [f for f in frames if f.annotation is not None]
    if not labeled:
        raise StageError("no labeled frames in frames.csv")
    X = np.stack([f.vector for f in labeled])
    y = np.asarray([smm.map_likert(f.annotation) for f in labeled])
    groups = np.asarray([f.user_id for f in labeled])
    return frames, labeled, X, y, groups


def cmd_train_smm(cfg: RunConfig, args: argparse.Namespace) -> None:
    _, labeled, X, y, _ = _load_labeled_matrix(cfg)
    forest = smm.train_forest(X, y, cfg.forest_params(), seed=cfg.seed, n_jobs=args.threads)
    ingest.save_model(smm.forest_to_artifact(forest), cfg.out_dir / SMM_MODEL)
    print(f"trained forest on {len(labeled)} labeled frames -> {cfg.out_dir / SMM_MODEL}")


def cmd_cv_smm(cfg: RunConfig, args: argparse.Namespace) -> None:
    _, _, X, y, groups = _load_labeled_matrix(cfg)
    k = int(cfg.smm.get("cv_folds", 10))
    report = smm.cross_validate(
        X, y, groups, k=k, params=cfg.forest_params(), seed=cfg.seed, n_jobs=args.threads
    )
    text = report.as_text()
    (cfg.out_dir / CV_REPORT).write_text(text + "\n", encoding="utf-8")
    print(text)


def cmd_predict_smm(cfg: RunConfig, args: argparse.Namespace) -> None:
    frames = features.read_frames_csv(_require(cfg.out_dir / FRAMES_CSV, "extract-features"))
    artifact = ingest.load_model(_require(cfg.out_dir / SMM_MODEL, "train-smm"))
    forest = smm.forest_from_artifact(artifact)
    labels = smm.label_all_frames(forest, frames)
    smm.write_labels_csv(labels, cfg.out_dir / FRAME_LABELS_CSV)
    print(f"predicted {len(labels)} frames -> {cfg.out_dir / FRAME_LABELS_CSV}")


def cmd_build_sessions(cfg: RunConfig, args: argparse.Namespace) -> None:
    paths = _data_paths(cfg)
    events, _ = ingest.parse_query_log(_require(paths["queries"], "synth-gen"))
    labels = smm.read_labels_csv(_require(cfg.out_dir / FRAME_LABELS_CSV, "predict-smm"))
    sessions = qmm.build_sessions(
        events, labels, args.mode, cfg.tz, min_confidence=float(cfg.qmm.get("min_confidence", 0.0))
    )
    out = cfg.out_dir / SESSIONS_JSONL.format(mode=args.mode)
    qmm.write_sessions_jsonl(sessions, out)
    counts = {s: sum(1 for x in sessions if x.source == s) for s in ("questionnaire", "smm")}
    print(f"built {len(sessions)} labeled sessions {counts} -> {out}")


def _eval_kwargs(cfg: RunConfig) -> dict:
    return {
        "min_df": int(cfg.qmm.get("min_df", 3)),
        "max_size": int(cfg.qmm.get("max_size", 50_000)),
        "l2_lambda": float(cfg.qmm.get("l2_lambda", 1e-3)),
    }


def cmd_train_qmm(cfg: RunConfig, args: argparse.Namespace) -> None:
    path = cfg.out_dir / SESSIONS_JSONL.format(mode=args.mode)
    sessions = qmm.read_sessions_jsonl(_require(path, f"build-sessions --mode {args.mode}"))
    kw = _eval_kwargs(cfg)
    vocab = qmm.build_vocabulary(sessions, min_df=kw["min_df"], max_size=kw["max_size"])
    balanced = qmm.balance(sessions, seed=cfg.seed)
    model = qmm.train_logreg(balanced, vocab, l2_lambda=kw["l2_lambda"], seed=cfg.seed)
    out = cfg.out_dir / QMM_MODEL.format(mode=args.mode)
    ingest.save_model(qmm.logreg_to_artifact(model), out)
    print(
        f"trained qmm[{args.mode}] on {len(balanced)} balanced sessions "
        f"(vocab {len(vocab)}, converged={model.converged}) -> {out}"
    )


def cmd_eval_qmm(cfg: RunConfig, args: argparse.Namespace) -> None:
    path = cfg.out_dir / SESSIONS_JSONL.format(mode=args.mode)
    sessions = qmm.read_sessions_jsonl(_require(path, f"build-sessions --mode {args.mode}"))
    report = qmm.evaluate(
        sessions,
        args.mode,
        splits=int(cfg.qmm.get("splits", 10)),
        train_frac=float(cfg.qmm.get("train_frac", 0.8)),
        seed=cfg.seed,
        **_eval_kwargs(cfg),
    )
    out = cfg.out_dir / EVAL_JSON.format(mode=args.mode)
    out.write_text(
        json.dumps(
            {
                "mode": report.mode,
                "n_sessions": report.n_sessions,
                "n_train": report.n_train,
                "accuracy_mean": report.accuracy_mean,
                "accuracy_std": report.accuracy_std,
                "accuracies": report.accuracies,
                "n_splits": report.n_splits,
            },
            sort_keys=True,
        )
        + "\n",
        encoding="utf-8",
    )
    print(report.as_text())


def _load_eval(path: Path) -> qmm.EvalReport:
    doc = json.loads(path.read_text(encoding="utf-8"))
    return qmm.EvalReport(
        mode=doc["mode"],
        n_sessions=doc["n_sessions"],
        n_train=doc["n_train"],
        accuracy_mean=doc["accuracy_mean"],
        accuracy_std=doc["accuracy_std"],
        accuracies=doc["accuracies"],
        n_splits=doc["n_splits"],
    )


def _load_qmm_and_sessions(cfg: RunConfig, mode: str):
    paths = _data_paths(cfg)
    artifact = ingest.load_model(
        _require(cfg.out_dir / QMM_MODEL.format(mode=mode), f"train-qmm --mode {mode}")
    )
    model = qmm.logreg_from_artifact(artifact)
    events, _ = ingest.parse_query_log(_require(paths["queries"], "synth-gen"))
    return model, qmm.sessionize(events, cfg.tz)


def cmd_score(cfg: RunConfig, args: argparse.Namespace) -> None:
    model, sessions = _load_qmm_and_sessions(cfg, args.mode)
    scores = qmm.score_sessions(model, sessions)
    out = cfg.out_dir / SCORED_SESSIONS_CSV
    with open(out, "w", encoding="utf-8", newline="") as fh:
        fh.write("user,date,slot,score\n")
        for s, v in zip(sessions, scores):
            fh.write(f"{s.user_id},{s.date.isoformat()},{s.slot},{float(v)!r}\n")
    print(f"scored {len(sessions)} sessions -> {out}")


def cmd_ad_pairwise(cfg: RunConfig, args: argparse.Namespace) -> None:
    paths = _data_paths(cfg)
    model, sessions = _load_qmm_and_sessions(cfg, args.mode)
    events, _ = ingest.parse_ad_log(_require(paths["ads"], "synth-gen"))
    scored, dropped = adpair.score_ad_records(events, model, sessions, cfg.tz)
    trials = args.trials or int(cfg.adpair.get("trials", adpair.DEFAULT_TRIALS))
    days = args.days or int(cfg.adpair.get("days", 14))
    day_results, summaries = adpair.analyze_ads(scored, trials=trials, seed=cfg.seed, days=days)
    adpair.write_day_results_csv(day_results, cfg.out_dir / AD_DAYS_CSV)
    observed, baseline = adpair.positive_day_distribution(summaries, days=days)
    adpair.write_distribution_csv(observed, baseline, cfg.out_dir / AD_DISTRIBUTION_CSV)
    if args.emit_svg:
        _write_line_svg(
            cfg.out_dir / AD_DISTRIBUTION_SVG,
            list(range(days + 1)),
            [("observed", list(observed)), ("baseline", list(baseline))],
            title=f"positive days out of {days} (n_ads={len(summaries)})",
        )
    print(
        f"analyzed {len(summaries)} ads over <= {days} days at {trials} trials/day "
        f"({dropped} events dropped) -> {cfg.out_dir / AD_DAYS_CSV}"
    )


def cmd_national_mood(cfg: RunConfig, args: argparse.Namespace) -> None:
    model, sessions = _load_qmm_and_sessions(cfg, args.mode)
    if args.date_from:
        lo = dt.date.fromisoformat(args.date_from)
        sessions = [s for s in sessions if s.date >= lo]
    if args.date_to:
        hi = dt.date.fromisoformat(args.date_to)
        sessions = [s for s in sessions if s.date <= hi]
    if not sessions:
        raise StageError("no sessions in the requested date range")
    series = national.daily_national_score(national.daily_scores(sessions, model))
    normalize = args.normalize or cfg.national.get("normalize", "none")
    if normalize == "first_sunday":
        year = int(cfg.national.get("year", series.dates[-1].year))
        series = national.normalize_first_sunday(series, year)
    elif normalize != "none":
        raise StageError(f"unknown normalization {normalize!r}")
    if args.relative_base:
        base = national.read_series_csv(args.relative_base, normalization=national.FIRST_SUNDAY)
        if series.normalization != national.FIRST_SUNDAY:
            raise StageError("relative comparison requires --normalize first_sunday")
        series = national.relative_series(series, base)
    out = cfg.out_dir / NATIONAL_CSV
    national.write_series_csv(series, out)
    if args.emit_svg:
        _write_line_svg(
            cfg.out_dir / NATIONAL_SVG,
            [d.toordinal() for d in series.dates],
            [("score", [float(v) for v in series.scores])],
            title=f"daily national mood ({series.normalization})",
        )
    print(f"wrote {len(series)} days ({series.normalization}) -> {out}")


def cmd_verify_recovery(cfg: RunConfig, args: argparse.Namespace) -> None:
    paths = _data_paths(cfg)
    truth = synth.GroundTruth.load(_require(paths["truth"], "synth-gen"))
    labels = smm.read_labels_csv(_require(cfg.out_dir / FRAME_LABELS_CSV, "predict-smm"))

    day_results = _read_day_results(_require(cfg.out_dir / AD_DAYS_CSV, "ad-pairwise"))
    by_ad: dict[str, list[adpair.DayResult]] = {}
    for r in day_results:
        by_ad.setdefault(r.ad_id, []).append(r)
    summaries = [adpair.campaign_summary(rs) for _, rs in sorted(by_ad.items())]

    series = national.read_series_csv(_require(cfg.out_dir / NATIONAL_CSV, "national-mood"))
    holidays = (
        national.read_holidays(paths["holidays"]) if paths["holidays"].is_file() else set()
    )
    profile = national.weekday_profile(series, holidays=holidays)
    patients, _ = ingest.parse_patient_csv(_require(paths["patients"], "synth-gen"))
    correlation = national.mood_patient_correlation(series, patients)

    eval_with = eval_without = None
    with_path = cfg.out_dir / EVAL_JSON.format(mode=qmm.MODE_WITH_SMM)
    without_path = cfg.out_dir / EVAL_JSON.format(mode=qmm.MODE_QUESTIONNAIRE_ONLY)
    if with_path.is_file():
        eval_with = _load_eval(with_path)
    if without_path.is_file():
        eval_without = _load_eval(without_path)

    report = synth.verify_recovery(
        truth,
        labels,
        summaries,
        profile,
        correlation,
        eval_with=eval_with,
        eval_without=eval_without,
        win_threshold=int(cfg.adpair.get("win_threshold", 13)),
    )
    text = report.as_text()
    (cfg.out_dir / RECOVERY_TXT).write_text(text + "\n", encoding="utf-8")
    print(text)


def _read_day_results(path: Path) -> list[adpair.DayResult]:
    import csv as _csv

    out = []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = _csv.reader(fh)
        header = next(reader)
        if header != ["ad", "date", "wins", "losses", "ties", "winner"]:
            raise StageError(f"{path}: unexpected ad_days CSV header")
        for row in reader:
            wins, losses, ties = int(row[2]), int(row[3]), int(row[4])
            out.append(
                adpair.DayResult(
                    ad_id=row[0],
                    date=dt.date.fromisoformat(row[1]),
                    positive_wins=wins,
                    negative_wins=losses,
                    ties_discarded=ties,
                    trials_effective=wins + losses + ties,
                    day_winner=row[5],
                )
            )
    return out


def _write_line_svg(
    path: Path, xs: list[float], series: list[tuple[str, list[float]]], title: str = ""
) -> None:
    """Tiny dependency-free SVG line chart (deterministic bytes)."""
    width, height, pad = 640, 360, 45
    all_y = [v for _, ys in series for v in ys if np.isfinite(v)]
    if not xs or not all_y:
        path.write_text("<svg xmlns='http://www.w3.org/2000/svg'/>\n", encoding="utf-8")
        return
    x0, x1 = min(xs), max(xs)
    y0, y1 = min(all_y), max(all_y)
    xspan = (x1 - x0) or 1.0
    yspan = (y1 - y0) or 1.0
    colors = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd")

    def sx(x):
        return pad + (x - x0) / xspan * (width - 2 * pad)

    def sy(y):
        return height - pad - (y - y0) / yspan * (height - 2 * pad)

    parts = [
        f"<svg xmlns='http://www.w3.org/2000/svg' width='{width}' height='{height}'>",
        f"<text x='{width//2}' y='18' text-anchor='middle' font-size='13'>{title}</text>",
        f"<rect x='{pad}' y='{pad}' width='{width-2*pad}' height='{height-2*pad}' "
        "fill='none' stroke='#888'/>",
    ]
    for i, (name, ys) in enumerate(series):
        pts = " ".join(f"{sx(x):.2f},{sy(y):.2f}" for x, y in zip(xs, ys) if np.isfinite(y))
        color = colors[i % len(colors)]
        parts.append(f"<polyline points='{pts}' fill='none' stroke='{color}' stroke-width='1.5'/>")
        parts.append(
            f"<text x='{pad+4}' y='{pad+16+14*i}' font-size='11' fill='{color}'>{name}</text>"
        )
    parts.append(f"<text x='{pad}' y='{height-8}' font-size='10'>x: [{x0:g}, {x1:g}]  y: [{y0:g}, {y1:g}]</text>")
    parts.append("</svg>")
    path.write_text("\n".join(parts) + "\n", encoding="utf-8")


# -- parser ------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="moodpipe",
        description="Mood estimation pipeline: generate, extract, train, analyze.",
    )
    sub = parser.add_subparsers(dest="command", metavar="command")

    def add(name, handler, help_text, **extra_args):
        p = sub.add_parser(
            name,
            help=help_text,
            epilog="config keys read: " + ", ".join(CONFIG_KEYS[name]),
        )
        p.add_argument("--config", required=True, help="run config TOML file")
        p.add_argument(
            "--threads", type=int, default=1, help="worker cap (results independent of N)"
        )
        for flag, kw in extra_args.items():
            p.add_argument(flag, **kw)
        p.set_defaults(handler=handler)
        return p

    add("synth-gen", cmd_synth_gen, "generate synthetic logs with planted ground truth",
        **{"--out": {"default": None, "help": "output dir (default: paths.data_dir)"}})
    add("extract-features", cmd_extract_features, "sensor logs -> 113-column frame CSV")
    add("train-smm", cmd_train_smm, "train the sensor mood forest on labeled frames")
    add("cv-smm", cmd_cv_smm, "grouped cross-validation report for the sensor model")
    add("predict-smm", cmd_predict_smm, "label every frame with the trained forest")
    add("build-sessions", cmd_build_sessions, "attach labels to query sessions",
        **{"--mode": {"choices": qmm.MODES, "default": qmm.MODE_WITH_SMM}})
    add("train-qmm", cmd_train_qmm, "train the query mood model on labeled sessions",
        **{"--mode": {"choices": qmm.MODES, "default": qmm.MODE_WITH_SMM}})
    add("eval-qmm", cmd_eval_qmm, "80/20xN accuracy evaluation of the query model",
        **{"--mode": {"choices": qmm.MODES, "default": qmm.MODE_WITH_SMM}})
    add("score", cmd_score, "score every query session with a trained query model",
        **{"--mode": {"choices": qmm.MODES, "default": qmm.MODE_WITH_SMM}})
    add("ad-pairwise", cmd_ad_pairwise, "pairwise mood-effectiveness over the ad log",
        **{
            "--mode": {"choices": qmm.MODES, "default": qmm.MODE_WITH_SMM},
            "--trials": {"type": int, "default": None, "help": "pair draws per (ad, day)"},
            "--days": {"type": int, "default": None, "help": "delivery days per ad"},
            "--emit-svg": {"action": "store_true"},
        })
    add("national-mood", cmd_national_mood, "daily national mood series",
        **{
            "--mode": {"choices": qmm.MODES, "default": qmm.MODE_WITH_SMM},
            "--from": {"dest": "date_from", "default": None, "help": "ISO start date"},
            "--to": {"dest": "date_to", "default": None, "help": "ISO end date"},
            "--normalize": {"choices": ["none", "first_sunday"], "default": None},
            "--relative-base": {"dest": "relative_base", "default": None,
                                "help": "first-Sunday-normalized base-year series CSV"},
            "--emit-svg": {"action": "store_true"},
        })
    add("verify-recovery", cmd_verify_recovery, "score pipeline outputs against planted truth")
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if not getattr(args, "command", None):
        parser.print_usage(sys.stderr)
        return 2
    try:
        cfg = load_config(args.config)
        logging.basicConfig(
            level=logging.WARNING if cfg.verbosity <= 1 else logging.INFO,
            format="%(levelname)s %(name)s: %(message)s",
        )
        cfg.out_dir.mkdir(parents=True, exist_ok=True)
        args.handler(cfg, args)
    except (StageError, ingest.LogParseError, ingest.ModelFormatError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
