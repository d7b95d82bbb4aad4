"""Query mood model: binary logistic regression over per-session query sets.

A session is one user's 3-hour window of normalized search queries, with a
binary presence vector over the training vocabulary (repeat searches do not
count). Labels come from questionnaire answers when available; in augmented
mode, windows without an answer take the sensor model's prediction instead.
Neutral labels are excluded from training either way.

The optimizer is full-batch gradient descent with backtracking line search
on the L2-regularized mean logistic loss (intercept unpenalized), which
keeps training deterministic and the loss monotone non-increasing.
"""

from __future__ import annotations

import datetime as dt
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from zoneinfo import ZoneInfo

import numpy as np
import scipy.sparse as sp
from scipy.special import expit

from .features import _local_day_slot, _day_to_date, WINDOW_HOURS
from .ingest import ModelArtifact, MODEL_FORMAT_VERSION, QueryEvent
from .smm import FrameLabel

logger = logging.getLogger(__name__)

MODE_QUESTIONNAIRE_ONLY = "questionnaire_only"
MODE_WITH_SMM = "with_smm"
MODES = (MODE_QUESTIONNAIRE_ONLY, MODE_WITH_SMM)

SOURCE_QUESTIONNAIRE = "questionnaire"
SOURCE_SMM = "smm"

GRAD_TOL = 1e-6
MAX_EPOCHS = 1000


@dataclass
class Session:
    """One (user, window) bag of distinct queries, optionally labeled."""

    user_id: str
    date: dt.date
    slot: int
    query_set: frozenset[str]
    label: int | None = None  # -1 or +1
    source: str | None = None

    def key(self) -> tuple[str, dt.date, int]:
        return (self.user_id, self.date, self.slot)


@dataclass
class Vocabulary:
    """Train-set query vocabulary ordered by descending document frequency."""

    queries: list[str]
    doc_freq: list[int]
    min_df: int
    index: dict[str, int] = field(init=False, repr=False)

    def __post_init__(self) -> None:
        self.index = {q: i for i, q in enumerate(self.queries)}

    def __len__(self) -> int:
        return len(self.queries)


@dataclass
class LogRegModel:
    theta0: float
    theta: np.ndarray
    vocabulary: Vocabulary
    l2_lambda: float
    seed: int
    n_records: int
    balance_counts: tuple[int, int]  # (negative, positive) after balancing
    converged: bool
    n_epochs: int
    loss_history: list[float]


def sessionize(events: list[QueryEvent], tz: ZoneInfo) -> list[Session]:
    """Group query events into unlabeled 3-hour sessions per user."""
    if not events:
        return []
    ts = np.asarray([e.ts for e in events], dtype=np.int64)
    day, slot = _local_day_slot(ts, tz, WINDOW_HOURS)
    buckets: dict[tuple[str, int, int], set[str]] = {}
    for e, d, s in zip(events, day, slot):
        buckets.setdefault((e.user_id, int(d), int(s)), set()).add(e.query)
    return [
        Session(user_id=u, date=_day_to_date(d), slot=s, query_set=frozenset(qs))
        for (u, d, s), qs in sorted(buckets.items())
    ]


def build_sessions(
    events: list[QueryEvent],
    frame_labels: list[FrameLabel],
    mode: str,
    tz: ZoneInfo,
    min_confidence: float = 0.0,
) -> list[Session]:
    """Labeled training sessions for one mode.

    A session is emitted only when its window has at least one query and a
    usable binary label. Questionnaire answers take priority; a neutral
    answer excludes the window rather than falling through to the model.
    In ``with_smm`` mode, unannotated windows use the model prediction when
    it is non-neutral and at least ``min_confidence`` confident.
    """
    if mode not in MODES:
        raise ValueError(f"mode {mode!r} not in {MODES}")
    by_key = {lab.key(): lab for lab in frame_labels}
    out: list[Session] = []
    for session in sessionize(events, tz):
        lab = by_key.get(session.key())
        if lab is None:
            continue
        if lab.questionnaire is not None:
            if lab.questionnaire == 0:
                continue
            session.label = lab.questionnaire
            session.source = SOURCE_QUESTIONNAIRE
        elif mode == MODE_WITH_SMM:
            if lab.predicted == 0 or lab.confidence < min_confidence:
                continue
            session.label = lab.predicted
            session.source = SOURCE_SMM
        else:
            continue
        out.append(session)
    return out


def build_vocabulary(
    train_sessions: list[Session], min_df: int = 3, max_size: int = 50_000
) -> Vocabulary:
    """Vocabulary over the training split only (descending df, ties lexicographic)."""
    if not train_sessions:
        raise ValueError("cannot build a vocabulary from an empty training set")
    df: dict[str, int] = {}
    for s in train_sessions:
        for q in s.query_set:
            df[q] = df.get(q, 0) + 1
    kept = sorted(
        ((q, n) for q, n in df.items() if n >= min_df), key=lambda item: (-item[1], item[0])
    )[:max_size]
    return Vocabulary(
        queries=[q for q, _ in kept], doc_freq=[n for _, n in kept], min_df=min_df
    )


def balance(train_sessions: list[Session], seed: int = 0) -> list[Session]:
    """Randomly downsample the majority class to the minority count."""
    neg = [s for s in train_sessions if s.label == -1]
    pos = [s for s in train_sessions if s.label == 1]
    if not neg or not pos:
        raise ValueError(
            f"both classes required for balancing (got {len(neg)} negative, {len(pos)} positive)"
        )
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0xBA1]))
    target = min(len(neg), len(pos))

    def _sample(group: list[Session]) -> list[Session]:
        if len(group) == target:
            return list(group)
        keep = rng.choice(len(group), size=target, replace=False)
        return [group[i] for i in sorted(keep)]

    return _sample(neg) + _sample(pos)


def design_matrix(sessions: list[Session], vocab: Vocabulary) -> sp.csr_matrix:
    """Binary presence matrix; out-of-vocabulary queries contribute nothing."""
    rows, cols = [], []
    for i, s in enumerate(sessions):
        for q in s.query_set:
            j = vocab.index.get(q)
            if j is not None:
                rows.append(i)
                cols.append(j)
    data = np.ones(len(rows))
    return sp.csr_matrix((data, (rows, cols)), shape=(len(sessions), len(vocab)))


def loss_and_gradient(
    theta0: float,
    theta: np.ndarray,
    X: sp.csr_matrix,
    y: np.ndarray,
    l2_lambda: float,
) -> tuple[float, float, np.ndarray]:
    """Mean logistic loss with L2 on weights; returns (loss, grad0, grad)."""
    n = X.shape[0]
    z = theta0 + X @ theta
    margins = y * z
    loss = float(np.mean(np.logaddexp(0.0, -margins))) + 0.5 * l2_lambda * float(theta @ theta)
    p = expit(z)
    t = (y + 1.0) / 2.0
    resid = (p - t) / n
    grad0 = float(np.sum(resid))
    grad = X.T @ resid + l2_lambda * theta
    return loss, grad0, np.asarray(grad).ravel()


def train_logreg(
    sessions: list[Session],
    vocab: Vocabulary,
    l2_lambda: float = 1e-3,
    seed: int = 0,
    max_epochs: int = MAX_EPOCHS,
    grad_tol: float = GRAD_TOL,
) -> LogRegModel:
    """Fit the logistic model on sessions labeled in {-1, +1}."""
    labels = np.asarray([s.label for s in sessions], dtype=np.float64)
    if not np.all(np.isin(labels, (-1.0, 1.0))):
        raise ValueError("training sessions must be labeled -1 or +1")
    X = design_matrix(sessions, vocab)
    n_neg = int(np.sum(labels == -1.0))
    n_pos = int(np.sum(labels == 1.0))

    theta0 = 0.0
    theta = np.zeros(len(vocab))
    loss, grad0, grad = loss_and_gradient(theta0, theta, X, labels, l2_lambda)
    history = [loss]
    step = 1.0
    converged = False
    epoch = 0
    for epoch in range(1, max_epochs + 1):
        gnorm2 = grad0 * grad0 + float(grad @ grad)
        if np.sqrt(gnorm2) <= grad_tol:
            converged = True
            break
        # backtracking line search (Armijo), warm-started from the last step
        step = min(step * 2.0, 1e6)
        while True:
            cand0 = theta0 - step * grad0
            cand = theta - step * grad
            cand_loss, cand_g0, cand_g = loss_and_gradient(cand0, cand, X, labels, l2_lambda)
            if cand_loss <= loss - 1e-4 * step * gnorm2 or step < 1e-16:
                break
            step *= 0.5
        if cand_loss > loss:
            break  # numerically stuck; keep the best iterate
        theta0, theta = cand0, cand
        loss, grad0, grad = cand_loss, cand_g0, cand_g
        history.append(loss)
    if not converged:
        logger.warning(
            "logistic regression stopped at %d epochs with gradient norm %.3e",
            epoch,
            float(np.sqrt(grad0 * grad0 + grad @ grad)),
        )
    return LogRegModel(
        theta0=float(theta0),
        theta=theta,
        vocabulary=vocab,
        l2_lambda=l2_lambda,
        seed=seed,
        n_records=len(sessions),
        balance_counts=(n_neg, n_pos),
        converged=converged,
        n_epochs=epoch,
        loss_history=history,
    )


def score_sessions(model: LogRegModel, sessions: list[Session]) -> np.ndarray:
    X = design_matrix(sessions, model.vocabulary)
    return expit(model.theta0 + X @ model.theta)


def score_session(model: LogRegModel, session: Session) -> float:
    """Mood score in (0, 1): sigmoid of the intercept plus matched weights."""
    return float(score_sessions(model, [session])[0])


@dataclass
class EvalReport:
    mode: str
    n_sessions: int
    n_train: int  # training-split size before balancing, averaged over splits
    accuracy_mean: float
    accuracy_std: float
    accuracies: list[float]
    n_splits: int

    def as_text(self) -> str:
        return (
            f"mode={self.mode} n_data={self.n_sessions} n_train={self.n_train} "
            f"accuracy={self.accuracy_mean:.3f} (std {self.accuracy_std:.3f}, "
            f"{self.n_splits} splits)"
        )


def evaluate(
    sessions: list[Session],
    mode: str,
    splits: int = 10,
    train_frac: float = 0.8,
    seed: int = 0,
    min_df: int = 3,
    max_size: int = 50_000,
    l2_lambda: float = 1e-3,
) -> EvalReport:
    """Mean accuracy over random train/test splits.

    Each split rebuilds the vocabulary from its training fraction, balances
    the training set, and scores the untouched (unbalanced) test fraction
    at the 0.5 threshold.
    """
    n = len(sessions)
    labels = np.asarray([s.label for s in sessions])
    if min(int(np.sum(labels == -1)), int(np.sum(labels == 1))) < 10:
        raise ValueError("need at least 10 sessions per class to evaluate")
    accs = []
    n_train_total = 0
    for i in range(splits):
        rng = np.random.default_rng(np.random.SeedSequence([seed, i]))
        perm = rng.permutation(n)
        n_train = int(round(train_frac * n))
        train = [sessions[j] for j in perm[:n_train]]
        test = [sessions[j] for j in perm[n_train:]]
        vocab = build_vocabulary(train, min_df=min_df, max_size=max_size)
        balanced = balance(train, seed=int(rng.integers(2**31)))
        model = train_logreg(balanced, vocab, l2_lambda=l2_lambda, seed=seed)
        scores = score_sessions(model, test)
        pred = np.where(scores >= 0.5, 1, -1)
        true = np.asarray([s.label for s in test])
        accs.append(float(np.mean(pred == true)))
        n_train_total += n_train
    accs_arr = np.asarray(accs)
    return EvalReport(
        mode=mode,
        n_sessions=n,
        n_train=int(round(n_train_total / splits)),
        accuracy_mean=float(accs_arr.mean()),
        accuracy_std=float(accs_arr.std()),
        accuracies=accs,
        n_splits=splits,
    )


def logreg_to_artifact(model: LogRegModel) -> ModelArtifact:
    return ModelArtifact(
        kind="qmm_logreg",
        version=MODEL_FORMAT_VERSION,
        seed=model.seed,
        payload={
            "theta0": model.theta0,
            "theta": model.theta.tolist(),
            "vocabulary": model.vocabulary.queries,
            "doc_freq": model.vocabulary.doc_freq,
            "min_df": model.vocabulary.min_df,
            "l2_lambda": model.l2_lambda,
            "n_records": model.n_records,
            "balance_counts": list(model.balance_counts),
            "converged": model.converged,
            "n_epochs": model.n_epochs,
        },
    )


def logreg_from_artifact(artifact: ModelArtifact) -> LogRegModel:
    if artifact.kind != "qmm_logreg":
        raise ValueError(f"artifact kind {artifact.kind!r} is not qmm_logreg")
    p = artifact.payload
    vocab = Vocabulary(queries=list(p["vocabulary"]), doc_freq=list(p["doc_freq"]), min_df=p["min_df"])
    return LogRegModel(
        theta0=float(p["theta0"]),
        theta=np.asarray(p["theta"], dtype=np.float64),
        vocabulary=vocab,
        l2_lambda=float(p["l2_lambda"]),
        seed=artifact.seed,
        n_records=int(p["n_records"]),
        balance_counts=tuple(p["balance_counts"]),
        converged=bool(p["converged"]),
        n_epochs=int(p["n_epochs"]),
        loss_history=[],
    )


def write_sessions_jsonl(sessions: list[Session], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for s in sessions:
            doc = {
                "user": s.user_id,
                "date": s.date.isoformat(),
                "slot": s.slot,
                "queries": sorted(s.query_set),
                "label": s.label,
                "source": s.source,
            }
            fh.write(json.dumps(doc, sort_keys=True, ensure_ascii=False) + "\n")


def read_sessions_jsonl(path: str | Path) -> list[Session]:
    out = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            doc = json.loads(line)
            out.append(
                Session(
                    user_id=doc["user"],
                    date=dt.date.fromisoformat(doc["date"]),
                    slot=int(doc["slot"]),
                    query_set=frozenset(doc["queries"]),
                    label=doc["label"],
                    source=doc["source"],
                )
            )
    return out
