"""Sensor mood model: a from-scratch Random Forest over feature frames.

Three mood classes {-1, 0, +1} come from the 7-level Likert answers
(1-3 negative, 4 neutral, 5-7 positive). Trees use axis-aligned splits
chosen by Gini impurity over a random feature subset per node, grown on
bootstrap samples. Training is deterministic for a fixed seed: every tree
draws from its own RNG stream derived from the master seed, so results do
not depend on scheduling or worker count.
"""

from __future__ import annotations

import csv
import datetime as dt
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .features import FeatureFrame
from .ingest import ModelArtifact, MODEL_FORMAT_VERSION

logger = logging.getLogger(__name__)

CLASSES = (-1, 0, 1)
_CLASS_TO_IDX = {c: i for i, c in enumerate(CLASSES)}
# argmax tie-break preference: neutral, then negative, then positive
_TIE_ORDER = np.asarray([1, 0, 2])


def map_likert(likert: int) -> int:
    """Collapse a 7-level Likert answer to a mood class in {-1, 0, +1}."""
    if not isinstance(likert, (int, np.integer)) or not 1 <= likert <= 7:
        raise ValueError(f"likert value {likert!r} outside 1..7")
    if likert <= 3:
        return -1
    if likert == 4:
        return 0
    return 1


def gini_impurity(counts: np.ndarray) -> float:
    """Gini impurity of a class-count vector; invariant to uniform scaling."""
    total = float(np.sum(counts))
    if total <= 0.0:
        return 0.0
    p = np.asarray(counts, dtype=np.float64) / total
    return float(1.0 - np.sum(p * p))


@dataclass
class ForestParams:
    n_trees: int = 100
    max_depth: int = 12
    min_leaf: int = 5
    features_per_split: int = 11  # ceil(sqrt(113))


@dataclass
class Tree:
    """Flat-array decision tree; ``feature == -1`` marks a leaf."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    counts: np.ndarray  # (n_nodes, 3) class counts, populated at leaves

    def apply(self, X: np.ndarray) -> np.ndarray:
        """Leaf index for each row."""
        idx = np.zeros(X.shape[0], dtype=np.int64)
        while True:
            feat = self.feature[idx]
            active = np.flatnonzero(feat >= 0)
            if active.size == 0:
                return idx
            node = idx[active]
            go_left = X[active, feat[active]] <= self.threshold[node]
            idx[active] = np.where(go_left, self.left[node], self.right[node])

    def leaf_probs(self, X: np.ndarray) -> np.ndarray:
        c = self.counts[self.apply(X)]
        return c / c.sum(axis=1, keepdims=True)


@dataclass
class Forest:
    trees: list[Tree]
    params: ForestParams
    seed: int
    n_features: int


@dataclass
class CvReport:
    confusion: np.ndarray  # rows true class, cols predicted, order (-1, 0, +1)
    accuracy: float
    per_class: dict[int, tuple[float, float, float, int]]  # precision, recall, f1, support
    weighted: tuple[float, float, float]
    n_folds: int

    def as_text(self) -> str:
        lines = ["label  precision  recall  f1-score  support"]
        for c in CLASSES:
            p, r, f1, s = self.per_class[c]
            lines.append(f"{c:>5}  {p:9.2f}  {r:6.2f}  {f1:8.2f}  {s:7d}")
        wp, wr, wf = self.weighted
        total = int(self.confusion.sum())
        lines.append(f"  avg  {wp:9.2f}  {wr:6.2f}  {wf:8.2f}  {total:7d}")
        lines.append(f"accuracy {self.accuracy:.3f}  ({self.n_folds} folds)")
        return "\n".join(lines)


def _best_split_feature(
    x: np.ndarray, y: np.ndarray, min_leaf: int
) -> tuple[float, float] | None:
    """Best (weighted child Gini, threshold) along one feature, or None."""
    n = x.shape[0]
    order = np.argsort(x, kind="stable")
    xs = x[order]
    ys = y[order]
    onehot = np.zeros((n, 3))
    onehot[np.arange(n), ys] = 1.0
    left = np.cumsum(onehot, axis=0)
    total = left[-1]
    nl = np.arange(1, n, dtype=np.float64)
    nr = n - nl
    li = left[:-1]
    ri = total - li
    gl = 1.0 - np.sum((li / nl[:, None]) ** 2, axis=1)
    gr = 1.0 - np.sum((ri / nr[:, None]) ** 2, axis=1)
    weighted = (nl * gl + nr * gr) / n
    valid = (xs[1:] > xs[:-1]) & (nl >= min_leaf) & (nr >= min_leaf)
    if not np.any(valid):
        return None
    weighted = np.where(valid, weighted, np.inf)
    i = int(np.argmin(weighted))  # first minimum -> smallest threshold
    thr = (xs[i] + xs[i + 1]) / 2.0
    if thr >= xs[i + 1]:  # midpoint of adjacent floats can round up
        thr = xs[i]
    return float(weighted[i]), float(thr)


def _class_counts(y: np.ndarray) -> np.ndarray:
    return np.bincount(y, minlength=3).astype(np.float64)


def _build_tree(
    X: np.ndarray, y: np.ndarray, params: ForestParams, rng: np.random.Generator
) -> Tree:
    n, n_features = X.shape
    boot = rng.integers(0, n, size=n)
    Xb, yb = X[boot], y[boot]

    feature: list[int] = []
    threshold: list[float] = []
    left: list[int] = []
    right: list[int] = []
    counts: list[np.ndarray] = []

    k = min(params.features_per_split, n_features)
    # preorder build; children allocated after the parent decides to split
    stack: list[tuple[int, np.ndarray, int]] = []

    def _alloc() -> int:
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        counts.append(np.zeros(3))
        return len(feature) - 1

    root = _alloc()
    stack.append((root, np.arange(n), 0))
    while stack:
        node, idx, depth = stack.pop()
        ysub = yb[idx]
        node_counts = _class_counts(ysub)
        counts[node] = node_counts
        if (
            depth >= params.max_depth
            or idx.shape[0] < 2 * params.min_leaf
            or np.count_nonzero(node_counts) <= 1
        ):
            continue
        feats = rng.choice(n_features, size=k, replace=False)
        best: tuple[float, int, float] | None = None
        for f in feats:
            res = _best_split_feature(Xb[idx, f], ysub, params.min_leaf)
            if res is not None and (best is None or res[0] < best[0]):
                best = (res[0], int(f), res[1])
        if best is None:
            continue
        _, f, thr = best
        go_left = Xb[idx, f] <= thr
        feature[node] = f
        threshold[node] = thr
        left_id = _alloc()
        right_id = _alloc()
        left[node] = left_id
        right[node] = right_id
        # push right first so the left child is processed next (preorder)
        stack.append((right_id, idx[~go_left], depth + 1))
        stack.append((left_id, idx[go_left], depth + 1))

    return Tree(
        feature=np.asarray(feature, dtype=np.int64),
        threshold=np.asarray(threshold),
        left=np.asarray(left, dtype=np.int64),
        right=np.asarray(right, dtype=np.int64),
        counts=np.asarray(counts),
    )


def _build_tree_batch(args: tuple) -> list[Tree]:
    X, y, params, seeds = args
    return [_build_tree(X, y, params, np.random.default_rng(s)) for s in seeds]


def train_forest(
    X: np.ndarray,
    y: np.ndarray,
    params: ForestParams | None = None,
    seed: int = 0,
    n_jobs: int = 1,
) -> Forest:
    """Fit a forest on labels in {-1, 0, +1}; deterministic per seed."""
    params = params or ForestParams()
    X = np.asarray(X, dtype=np.float64)
    y_idx = encode_labels(y)
    if X.shape[0] == 0:
        raise ValueError("cannot train on an empty dataset")
    if len(np.unique(y_idx)) == 1:
        logger.warning("all training labels identical; forest degenerates to one leaf per tree")

    seeds = np.random.SeedSequence(seed).spawn(params.n_trees)
    if n_jobs <= 1 or params.n_trees == 1:
        trees = _build_tree_batch((X, y_idx, params, seeds))
    else:
        n_jobs = min(n_jobs, params.n_trees)
        chunks = [
            (X, y_idx, params, list(part))
            for part in np.array_split(np.asarray(seeds, dtype=object), n_jobs)
            if len(part)
        ]
        trees = []
        with ProcessPoolExecutor(max_workers=n_jobs) as pool:
            for batch in pool.map(_build_tree_batch, chunks):
                trees.extend(batch)
    return Forest(trees=trees, params=params, seed=seed, n_features=X.shape[1])


def encode_labels(y) -> np.ndarray:
    out = np.empty(len(y), dtype=np.int64)
    for i, v in enumerate(y):
        out[i] = _CLASS_TO_IDX[int(v)]
    return out


def predict_probs(forest: Forest, X: np.ndarray) -> np.ndarray:
    """Class probabilities (order -1, 0, +1) as the mean of tree leaf mixes."""
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    if X.shape[1] != forest.n_features:
        raise ValueError(f"expected {forest.n_features} features, got {X.shape[1]}")
    acc = np.zeros((X.shape[0], 3))
    for tree in forest.trees:
        acc += tree.leaf_probs(X)
    return acc / len(forest.trees)


def predict(forest: Forest, X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """(labels, probabilities); argmax ties break toward 0 then -1."""
    probs = predict_probs(forest, X)
    pref = probs[:, _TIE_ORDER]
    labels_idx = _TIE_ORDER[np.argmax(pref, axis=1)]
    labels = np.asarray(CLASSES)[labels_idx]
    return labels, probs


def _grouped_folds(
    groups: np.ndarray, k: int, rng: np.random.Generator
) -> list[np.ndarray]:
    """User-disjoint folds balanced by frame count (greedy, deterministic)."""
    uniq, counts = np.unique(groups, return_counts=True)
    order = rng.permutation(len(uniq))
    # largest groups first for balance, permutation breaks ties
    order = order[np.argsort(-counts[order], kind="stable")]
    fold_sizes = np.zeros(k, dtype=np.int64)
    fold_of_group: dict = {}
    for gi in order:
        fold = int(np.argmin(fold_sizes))
        fold_of_group[uniq[gi]] = fold
        fold_sizes[fold] += counts[gi]
    assignment = np.asarray([fold_of_group[g] for g in groups])
    return [np.flatnonzero(assignment == f) for f in range(k)]


def cross_validate(
    X: np.ndarray,
    y,
    groups,
    k: int = 10,
    params: ForestParams | None = None,
    seed: int = 0,
    n_jobs: int = 1,
) -> CvReport:
    """K-fold CV with user-disjoint folds whenever #users >= k."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y)
    groups = np.asarray(groups)
    n = X.shape[0]
    if k > n:
        raise ValueError(f"k={k} exceeds number of labeled frames n={n}")
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0xCF]))
    if len(np.unique(groups)) >= k:
        folds = _grouped_folds(groups, k, rng)
    else:
        perm = rng.permutation(n)
        folds = [np.sort(part) for part in np.array_split(perm, k)]

    confusion = np.zeros((3, 3), dtype=np.int64)
    for fold_idx, test_idx in enumerate(folds):
        if test_idx.size == 0:
            continue
        mask = np.ones(n, dtype=bool)
        mask[test_idx] = False
        forest = train_forest(
            X[mask], y[mask], params, seed=int(np.random.SeedSequence([seed, fold_idx]).generate_state(1)[0]), n_jobs=n_jobs
        )
        pred, _ = predict(forest, X[test_idx])
        for t, p in zip(encode_labels(y[test_idx]), encode_labels(pred)):
            confusion[t, p] += 1
    return report_from_confusion(confusion, n_folds=k)


def report_from_confusion(confusion: np.ndarray, n_folds: int) -> CvReport:
    support = confusion.sum(axis=1)
    total = confusion.sum()
    accuracy = float(np.trace(confusion)) / total if total else 0.0
    per_class = {}
    precisions, recalls, f1s = [], [], []
    for i, c in enumerate(CLASSES):
        tp = confusion[i, i]
        pred_pos = confusion[:, i].sum()
        precision = float(tp / pred_pos) if pred_pos else 0.0
        recall = float(tp / support[i]) if support[i] else 0.0
        f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
        per_class[c] = (precision, recall, f1, int(support[i]))
        precisions.append(precision)
        recalls.append(recall)
        f1s.append(f1)
    w = support / total if total else np.zeros(3)
    weighted = (
        float(np.dot(precisions, w)),
        float(np.dot(recalls, w)),
        float(np.dot(f1s, w)),
    )
    return CvReport(
        confusion=confusion,
        accuracy=accuracy,
        per_class=per_class,
        weighted=weighted,
        n_folds=n_folds,
    )


@dataclass
class FrameLabel:
    """Per-window mood labels: model prediction plus optional questionnaire."""

    user_id: str
    date: dt.date
    slot: int
    predicted: int
    confidence: float
    questionnaire: int | None = None  # mapped class, when the window was annotated

    def key(self) -> tuple[str, dt.date, int]:
        return (self.user_id, self.date, self.slot)


def label_all_frames(forest: Forest, frames: list[FeatureFrame]) -> list[FrameLabel]:
    """Predict every frame; annotated frames also keep their mapped answer."""
    if not frames:
        return []
    X = np.stack([f.vector for f in frames])
    labels, probs = predict(forest, X)
    out = []
    for frame, lab, p in zip(frames, labels, probs):
        out.append(
            FrameLabel(
                user_id=frame.user_id,
                date=frame.date,
                slot=frame.slot,
                predicted=int(lab),
                confidence=float(np.max(p)),
                questionnaire=None if frame.annotation is None else map_likert(frame.annotation),
            )
        )
    return out


def write_labels_csv(labels: list[FrameLabel], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["user", "date", "slot", "predicted", "confidence", "questionnaire"])
        for lab in labels:
            writer.writerow(
                [
                    lab.user_id,
                    lab.date.isoformat(),
                    lab.slot,
                    lab.predicted,
                    repr(lab.confidence),
                    "" if lab.questionnaire is None else lab.questionnaire,
                ]
            )


def read_labels_csv(path: str | Path) -> list[FrameLabel]:
    out = []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header != ["user", "date", "slot", "predicted", "confidence", "questionnaire"]:
            raise ValueError(f"{path}: unexpected label CSV header")
        for row in reader:
            out.append(
                FrameLabel(
                    user_id=row[0],
                    date=dt.date.fromisoformat(row[1]),
                    slot=int(row[2]),
                    predicted=int(row[3]),
                    confidence=float(row[4]),
                    questionnaire=int(row[5]) if row[5] else None,
                )
            )
    return out


def forest_to_artifact(forest: Forest) -> ModelArtifact:
    trees_payload = []
    for t in forest.trees:
        trees_payload.append(
            {
                "feature": t.feature.tolist(),
                "threshold": t.threshold.tolist(),
                "left": t.left.tolist(),
                "right": t.right.tolist(),
                "counts": t.counts.astype(np.int64).tolist(),
            }
        )
    return ModelArtifact(
        kind="smm_forest",
        version=MODEL_FORMAT_VERSION,
        seed=forest.seed,
        payload={
            "n_features": forest.n_features,
            "params": {
                "n_trees": forest.params.n_trees,
                "max_depth": forest.params.max_depth,
                "min_leaf": forest.params.min_leaf,
                "features_per_split": forest.params.features_per_split,
            },
            "trees": trees_payload,
        },
    )


def forest_from_artifact(artifact: ModelArtifact) -> Forest:
    if artifact.kind != "smm_forest":
        raise ValueError(f"artifact kind {artifact.kind!r} is not smm_forest")
    p = artifact.payload
    trees = [
        Tree(
            feature=np.asarray(t["feature"], dtype=np.int64),
            threshold=np.asarray(t["threshold"], dtype=np.float64),
            left=np.asarray(t["left"], dtype=np.int64),
            right=np.asarray(t["right"], dtype=np.int64),
            counts=np.asarray(t["counts"], dtype=np.float64),
        )
        for t in p["trees"]
    ]
    params = ForestParams(**p["params"])
    return Forest(trees=trees, params=params, seed=artifact.seed, n_features=p["n_features"])
