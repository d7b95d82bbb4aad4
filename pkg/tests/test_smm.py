import datetime as dt
import itertools

import numpy as np
import pytest

from moodpipe.features import FeatureFrame
from moodpipe.ingest import load_model, save_model
from moodpipe.smm import (
    Forest,
    ForestParams,
    Tree,
    cross_validate,
    forest_from_artifact,
    forest_to_artifact,
    gini_impurity,
    label_all_frames,
    map_likert,
    predict,
    predict_probs,
    train_forest,
)


def test_map_likert():
    assert map_likert(4) == 0
    assert map_likert(1) == -1
    assert map_likert(7) == 1
    assert [map_likert(v) for v in range(1, 8)] == [-1, -1, -1, 0, 1, 1, 1]
    for bad in (0, 8, -1):
        with pytest.raises(ValueError):
            map_likert(bad)


def test_gini_scaling_invariance():
    rng = np.random.default_rng(0)
    for _ in range(50):
        counts = rng.integers(0, 100, size=3).astype(float)
        if counts.sum() == 0:
            continue
        for scale in (2.0, 7.0, 0.5):
            assert gini_impurity(counts * scale) == pytest.approx(gini_impurity(counts))
    assert gini_impurity(np.asarray([10.0, 0.0, 0.0])) == 0.0
    assert gini_impurity(np.asarray([1.0, 1.0, 1.0])) == pytest.approx(2 / 3)


def _gaussian_blobs(n_per_class=100, noise=0.3, seed=0, n_features=6):
    rng = np.random.default_rng(seed)
    X_neg = rng.normal(-2.0, noise, size=(n_per_class, n_features))
    X_pos = rng.normal(2.0, noise, size=(n_per_class, n_features))
    X = np.vstack([X_neg, X_pos])
    y = np.asarray([-1] * n_per_class + [1] * n_per_class)
    return X, y


def test_separable_training_accuracy():
    X, y = _gaussian_blobs()
    forest = train_forest(X, y, ForestParams(n_trees=10, max_depth=6), seed=1)
    pred, _ = predict(forest, X)
    assert np.mean(pred == y) == 1.0


def test_determinism_serialized_bytes_equal(tmp_path):
    X, y = _gaussian_blobs(50)
    f1 = train_forest(X, y, ForestParams(n_trees=5), seed=9)
    f2 = train_forest(X, y, ForestParams(n_trees=5), seed=9)
    p1, p2 = tmp_path / "f1.json", tmp_path / "f2.json"
    save_model(forest_to_artifact(f1), p1)
    save_model(forest_to_artifact(f2), p2)
    assert p1.read_bytes() == p2.read_bytes()


def test_roundtrip_predictions_identical(tmp_path):
    X, y = _gaussian_blobs(60, noise=1.5)
    forest = train_forest(X, y, ForestParams(n_trees=8), seed=3)
    path = tmp_path / "forest.json"
    save_model(forest_to_artifact(forest), path)
    loaded = forest_from_artifact(load_model(path))
    rng = np.random.default_rng(4)
    X_test = rng.normal(size=(1000, X.shape[1]))
    np.testing.assert_array_equal(predict_probs(forest, X_test), predict_probs(loaded, X_test))


def test_parallel_training_matches_serial():
    X, y = _gaussian_blobs(40)
    f1 = train_forest(X, y, ForestParams(n_trees=6), seed=2, n_jobs=1)
    f2 = train_forest(X, y, ForestParams(n_trees=6), seed=2, n_jobs=2)
    for t1, t2 in zip(f1.trees, f2.trees):
        np.testing.assert_array_equal(t1.feature, t2.feature)
        np.testing.assert_array_equal(t1.threshold, t2.threshold)
        np.testing.assert_array_equal(t1.counts, t2.counts)


def _single_leaf_forest(counts):
    tree = Tree(
        feature=np.asarray([-1]),
        threshold=np.asarray([0.0]),
        left=np.asarray([-1]),
        right=np.asarray([-1]),
        counts=np.asarray([counts], dtype=float),
    )
    return Forest(trees=[tree], params=ForestParams(n_trees=1), seed=0, n_features=3)


def test_single_leaf_prediction():
    forest = _single_leaf_forest([0.0, 10.0, 0.0])
    labels, probs = predict(forest, np.zeros((1, 3)))
    assert labels[0] == 0
    np.testing.assert_allclose(probs[0], [0, 1, 0])


def test_tie_break_toward_neutral_then_negative():
    labels, _ = predict(_single_leaf_forest([5.0, 5.0, 5.0]), np.zeros((1, 3)))
    assert labels[0] == 0
    labels, _ = predict(_single_leaf_forest([5.0, 0.0, 5.0]), np.zeros((1, 3)))
    assert labels[0] == -1


def test_probs_sum_to_one():
    X, y = _gaussian_blobs(50, noise=2.0)
    forest = train_forest(X, y, ForestParams(n_trees=7), seed=5)
    probs = predict_probs(forest, np.random.default_rng(0).normal(size=(200, X.shape[1])))
    np.testing.assert_allclose(probs.sum(axis=1), 1.0, atol=1e-12)
    assert probs.max() <= 1.0 and probs.min() >= 0.0


def test_confidence_bound_three_class():
    X = np.random.default_rng(1).normal(size=(60, 4))
    y = np.asarray([-1, 0, 1] * 20)
    forest = train_forest(X, y, ForestParams(n_trees=9, max_depth=3), seed=0)
    probs = predict_probs(forest, X)
    assert np.all(probs.max(axis=1) >= 1 / 3 - 1e-12)


def test_adjacent_float_values_never_make_empty_leaves():
    # midpoint of two adjacent floats rounds to one of them; the split must
    # still send at least one sample to each side
    a = np.nextafter(1.0, 2.0)
    b = np.nextafter(a, 2.0)
    assert (a + b) / 2.0 == b  # the degenerate case under test
    X = np.asarray([[a]] * 8 + [[b]] * 8)
    y = np.asarray([-1] * 8 + [1] * 8)
    forest = train_forest(X, y, ForestParams(n_trees=10, max_depth=3, min_leaf=2), seed=0)
    for tree in forest.trees:
        leaf_sums = tree.counts[tree.feature == -1].sum(axis=1)
        assert np.all(leaf_sums > 0)
    probs = predict_probs(forest, X)
    assert np.all(np.isfinite(probs))


def test_all_labels_identical_degenerates():
    X = np.random.default_rng(0).normal(size=(30, 5))
    y = np.ones(30, dtype=int)
    forest = train_forest(X, y, ForestParams(n_trees=3), seed=0)
    labels, probs = predict(forest, X)
    assert np.all(labels == 1)
    np.testing.assert_allclose(probs[:, 2], 1.0)


# -- XOR with an exhaustive depth-2 oracle -----------------------------------


def _xor_dataset(n=500, noise=0.1, seed=7, n_pad=4):
    rng = np.random.default_rng(seed)
    bits = rng.integers(0, 2, size=(n, 2))
    X = np.hstack([bits + rng.normal(0, noise, size=(n, 2)), rng.normal(size=(n, n_pad))])
    y = np.where(bits[:, 0] ^ bits[:, 1] == 1, 1, -1)
    users = np.asarray([f"u{i % 25}" for i in range(n)])
    return X, y, users


def _depth2_oracle_accuracy(X, y):
    """Best depth-2 tree over a threshold grid on the two relevant features."""
    grid = np.linspace(X[:, :2].min(), X[:, :2].max(), 21)
    best = 0.0
    for root_f, root_t in itertools.product((0, 1), grid):
        left = X[:, root_f] <= root_t
        acc_parts = 0
        for side in (left, ~left):
            if not side.any():
                continue
            side_best = 0
            for f, t in itertools.product((0, 1), grid):
                leaf = X[side, f] <= t
                for sign in (1, -1):
                    pred = np.where(leaf, sign, -sign)
                    side_best = max(side_best, int(np.sum(pred == y[side])))
            acc_parts += side_best
        best = max(best, acc_parts / len(y))
    return best


def test_xor_cv_accuracy():
    X, y, users = _xor_dataset()
    # independent oracle: some depth-2 axis tree separates the pattern
    assert _depth2_oracle_accuracy(X, y) > 0.95
    report = cross_validate(
        X, y, users, k=10, params=ForestParams(n_trees=30, max_depth=6, min_leaf=2), seed=0
    )
    assert report.accuracy > 0.9


def test_planted_signal_beats_majority_baseline():
    rng = np.random.default_rng(12)
    n = 300
    y = rng.choice([-1, 0, 1], size=n, p=[0.2, 0.3, 0.5])
    X = rng.normal(size=(n, 8))
    X[:, 0] += 1.5 * y  # planted signal
    users = np.asarray([f"u{i % 15}" for i in range(n)])
    baseline = max(np.mean(y == c) for c in (-1, 0, 1))
    report = cross_validate(X, y, users, k=10, params=ForestParams(n_trees=20), seed=1)
    assert report.accuracy >= baseline + 0.15


def test_grouped_cv_user_disjoint():
    X, y, users = _xor_dataset(n=200)
    from moodpipe.smm import _grouped_folds

    rng = np.random.default_rng(0)
    folds = _grouped_folds(users, 10, rng)
    all_idx = np.concatenate(folds)
    assert sorted(all_idx) == list(range(200))
    for fold in folds:
        fold_users = set(users[fold])
        rest = set(users) - fold_users
        assert fold_users.isdisjoint(rest & fold_users)
        for other in folds:
            if other is fold:
                continue
            assert fold_users.isdisjoint(set(users[other]))


def test_cv_k_greater_than_n_fatal():
    X = np.zeros((5, 3))
    y = np.asarray([-1, 1, -1, 1, -1])
    with pytest.raises(ValueError):
        cross_validate(X, y, np.asarray(["a"] * 5), k=10)


def test_cv_report_shape():
    X, y = _gaussian_blobs(30)
    users = np.asarray([f"u{i % 12}" for i in range(len(y))])
    report = cross_validate(X, y, users, k=5, params=ForestParams(n_trees=5), seed=0)
    assert report.confusion.shape == (3, 3)
    assert report.confusion.sum() == len(y)
    assert report.accuracy == 1.0
    assert report.per_class[1][2] == 1.0  # f1 of +1
    text = report.as_text()
    assert "accuracy" in text and "-1" in text


def test_label_all_frames_totality():
    rng = np.random.default_rng(3)
    frames = []
    for i in range(40):
        frames.append(
            FeatureFrame(
                user_id=f"u{i % 4}",
                date=dt.date(2019, 11, 1 + i % 5),
                slot=i % 8,
                vector=rng.normal(size=113),
                presence={},
                annotation=6 if i % 7 == 0 else None,
            )
        )
    X = np.stack([f.vector for f in frames])
    y = rng.choice([-1, 1], size=20)
    forest = train_forest(X[:20], y, ForestParams(n_trees=5, max_depth=4), seed=0)
    labels = label_all_frames(forest, frames)
    assert len(labels) == 40
    for lab, frame in zip(labels, frames):
        assert lab.predicted in (-1, 0, 1)
        assert 1 / 3 - 1e-9 <= lab.confidence <= 1.0
        if frame.annotation == 6:
            assert lab.questionnaire == 1
        else:
            assert lab.questionnaire is None
