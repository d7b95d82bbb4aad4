import datetime as dt
from zoneinfo import ZoneInfo

import numpy as np
import pytest
import scipy.sparse as sp

from moodpipe.ingest import QueryEvent, load_model, save_model
from moodpipe.qmm import (
    MODE_QUESTIONNAIRE_ONLY,
    MODE_WITH_SMM,
    Session,
    Vocabulary,
    balance,
    build_sessions,
    build_vocabulary,
    design_matrix,
    evaluate,
    logreg_from_artifact,
    logreg_to_artifact,
    loss_and_gradient,
    score_session,
    score_sessions,
    sessionize,
    train_logreg,
    write_sessions_jsonl,
    read_sessions_jsonl,
)
from moodpipe.smm import FrameLabel

TOKYO = ZoneInfo("Asia/Tokyo")
DATE = dt.date(2019, 11, 1)


def _ts(hour, minute=0):
    t = dt.datetime(2019, 11, 1, hour, minute, tzinfo=TOKYO)
    return int(t.timestamp() * 1000)


def _session(queries, label=None, source=None, user="u1", slot=3, date=DATE):
    return Session(user, date, slot, frozenset(queries), label, source)


def _frame_label(user="u1", slot=3, predicted=1, confidence=0.8, questionnaire=None):
    return FrameLabel(user, DATE, slot, predicted, confidence, questionnaire)


def test_sessionize_dedups_queries():
    events = [
        QueryEvent("u1", _ts(10, 0), "weather tokyo"),
        QueryEvent("u1", _ts(10, 30), "weather tokyo"),
        QueryEvent("u1", _ts(11, 59), "lunch"),
        QueryEvent("u1", _ts(12, 0), "train"),  # next window
        QueryEvent("u2", _ts(10, 5), "news"),
    ]
    sessions = sessionize(events, TOKYO)
    assert len(sessions) == 3
    s = {(x.user_id, x.slot): x for x in sessions}
    assert s[("u1", 3)].query_set == {"weather tokyo", "lunch"}
    assert s[("u1", 4)].query_set == {"train"}


def test_build_sessions_missing_data_rule():
    events = [QueryEvent("u1", _ts(10), "a")]
    # no label for the window -> no session in questionnaire mode
    out = build_sessions(events, [], MODE_QUESTIONNAIRE_ONLY, TOKYO)
    assert out == []
    # with_smm mode picks up the prediction
    out = build_sessions(events, [_frame_label(predicted=1)], MODE_WITH_SMM, TOKYO)
    assert len(out) == 1
    assert out[0].label == 1 and out[0].source == "smm"


def test_build_sessions_questionnaire_priority_and_neutral_exclusion():
    events = [QueryEvent("u1", _ts(10), "a")]
    lab = _frame_label(predicted=-1, questionnaire=1)
    out = build_sessions(events, [lab], MODE_WITH_SMM, TOKYO)
    assert out[0].label == 1 and out[0].source == "questionnaire"
    # neutral questionnaire excludes the window entirely
    lab0 = _frame_label(predicted=1, questionnaire=0)
    assert build_sessions(events, [lab0], MODE_WITH_SMM, TOKYO) == []
    # neutral prediction excluded too
    labp0 = _frame_label(predicted=0)
    assert build_sessions(events, [labp0], MODE_WITH_SMM, TOKYO) == []


def test_build_sessions_confidence_knob():
    events = [QueryEvent("u1", _ts(10), "a")]
    lab = _frame_label(predicted=1, confidence=0.4)
    assert len(build_sessions(events, [lab], MODE_WITH_SMM, TOKYO)) == 1
    assert build_sessions(events, [lab], MODE_WITH_SMM, TOKYO, min_confidence=0.5) == []


def test_augmentation_only_adds_sessions():
    rng = np.random.default_rng(0)
    events, labels = [], []
    for i in range(50):
        user = f"u{i}"
        events.append(QueryEvent(user, _ts(10), f"q{i}"))
        q = rng.choice([None, -1, 0, 1], p=[0.5, 0.2, 0.1, 0.2])
        labels.append(
            FrameLabel(user, DATE, 3, int(rng.choice([-1, 0, 1])), 0.6, None if q is None else int(q))
        )
    with_q = build_sessions(events, labels, MODE_QUESTIONNAIRE_ONLY, TOKYO)
    with_smm = build_sessions(events, labels, MODE_WITH_SMM, TOKYO)
    assert len(with_smm) >= len(with_q)
    keys_q = {s.key() for s in with_q}
    assert keys_q <= {s.key() for s in with_smm}


def test_vocabulary_min_df_and_order():
    sessions = (
        [_session(["banana", "apple"], user=f"u{i}") for i in range(3)]
        + [_session(["apple"], user=f"v{i}") for i in range(2)]
        + [_session(["rare"], user="w0")]
    )
    vocab = build_vocabulary(sessions, min_df=3)
    assert vocab.queries == ["apple", "banana"]  # df 5, 3; "rare" df 1 excluded
    assert vocab.doc_freq == [5, 3]
    vocab2 = build_vocabulary(sessions, min_df=1, max_size=2)
    assert len(vocab2) == 2


def test_vocabulary_empty_fatal():
    with pytest.raises(ValueError):
        build_vocabulary([])


def test_balance_downsamples_majority():
    sessions = [_session([f"p{i}"], label=1, user=f"u{i}") for i in range(100)] + [
        _session([f"n{i}"], label=-1, user=f"v{i}") for i in range(40)
    ]
    out = balance(sessions, seed=3)
    labels = [s.label for s in out]
    assert labels.count(1) == 40 and labels.count(-1) == 40
    assert balance(sessions, seed=3) == out  # deterministic
    already = sessions[:40] + sessions[100:]
    assert sorted(s.key() for s in balance(already, seed=0)) == sorted(s.key() for s in already)


def test_balance_one_class_fatal():
    with pytest.raises(ValueError):
        balance([_session(["a"], label=1)])


def test_gradient_matches_finite_differences():
    rng = np.random.default_rng(42)
    n, d = 60, 20
    X = sp.csr_matrix(rng.integers(0, 2, size=(n, d)).astype(float))
    y = rng.choice([-1.0, 1.0], size=n)
    theta0 = float(rng.normal())
    theta = rng.normal(size=d)
    l2 = 1e-2
    _, g0, g = loss_and_gradient(theta0, theta, X, y, l2)
    eps = 1e-6

    def f(t0, t):
        return loss_and_gradient(t0, t, X, y, l2)[0]

    fd0 = (f(theta0 + eps, theta) - f(theta0 - eps, theta)) / (2 * eps)
    assert abs(fd0 - g0) <= 1e-4
    for j in range(d):
        step = np.zeros(d)
        step[j] = eps
        fd = (f(theta0, theta + step) - f(theta0, theta - step)) / (2 * eps)
        assert abs(fd - g[j]) <= 1e-4


def test_single_predictive_feature():
    sessions = [_session(["happy"], label=1, user=f"u{i}") for i in range(20)] + [
        _session(["other"], label=-1, user=f"v{i}") for i in range(20)
    ]
    vocab = build_vocabulary(sessions, min_df=1)
    weights = {}
    for l2 in (1.0, 1e-2, 1e-4):
        model = train_logreg(sessions, vocab, l2_lambda=l2)
        w = model.theta[vocab.index["happy"]]
        assert w > 0
        weights[l2] = w
        scores = score_sessions(model, sessions)
        pred = np.where(scores >= 0.5, 1, -1)
        assert np.mean(pred == np.asarray([s.label for s in sessions])) == 1.0
    assert weights[1e-4] > weights[1e-2] > weights[1.0]


def test_all_zero_features_reduce_to_intercept():
    sessions = [_session(["oov"], label=1, user=f"u{i}") for i in range(30)] + [
        _session(["oov"], label=-1, user=f"v{i}") for i in range(10)
    ]
    vocab = Vocabulary(queries=["never-seen"], doc_freq=[5], min_df=1)
    model = train_logreg(sessions, vocab, l2_lambda=1e-3)
    assert abs(model.theta[0]) < 1e-6
    # intercept-only score equals the class prior
    assert score_session(model, _session(["anything"])) == pytest.approx(0.75, abs=1e-3)


def test_loss_monotone_non_increasing():
    rng = np.random.default_rng(1)
    sessions = []
    for i in range(80):
        label = 1 if i % 2 == 0 else -1
        words = [f"w{j}" for j in rng.choice(30, size=4, replace=False)]
        if label == 1:
            words.append("good")
        sessions.append(_session(words, label=label, user=f"u{i}"))
    vocab = build_vocabulary(sessions, min_df=1)
    model = train_logreg(sessions, vocab)
    diffs = np.diff(model.loss_history)
    assert np.all(diffs <= 1e-12)


def test_score_bounds_and_oov():
    sessions = [_session(["a"], label=1, user="u1"), _session(["b"], label=-1, user="u2")]
    vocab = build_vocabulary(sessions, min_df=1)
    model = train_logreg(sessions, vocab)
    s_empty = score_session(model, _session([]))
    from scipy.special import expit

    assert s_empty == pytest.approx(float(expit(model.theta0)))
    # unseen query contributes nothing
    assert score_session(model, _session(["zzz-unseen"])) == pytest.approx(s_empty)
    for s in (s_empty, score_session(model, _session(["a", "b"]))):
        assert 0.0 < s < 1.0


def test_score_monotone_in_weight():
    sessions = [_session(["up"], label=1, user=f"u{i}") for i in range(10)] + [
        _session(["down"], label=-1, user=f"v{i}") for i in range(10)
    ]
    vocab = build_vocabulary(sessions, min_df=1)
    model = train_logreg(sessions, vocab)
    base = score_session(model, _session(["down"]))
    more = score_session(model, _session(["down", "up"]))
    assert more > base  # adding a positive-weight query strictly increases


def _mixture_sessions(n=400, seed=0, n_words=40, signal=0.35, balanced=False):
    rng = np.random.default_rng(seed)
    pos_words = [f"pos{i}" for i in range(n_words)]
    neg_words = [f"neg{i}" for i in range(n_words)]
    neutral = [f"mid{i}" for i in range(2 * n_words)]
    p_pos = 0.5 if balanced else 0.6
    sessions = []
    for i in range(n):
        label = 1 if rng.random() < p_pos else -1
        words = set()
        for _ in range(4):
            r = rng.random()
            if r < 0.25 + (signal if label == 1 else -signal) / 2:
                words.add(pos_words[rng.integers(n_words)])
            elif r < 0.5:
                words.add(neg_words[rng.integers(n_words)])
            else:
                words.add(neutral[rng.integers(2 * n_words)])
        sessions.append(_session(sorted(words), label=label, user=f"u{i}"))
    return sessions


def test_evaluate_reports_and_prior_null():
    sessions = _mixture_sessions()
    report = evaluate(sessions, MODE_WITH_SMM, splits=5, seed=0, min_df=2)
    assert report.n_sessions == 400
    assert report.n_train == 320
    assert 0.5 < report.accuracy_mean <= 1.0
    assert len(report.accuracies) == 5

    # label-shuffled null on a balanced dataset: accuracy near the 0.5 prior.
    # (Balanced training forces the null toward 0.5, so the prior comparison
    # is only meaningful when the classes are roughly even.)
    balanced_sessions = _mixture_sessions(n=400, seed=2, balanced=True)
    labels = [s.label for s in balanced_sessions]
    prior = max(labels.count(1), labels.count(-1)) / len(labels)
    rng = np.random.default_rng(9)
    shuffled_accs = []
    for rep in range(3):
        perm = rng.permutation(len(labels))
        shuffled = [
            Session(s.user_id, s.date, s.slot, s.query_set, labels[perm[i]], s.source)
            for i, s in enumerate(balanced_sessions)
        ]
        rep_report = evaluate(shuffled, MODE_WITH_SMM, splits=4, seed=rep, min_df=2)
        shuffled_accs.append(rep_report.accuracy_mean)
    assert abs(float(np.mean(shuffled_accs)) - prior) < 0.05


def test_evaluate_unseen_test_query_is_inert():
    sessions = _mixture_sessions(n=200, seed=3)
    vocab = build_vocabulary(sessions[:160], min_df=2)
    model = train_logreg(balance(sessions[:160], seed=0), vocab)
    test = sessions[160:]
    scores1 = score_sessions(model, test)
    spiked = [
        Session(s.user_id, s.date, s.slot, frozenset(s.query_set | {"never-in-train"}), s.label, s.source)
        for s in test
    ]
    scores2 = score_sessions(model, spiked)
    np.testing.assert_allclose(scores1, scores2)


def test_evaluate_needs_min_class_counts():
    sessions = [_session(["a"], label=1, user=f"u{i}") for i in range(30)]
    sessions += [_session(["b"], label=-1, user="v0")]
    with pytest.raises(ValueError):
        evaluate(sessions, MODE_WITH_SMM)


def test_logreg_artifact_roundtrip(tmp_path):
    sessions = _mixture_sessions(n=100, seed=5)
    vocab = build_vocabulary(sessions, min_df=2)
    model = train_logreg(sessions, vocab)
    path = tmp_path / "qmm.json"
    save_model(logreg_to_artifact(model), path)
    loaded = logreg_from_artifact(load_model(path))
    np.testing.assert_array_equal(loaded.theta, model.theta)
    assert loaded.theta0 == model.theta0
    assert loaded.vocabulary.queries == model.vocabulary.queries
    scores_a = score_sessions(model, sessions)
    scores_b = score_sessions(loaded, sessions)
    np.testing.assert_array_equal(scores_a, scores_b)


def test_empty_vocab_model_scores_constant(tmp_path):
    sessions = [_session(["a"], label=1, user=f"u{i}") for i in range(10)] + [
        _session(["b"], label=-1, user=f"v{i}") for i in range(5)
    ]
    vocab = Vocabulary(queries=[], doc_freq=[], min_df=3)
    model = train_logreg(sessions, vocab)
    path = tmp_path / "empty.json"
    save_model(logreg_to_artifact(model), path)
    loaded = logreg_from_artifact(load_model(path))
    from scipy.special import expit

    expected = float(expit(loaded.theta0))
    assert score_session(loaded, _session(["q"])) == pytest.approx(expected)


def test_sessions_jsonl_roundtrip(tmp_path):
    sessions = _mixture_sessions(n=30, seed=8)
    path = tmp_path / "sessions.jsonl"
    write_sessions_jsonl(sessions, path)
    loaded = read_sessions_jsonl(path)
    assert loaded == sessions
