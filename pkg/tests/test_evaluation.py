import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from deepbrain.benchmark import COMPARISON_COLUMNS, BenchmarkSettings, compare_models
from deepbrain.errors import DataError, DegenerateInputError, ShapeError
from deepbrain.evaluation import (
    SIMILARITY_COLUMNS,
    auc,
    classification_metrics,
    confusion_counts,
    midranks,
    pair_counting_auc,
    roc_curve,
    similarity_matrix,
    spearman,
)
from deepbrain.signal_model import Dataset, LabelClass, RawSession
from deepbrain.synthgen import GenSpec, generate_dataset

A, B = LabelClass.RELAXED, LabelClass.FOCUSED


def random_fixture(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(2, 60))
    labels = rng.random(n) < rng.uniform(0.2, 0.8)
    labels[0], labels[1] = True, False
    # coarse scores so that ties occur often
    scores = np.round(rng.random(n), int(rng.integers(1, 4)))
    return scores, labels


# -- confusion & metrics ------------------------------------------------------

def test_confusion_hand_count():
    cc = confusion_counts([A, A, B, B], [A, B, A, B], A)
    assert (cc.tp, cc.fp, cc.fn, cc.tn) == (1, 1, 1, 1)


def test_confusion_perfect():
    labels = [A, B, LabelClass.FOCUSED_TO_RELAXED, A]
    for cls in LabelClass:
        cc = confusion_counts(labels, labels, cls)
        assert cc.fp == 0 and cc.fn == 0 and cc.total == 4


def test_confusion_absent_class():
    cc = confusion_counts([A, B, A], [B, A, A], LabelClass.RELAXED_TO_FOCUSED)
    assert (cc.tp, cc.fp, cc.fn, cc.tn) == (0, 0, 0, 3)


def test_confusion_errors():
    with pytest.raises(ShapeError):
        confusion_counts([A], [A, B], A)
    with pytest.raises(DataError):
        confusion_counts([], [], A)


def test_metrics_perfect():
    labels = [A, B, LabelClass.RELAXED_TO_FOCUSED, LabelClass.FOCUSED_TO_RELAXED] * 3
    r = classification_metrics(labels, labels)
    assert r.accuracy == 1.0
    assert all(m.f1 == 1.0 for m in r.per_class.values())


def test_metrics_two_by_two():
    r = classification_metrics([A, A, B, B], [A, B, A, B])
    assert r.accuracy == 0.5
    m = r.per_class[A]
    assert (m.precision, m.recall, m.f1) == (0.5, 0.5, 0.5)


def test_metrics_three_of_four():
    r = classification_metrics([A, A, A, B], [A, A, A, A])
    assert r.accuracy == 0.75
    assert r.per_class[A].recall == 0.75 and r.per_class[A].precision == 1.0


def test_metrics_degenerate_precision_flag():
    r = classification_metrics([A, A], [A, B])
    m = r.per_class[B]
    assert m.precision == 0.0 and m.degenerate_precision
    assert "focused:precision" in r.degenerate


def test_metrics_invariants(rng):
    for _ in range(30):
        labels = rng.integers(0, 4, 50)
        preds = np.where(rng.random(50) < 0.6, labels, rng.integers(0, 4, 50))
        r = classification_metrics(preds, labels)
        assert r.accuracy == np.mean(preds == labels)
        # support-weighted recall is the multiclass accuracy
        assert abs(r.weighted["recall"] - r.accuracy) < 1e-12
        for m in r.per_class.values():
            assert m.recall == m.tpr
            for v in (m.precision, m.recall, m.f1, m.fpr):
                assert 0.0 <= v <= 1.0
            if m.precision + m.recall > 0:
                hm = 2 * m.precision * m.recall / (m.precision + m.recall)
                assert abs(m.f1 - hm) < 1e-12


def test_metrics_with_scores():
    labels = [A, B, A, B]
    scores = np.array([[0.7, 0.1, 0.1, 0.1], [0.2, 0.6, 0.1, 0.1],
                       [0.4, 0.3, 0.2, 0.1], [0.1, 0.1, 0.1, 0.7]])
    r = classification_metrics(scores.argmax(axis=1), labels, scores)
    assert r.per_class[A].auc == 1.0
    assert r.per_class[LabelClass.RELAXED_TO_FOCUSED].auc is None
    assert 0.0 <= r.micro_auc <= 1.0


# -- ROC & AUC ----------------------------------------------------------------

def test_roc_hand_example():
    curve = roc_curve([0.9, 0.8, 0.7, 0.6], [True, False, True, False])
    assert curve.points() == [(0, 0), (0, 0.5), (0.5, 0.5), (0.5, 1), (1, 1)]
    assert auc(curve) == 0.75


def test_roc_class_labels():
    curve = roc_curve([0.9, 0.8, 0.7, 0.6], [A, B, A, B], positive=A)
    assert auc(curve) == 0.75


def test_roc_perfect_separation():
    curve = roc_curve([0.9, 0.8, 0.2, 0.1], [True, True, False, False])
    assert (0.0, 1.0) in curve.points()
    assert auc(curve) == 1.0


def test_roc_all_tied():
    curve = roc_curve([0.5] * 5, [True, False, True, False, False])
    assert curve.points() == [(0, 0), (1, 1)]
    assert auc(curve) == 0.5


def test_roc_single_class_error():
    with pytest.raises(DegenerateInputError):
        roc_curve([0.1, 0.2], [True, True])


def test_roc_thresholds():
    curve = roc_curve([0.3, 0.3, 0.9], [True, False, False])
    assert curve.thresholds[0] == np.inf
    assert curve.thresholds[1:].tolist() == [0.9, 0.3]


@pytest.mark.parametrize("seed", range(100))
def test_auc_equals_pair_counting(seed):
    scores, labels = random_fixture(seed)
    assert abs(auc(roc_curve(scores, labels)) - pair_counting_auc(scores, labels)) < 1e-12


@pytest.mark.parametrize("seed", range(100))
def test_roc_invariants(seed):
    scores, labels = random_fixture(seed)
    c = roc_curve(scores, labels)
    assert c.points()[0] == (0.0, 0.0) and c.points()[-1] == (1.0, 1.0)
    assert np.all(np.diff(c.fpr) >= 0) and np.all(np.diff(c.tpr) >= 0)


# -- Spearman -----------------------------------------------------------------

def test_spearman_examples():
    assert spearman([1, 2, 3], [10, 20, 30]) == 1.0
    assert spearman([1, 2, 3], [3, 2, 1]) == -1.0
    assert abs(spearman([1, 2, 3, 4], [2, 1, 4, 3]) - 0.6) < 1e-12


def test_midranks_ties():
    assert midranks([10, 20, 20, 30]).tolist() == [1.0, 2.5, 2.5, 4.0]


def test_spearman_errors():
    with pytest.raises(DegenerateInputError):
        spearman([1, 1, 1], [1, 2, 3])
    with pytest.raises(ShapeError):
        spearman([1, 2], [1, 2, 3])
    with pytest.raises(DataError):
        spearman([1], [1])


@settings(max_examples=100, deadline=None)
@given(st.lists(st.tuples(st.integers(1, 50), st.integers(1, 50)), min_size=3, max_size=40))
def test_spearman_monotone_invariance(pairs):
    x = np.array([p[0] for p in pairs], dtype=float)
    y = np.array([p[1] for p in pairs], dtype=float)
    if np.all(x == x[0]) or np.all(y == y[0]):
        return
    assert abs(spearman(x, y) - spearman(x ** 3, y)) < 1e-12
    assert abs(spearman(x, y) - spearman(x, np.exp(y / 10))) < 1e-12


# -- similarity ---------------------------------------------------------------

def test_similarity_identical_ramps():
    ramp = np.linspace(40, 80, 180)
    sessions = []
    for cls in LabelClass:
        for j in range(3):
            sessions.append(RawSession(ramp if cls % 2 else ramp[::-1], cls, "S1", "M", False))
    sim = similarity_matrix(sessions, 10, seed=0)
    assert np.all(sim.self_similarity == 1.0)
    assert sim.matrix[0, 1] == -1.0


def test_similarity_symmetric_and_schema(small_sessions):
    sim = similarity_matrix(small_sessions, 20, seed=1)
    assert np.array_equal(sim.matrix, sim.matrix.T)
    assert np.all(np.abs(sim.matrix) <= 1.0)
    rows = sim.rows()
    assert [r["class"] for r in rows] == [c.key for c in LabelClass]
    assert all(list(r) == SIMILARITY_COLUMNS for r in rows)
    again = similarity_matrix(small_sessions, 20, seed=1)
    assert np.array_equal(sim.matrix, again.matrix)


def test_similarity_needs_two_per_class(small_sessions):
    few = [s for s in small_sessions if s.label is not A] + \
        [next(s for s in small_sessions if s.label is A)]
    with pytest.raises(DataError):
        similarity_matrix(few, 5, 0)


# -- comparison ---------------------------------------------------------------

def test_compare_models_schema():
    data = generate_dataset(GenSpec(sessions_per_class=10), False, 0)
    tiny = BenchmarkSettings(sessions_per_class=10, epochs=1, batch_size=16)
    trials = {}
    table = compare_models(["mlp"], {"quiet": data}, [1], tiny, trials=trials)
    assert list(table.rows) == ["quiet"]
    assert len(table.rows["quiet"]) == 1
    assert list(table.rows["quiet"][0]) == COMPARISON_COLUMNS
    assert table.rows["quiet"][0]["method"] == "MLP"
    assert list(trials) == [("quiet", "mlp", 1)]


def test_compare_models_means_over_seeds():
    data = generate_dataset(GenSpec(sessions_per_class=10), True, 0)
    tiny = BenchmarkSettings(sessions_per_class=10, epochs=1, batch_size=16)
    table = compare_models(["mlp", "lstm"], {"noisy": data}, [1, 2], tiny)
    assert [r["method"] for r in table.rows["noisy"]] == ["MLP", "LSTM"]
    per = [r["accuracy"] for r in table.per_seed["noisy"] if r["method"] == "LSTM"]
    assert len(per) == 2 and table.mean_accuracy("noisy", "lstm") == pytest.approx(np.mean(per))
