import json
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

import oracles
from ssdhealth import metrics
from ssdhealth.errors import InvalidInputError, UndefinedROCError

NAMES = ("Normal", "Warning", "Failure")


def test_confusion_counts():
    cm = metrics.confusion([0, 1, 2], [1, 1, 2], 3)
    assert cm.tolist() == [[0, 1, 0], [0, 1, 0], [0, 0, 1]]
    assert metrics.accuracy(cm) == 2 / 3


def test_confusion_diagonal_and_range():
    assert metrics.confusion([0, 2, 1, 2], [0, 2, 1, 2], 3).tolist() == [[1, 0, 0], [0, 1, 0], [0, 0, 2]]
    with pytest.raises(InvalidInputError):
        metrics.confusion([0, 3], [0, 1], 3)


def test_prf1_diagonal_all_ones():
    r = metrics.prf1(np.diag([3, 4, 5]))
    for arr in (r.precision, r.recall, r.f1):
        np.testing.assert_array_equal(arr, 1.0)


def test_prf1_never_predicted_class_is_zero():
    r = metrics.prf1(np.array([[2, 0], [3, 0]]))
    assert r.precision[1] == 0.0 and r.f1[1] == 0.0


def test_prf1_two_class_hand_values():
    r = metrics.prf1(np.array([[5, 1], [2, 4]]))
    p0, r0 = Fraction(5, 7), Fraction(5, 6)
    assert r.precision[0] == pytest.approx(float(p0), abs=1e-15)
    assert r.recall[0] == pytest.approx(float(r0), abs=1e-15)
    assert r.f1[0] == pytest.approx(float(2 * p0 * r0 / (p0 + r0)), abs=1e-15)
    assert 2 * p0 * r0 / (p0 + r0) == Fraction(10, 13)


def test_roc_worked_example():
    pts = metrics.roc_points([0.9, 0.8, 0.7, 0.6], [1, 0, 1, 0])
    assert pts == [(0.0, 0.0), (0.0, 0.5), (0.5, 0.5), (0.5, 1.0), (1.0, 1.0)]
    assert metrics.auc(pts) == 0.75
    assert oracles.pair_counting_auc([0.9, 0.8, 0.7, 0.6], [1, 0, 1, 0]) == 0.75


def test_roc_perfect_and_tied():
    pts = metrics.roc_points([0.9, 0.8, 0.2, 0.1], [1, 1, 0, 0])
    assert (0.0, 1.0) in pts and metrics.auc(pts) == 1.0
    tied = metrics.roc_points([0.5] * 4, [1, 0, 1, 0])
    assert tied == [(0.0, 0.0), (1.0, 1.0)] and metrics.auc(tied) == 0.5


def test_roc_single_class_undefined():
    with pytest.raises(UndefinedROCError):
        metrics.roc_points([0.1, 0.2], [1, 1])


instances = st.integers(2, 50).flatmap(lambda n: st.tuples(
    st.lists(st.integers(0, 8).map(lambda k: k / 8), min_size=n, max_size=n),
    st.lists(st.booleans(), min_size=n, max_size=n).filter(lambda y: 0 < sum(y) < len(y)),
))


@given(instances)
def test_trapezoid_equals_pair_counting(inst):
    s, y = inst
    assert abs(metrics.auc(metrics.roc_points(s, y)) - oracles.pair_counting_auc(s, y)) < 1e-9


@given(instances)
def test_auc_invariant_under_monotone_transform(inst):
    s, y = inst
    t = np.exp(3 * np.asarray(s)) - 7
    assert metrics.auc(metrics.roc_points(t, y)) == pytest.approx(metrics.auc(metrics.roc_points(s, y)),
                                                                  abs=1e-12)


@given(st.lists(st.tuples(st.integers(0, 2), st.integers(0, 2)), min_size=1, max_size=60))
def test_accuracy_and_recall_from_matrix(pairs):
    t, p = zip(*pairs)
    cm = metrics.confusion(t, p, 3)
    assert metrics.accuracy(cm) == float(np.mean(np.array(t) == np.array(p)))
    rows = cm.sum(axis=1)
    expected = np.divide(np.diag(cm), rows, out=np.zeros(3), where=rows > 0)
    np.testing.assert_array_equal(metrics.prf1(cm).recall, expected)


def test_report_includes_failure_binary_view(tmp_path):
    rng = np.random.default_rng(0)
    y = np.array([0, 1, 2] * 10)
    P = rng.dirichlet(np.ones(3), size=30)
    rep = metrics.evaluate_predictions(y, P, NAMES)
    assert rep.auc["failure_vs_rest"] == rep.auc["failure"]
    assert rep.auc["macro"] == pytest.approx(np.mean([rep.auc[k] for k in ("normal", "warning", "failure")]))
    doc = json.loads(rep.to_json())
    assert list(doc) == ["n", "accuracy", "classes", "confusion", "precision", "recall", "f1",
                         "macro_f1", "auc"]
    path = tmp_path / "roc.csv"
    metrics.write_roc_csv(rep.roc["failure_vs_rest"], path)
    rows = path.read_text().splitlines()
    fprs = [float(r.split(",")[0]) for r in rows[1:]]
    assert rows[0] == "fpr,tpr" and fprs == sorted(fprs)


def test_absent_class_has_no_auc():
    y = np.array([0, 0, 1, 1])
    P = np.array([[0.8, 0.1, 0.1], [0.6, 0.3, 0.1], [0.2, 0.7, 0.1], [0.3, 0.6, 0.1]])
    per_class, macro = metrics.auc_ovr(P, y)
    assert per_class[2] is None and macro == pytest.approx(1.0)
