"""Confusion matrices, precision/recall/F1, ROC curves and AUC.

Convention: any 0/0 ratio (e.g. precision of a class that is never
predicted) is reported as 0.
"""

import csv
import json
from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, InvalidInputError, UndefinedROCError


def confusion(true_labels, pred_labels, C) -> np.ndarray:
    """C x C counts; rows are the true class, columns the predicted class."""
    t = np.asarray(true_labels, dtype=np.int64).ravel()
    p = np.asarray(pred_labels, dtype=np.int64).ravel()
    if t.shape != p.shape:
        raise DimensionError(f"{t.size} true labels vs {p.size} predictions")
    for name, arr in (("true", t), ("predicted", p)):
        if arr.size and (arr.min() < 0 or arr.max() >= C):
            raise InvalidInputError(f"{name} labels must lie in [0, {C})")
    cm = np.zeros((C, C), dtype=np.int64)
    np.add.at(cm, (t, p), 1)
    return cm


def accuracy(cm) -> float:
    total = int(np.sum(cm))
    return float(np.trace(cm)) / total if total else 0.0


def _ratio(num, den):
    return np.divide(num, den, out=np.zeros(len(num)), where=den > 0)


@dataclass
class PRF1:
    precision: np.ndarray
    recall: np.ndarray
    f1: np.ndarray

    @property
    def macro_precision(self) -> float:
        return float(np.mean(self.precision))

    @property
    def macro_recall(self) -> float:
        return float(np.mean(self.recall))

    @property
    def macro_f1(self) -> float:
        return float(np.mean(self.f1))


def prf1(cm) -> PRF1:
    cm = np.asarray(cm, dtype=np.float64)
    tp = np.diag(cm)
    precision = _ratio(tp, cm.sum(axis=0))
    recall = _ratio(tp, cm.sum(axis=1))
    f1 = _ratio(2.0 * precision * recall, precision + recall)
    return PRF1(precision, recall, f1)


def roc_points(scores, positives):
    """ROC curve from a descending threshold sweep; tied scores enter together.

    Returns a list of (fpr, tpr) from (0, 0) to (1, 1).
    """
    s = np.asarray(scores, dtype=np.float64).ravel()
    y = np.asarray(positives).astype(bool).ravel()
    if s.shape != y.shape:
        raise DimensionError(f"{s.size} scores vs {y.size} labels")
    n_pos = int(y.sum())
    n_neg = y.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise UndefinedROCError("ROC needs at least one positive and one negative")
    order = np.argsort(-s, kind="stable")
    s, y = s[order], y[order]
    # last index of each tie group
    ends = np.flatnonzero(np.append(s[1:] != s[:-1], True))
    tp = np.cumsum(y)[ends]
    fp = (ends + 1) - tp
    return [(0.0, 0.0)] + [(f / n_neg, t / n_pos) for f, t in zip(fp.tolist(), tp.tolist())]


def auc(points) -> float:
    """Trapezoidal area under a list of (fpr, tpr) points."""
    area = 0.0
    for (x0, y0), (x1, y1) in zip(points[:-1], points[1:]):
        area += (x1 - x0) * (y0 + y1) / 2.0
    return area


def auc_ovr(proba, labels):
    """One-vs-rest AUC per class plus their unweighted mean.

    Classes absent from ``labels`` (or the only class present) have no
    ROC; they get ``None`` and are left out of the macro mean.
    """
    P = np.atleast_2d(np.asarray(proba, dtype=np.float64))
    y = np.asarray(labels, dtype=np.int64).ravel()
    per_class = []
    for c in range(P.shape[1]):
        try:
            per_class.append(auc(roc_points(P[:, c], y == c)))
        except UndefinedROCError:
            per_class.append(None)
    defined = [a for a in per_class if a is not None]
    macro = float(np.mean(defined)) if defined else None
    return per_class, macro


@dataclass
class EvalReport:
    class_names: tuple
    accuracy: float
    confusion: np.ndarray
    precision: np.ndarray
    recall: np.ndarray
    f1: np.ndarray
    macro_f1: float
    roc: dict
    auc: dict

    def to_dict(self):
        names = list(self.class_names)
        return {
            "n": int(self.confusion.sum()),
            "accuracy": self.accuracy,
            "classes": names,
            "confusion": self.confusion.tolist(),
            "precision": dict(zip(names, self.precision.tolist())),
            "recall": dict(zip(names, self.recall.tolist())),
            "f1": dict(zip(names, self.f1.tolist())),
            "macro_f1": self.macro_f1,
            "auc": self.auc,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"

    def summary(self) -> str:
        lines = [f"accuracy  {self.accuracy:.4f}   macro-F1 {self.macro_f1:.4f}"]
        width = max(len(n) for n in self.class_names)
        lines.append(" " * (width + 2) + "  ".join(f"{n[:7]:>7}" for n in self.class_names)
                     + "   prec    rec     F1")
        for i, name in enumerate(self.class_names):
            row = "  ".join(f"{v:>7d}" for v in self.confusion[i])
            lines.append(f"{name:<{width}}  {row}   {self.precision[i]:.3f}  "
                         f"{self.recall[i]:.3f}  {self.f1[i]:.3f}")
        auc_txt = ", ".join(
            f"{k}={v:.4f}" if v is not None else f"{k}=n/a" for k, v in self.auc.items()
        )
        lines.append(f"AUC: {auc_txt}")
        return "\n".join(lines)


def evaluate_predictions(labels, proba, class_names, positive_class=None) -> EvalReport:
    """Assemble a report from true labels and predicted class probabilities.

    ``positive_class`` (default: the last class) gets an extra
    class-vs-rest binary ROC/AUC entry under ``<name>_vs_rest``.
    """
    P = np.atleast_2d(np.asarray(proba, dtype=np.float64))
    y = np.asarray(labels, dtype=np.int64).ravel()
    C = len(class_names)
    if P.shape != (y.size, C):
        raise DimensionError(f"proba shape {P.shape} does not match {y.size} labels x {C} classes")
    pred = np.argmax(P, axis=1)
    cm = confusion(y, pred, C)
    scores = prf1(cm)
    per_class, macro = auc_ovr(P, y)
    pos = C - 1 if positive_class is None else positive_class
    names = [n.lower() for n in class_names]
    roc, aucs = {}, {}
    for c in range(C):
        aucs[names[c]] = per_class[c]
        if per_class[c] is not None:
            roc[names[c]] = roc_points(P[:, c], y == c)
    aucs["macro"] = macro
    binary_key = f"{names[pos]}_vs_rest"
    aucs[binary_key] = per_class[pos]
    if per_class[pos] is not None:
        roc[binary_key] = roc[names[pos]]
    return EvalReport(tuple(class_names), accuracy(cm), cm, scores.precision, scores.recall,
                      scores.f1, scores.macro_f1, roc, aucs)


def write_roc_csv(points, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("fpr", "tpr"))
        for fpr, tpr in points:
            w.writerow((repr(float(fpr)), repr(float(tpr))))
