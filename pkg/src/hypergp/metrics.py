"""Classification, calibration, regression and clustering scores."""
from dataclasses import dataclass

import numpy as np

from . import _accel
from .errors import EmptyInput, InputError

CONVENTIONS = {
    "ece_bins": 10,
    "precision_recall_averaging": "macro",
    "ami_normalisation": "max",
    "ami_expectation": "permutation model",
}


@dataclass(frozen=True)
class ConfusionCounts:
    classes: np.ndarray
    tp: np.ndarray
    fp: np.ndarray
    tn: np.ndarray
    fn: np.ndarray


@dataclass(frozen=True)
class CalibrationBins:
    edges: np.ndarray
    counts: np.ndarray
    mean_confidence: np.ndarray
    accuracy: np.ndarray


def _labels_and_probs(y_true, probs):
    y = np.asarray(y_true, dtype=np.int64).reshape(-1)
    p = np.asarray(probs, dtype=np.float64)
    if y.size == 0:
        raise EmptyInput("no points to score")
    if p.ndim != 2 or p.shape[0] != y.size:
        raise InputError(f"probs must be ({y.size}, C), got {p.shape}")
    return y, p


def confusion_counts(y_true, y_pred, num_classes=None) -> ConfusionCounts:
    y = np.asarray(y_true, dtype=np.int64).reshape(-1)
    yhat = np.asarray(y_pred, dtype=np.int64).reshape(-1)
    if num_classes is None:
        num_classes = int(max(y.max(), yhat.max())) + 1
    table = _accel.contingency(y, yhat, num_classes, num_classes)
    tp = np.diag(table).astype(np.int64)
    fp = table.sum(axis=0) - tp
    fn = table.sum(axis=1) - tp
    tn = y.size - tp - fp - fn
    return ConfusionCounts(np.arange(num_classes), tp, fp, tn, fn)


def classification_metrics(y_true, probs) -> dict:
    """Accuracy plus precision/recall of the argmax prediction.

    Two classes: class 1 is the positive class. More classes: macro
    average over the classes present in either labels or predictions;
    a class never predicted has precision 0.
    """
    y, p = _labels_and_probs(y_true, probs)
    pred = np.argmax(p, axis=1)
    c = confusion_counts(y, pred, p.shape[1])
    accuracy = float(np.mean(pred == y))
    with np.errstate(invalid="ignore", divide="ignore"):
        prec = np.where(c.tp + c.fp > 0, c.tp / np.maximum(c.tp + c.fp, 1), 0.0)
        rec = np.where(c.tp + c.fn > 0, c.tp / np.maximum(c.tp + c.fn, 1), 0.0)
    if p.shape[1] == 2:
        return {"accuracy": accuracy, "precision": float(prec[1]), "recall": float(rec[1])}
    present = np.zeros(p.shape[1], dtype=bool)
    present[y] = True
    present[pred] = True
    return {"accuracy": accuracy, "precision": float(prec[present].mean()),
            "recall": float(rec[present].mean())}


def calibration_bins(y_true, probs, num_bins=10) -> CalibrationBins:
    y, p = _labels_and_probs(y_true, probs)
    if num_bins < 1:
        raise InputError("num_bins must be >= 1")
    conf = np.ascontiguousarray(p.max(axis=1))
    correct = (np.argmax(p, axis=1) == y).astype(np.float64)
    counts, sum_conf, sum_acc = _accel.calibration_bins(conf, correct, int(num_bins))
    denom = np.maximum(counts, 1)
    return CalibrationBins(np.linspace(0.0, 1.0, num_bins + 1), counts,
                           sum_conf / denom, sum_acc / denom)


def ece(y_true, probs, num_bins=10) -> float:
    """Expected calibration error over equal-width confidence bins.

    Bins are right-closed, ``(b/B, (b+1)/B]``, with confidence 0 in the first.
    """
    bins = calibration_bins(y_true, probs, num_bins)
    n = bins.counts.sum()
    return float(np.sum(bins.counts / n * np.abs(bins.accuracy - bins.mean_confidence)))


def rmse(y_true, y_pred) -> float:
    a = np.asarray(y_true, dtype=np.float64).reshape(-1)
    b = np.asarray(y_pred, dtype=np.float64).reshape(-1)
    if a.size == 0:
        raise EmptyInput("no points to score")
    if a.shape != b.shape:
        raise InputError("length mismatch")
    return float(np.sqrt(np.mean((a - b) ** 2)))


def _entropy(counts):
    counts = counts[counts > 0].astype(np.float64)
    total = counts.sum()
    return float(-np.sum(counts / total * np.log(counts / total)))


def _encode(labels):
    _, inv = np.unique(np.asarray(labels).reshape(-1), return_inverse=True)
    return inv.astype(np.int64)


def contingency_table(labels_true, labels_pred):
    a = _encode(labels_true)
    b = _encode(labels_pred)
    if a.size == 0:
        raise EmptyInput("no points to score")
    if a.size != b.size:
        raise InputError("length mismatch")
    return _accel.contingency(a, b, int(a.max()) + 1, int(b.max()) + 1)


def mutual_information(table) -> float:
    table = np.asarray(table, dtype=np.float64)
    n = table.sum()
    outer = np.outer(table.sum(axis=1), table.sum(axis=0))
    nz = table > 0
    return float(np.sum(table[nz] / n * np.log(n * table[nz] / outer[nz])))


def clustering_scores(labels_true, labels_pred) -> dict:
    """Adjusted mutual information (max-normalised), homogeneity, completeness."""
    table = contingency_table(labels_true, labels_pred)
    h_true = _entropy(table.sum(axis=1))
    h_pred = _entropy(table.sum(axis=0))
    mi = mutual_information(table)
    homogeneity = 1.0 if h_true == 0 else mi / h_true
    completeness = 1.0 if h_pred == 0 else mi / h_pred
    n_true, n_pred = table.shape
    n = int(table.sum())
    if (n_true == n_pred == 1) or (n_true == n_pred == n):
        ami = 1.0
    else:
        emi = _accel.expected_mutual_info(table)
        denom = max(h_true, h_pred) - emi
        # guard the 0/0 limit the same way for both signs
        if abs(denom) < np.finfo(np.float64).eps:
            denom = np.finfo(np.float64).eps if denom >= 0 else -np.finfo(np.float64).eps
        ami = (mi - emi) / denom
    return {"ami": float(ami),
            "homogeneity": float(min(max(homogeneity, 0.0), 1.0)),
            "completeness": float(min(max(completeness, 0.0), 1.0))}
