"""Recognition metrics and a deterministic 2-D projection for inspection."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .errors import ParameterError


@dataclass
class MetricsReport:
    confusion: list[list[int]]
    war: float
    uar: float
    w_f1: float
    per_class_recall: list[float]

    def to_dict(self) -> dict:
        return asdict(self)


def confusion_matrix(predicted, truth, classes: int) -> np.ndarray:
    """Rows are true classes, columns predicted classes."""
    predicted = np.asarray(predicted, dtype=np.int64).ravel()
    truth = np.asarray(truth, dtype=np.int64).ravel()
    if predicted.size != truth.size:
        raise ParameterError(
            f"{predicted.size} predictions for {truth.size} ground-truth labels")
    for name, arr in (("predicted", predicted), ("truth", truth)):
        bad = np.flatnonzero((arr < 0) | (arr >= classes))
        if bad.size:
            raise ParameterError(
                f"{name}[{bad[0]}] = {arr[bad[0]]} outside [0, {classes})")
    cm = np.zeros((classes, classes), dtype=np.int64)
    np.add.at(cm, (truth, predicted), 1)
    return cm


def metrics(predicted, truth, classes: int) -> MetricsReport:
    """WAR (accuracy), UAR over supported classes and support-weighted F1."""
    cm = confusion_matrix(predicted, truth, classes)
    n = int(cm.sum())
    support = cm.sum(axis=1)
    predicted_count = cm.sum(axis=0)
    tp = np.diag(cm).astype(np.float64)
    recall = np.divide(tp, support, out=np.zeros(classes), where=support > 0)
    precision = np.divide(tp, predicted_count, out=np.zeros(classes),
                          where=predicted_count > 0)
    denom = precision + recall
    f1 = np.divide(2 * precision * recall, denom, out=np.zeros(classes), where=denom > 0)
    if n == 0:
        return MetricsReport(cm.tolist(), 0.0, 0.0, 0.0, recall.tolist())
    supported = support > 0
    war = float(tp.sum() / n)
    uar = float(recall[supported].mean())
    w_f1 = float((support / n * f1).sum())
    return MetricsReport(cm.tolist(), war, uar, w_f1, recall.tolist())


def pca_project(features, k: int = 2) -> np.ndarray:
    """Coordinates on the top-k principal directions of the centered data.

    Each direction is signed so that its largest-magnitude loading is
    positive, which makes the output independent of the SVD's sign choice.
    """
    X = np.asarray(features, dtype=np.float64)
    n, d = X.shape
    if n < k or d < k:
        raise ParameterError(f"pca_project needs at least {k} rows and columns, got {X.shape}")
    Xc = X - X.mean(axis=0)
    _, _, vt = np.linalg.svd(Xc, full_matrices=False)
    dirs = vt[:k]
    pivot = np.argmax(np.abs(dirs), axis=1)
    signs = np.sign(dirs[np.arange(k), pivot])
    signs[signs == 0] = 1.0
    return Xc @ (dirs * signs[:, None]).T
