"""Classification metrics and cross-seed summaries."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.stats import rankdata

log = logging.getLogger(__name__)

CI_Z = 1.96


class UndefinedMetricError(ValueError):
    pass


class InsufficientDataError(ValueError):
    pass


def auroc_binary(scores, labels) -> float:
    """Probability a random positive outscores a random negative (ties 1/2)."""
    s = np.asarray(scores, dtype=np.float64).reshape(-1)
    y = np.asarray(labels).reshape(-1).astype(bool)
    n_pos = int(y.sum())
    n_neg = y.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise UndefinedMetricError("AUROC needs both positive and negative labels")
    ranks = rankdata(s)  # midranks
    u = ranks[y].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def _per_class(scores, labels, fn) -> float:
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels).astype(np.int64)
    if scores.ndim == 1:
        return fn(scores, labels == 1)
    present = np.unique(labels)
    if present.size < 2:
        raise UndefinedMetricError("need at least two classes present in the labels")
    skipped = sorted(set(range(scores.shape[1])) - set(present.tolist()))
    if skipped:
        log.debug("classes %s absent from labels; skipped in macro average", skipped)
    return float(np.mean([fn(scores[:, k], labels == k) for k in present]))


def auroc(scores, labels) -> float:
    """Binary AUROC for 1-D scores, macro one-vs-rest for ``n x c`` scores."""
    return _per_class(scores, labels, auroc_binary)


def auroc_multiclass(scores, labels) -> float:
    return _per_class(np.asarray(scores, dtype=np.float64).reshape(len(labels), -1), labels, auroc_binary)


def average_precision(scores, labels) -> float:
    """Step-wise average precision, one step per distinct score threshold."""
    s = np.asarray(scores, dtype=np.float64).reshape(-1)
    y = np.asarray(labels).reshape(-1).astype(bool)
    n_pos = int(y.sum())
    if n_pos == 0:
        raise UndefinedMetricError("AUPRC needs at least one positive label")
    order = np.argsort(-s, kind="mergesort")
    s, y = s[order], y[order]
    last = np.r_[np.flatnonzero(np.diff(s)), s.size - 1]
    tp = np.cumsum(y)[last]
    precision = tp / (last + 1.0)
    recall_gain = np.diff(np.r_[0, tp]) / n_pos
    return float(np.sum(precision * recall_gain))


def auprc(scores, labels) -> float:
    return _per_class(scores, labels, average_precision)


def accuracy(pred, labels) -> float:
    pred = np.asarray(pred)
    labels = np.asarray(labels)
    return float(np.mean(pred == labels))


def balanced_accuracy(pred, labels) -> float:
    """Mean recall over the classes present in ``labels``."""
    pred = np.asarray(pred)
    labels = np.asarray(labels)
    return float(np.mean([np.mean(pred[labels == k] == k) for k in np.unique(labels)]))


def predicted_labels(scores) -> np.ndarray:
    scores = np.asarray(scores)
    if scores.ndim == 1:
        return (scores >= 0.5).astype(np.int64)
    return scores.argmax(axis=1)


METRICS = {
    "auroc": lambda s, y: auroc(s, y),
    "auprc": lambda s, y: auprc(s, y),
    "accuracy": lambda s, y: accuracy(predicted_labels(s), y),
    "balanced_accuracy": lambda s, y: balanced_accuracy(predicted_labels(s), y),
}


def evaluate(scores, labels, names: Sequence[str]) -> dict[str, float]:
    return {n: METRICS[n](scores, labels) for n in names}


@dataclass(frozen=True)
class SeedSummary:
    metric: str
    values: tuple[float, ...]
    mean: float
    std: float
    ci95: float

    @property
    def n(self) -> int:
        return len(self.values)

    def format(self, scale: float = 1.0, digits: int = 2) -> str:
        return (f"{self.mean * scale:.{digits}f} ± {self.std * scale:.{digits}f} "
                f"({self.ci95 * scale:.{digits}f})")


def ci95(std: float, n: int) -> float:
    return CI_Z * std / math.sqrt(n)


def summarize_seeds(values: Sequence[float], metric: str = "") -> SeedSummary:
    """Mean, sample std (n-1) and the normal-approximation 95% half-width."""
    vals = tuple(float(v) for v in values)
    if len(vals) < 2:
        raise InsufficientDataError(f"need at least 2 values to summarize, got {len(vals)}")
    arr = np.sort(np.asarray(vals))  # order-independent reduction
    m = float(arr.mean())
    sd = float(arr.std(ddof=1))
    return SeedSummary(metric, vals, m, sd, ci95(sd, len(vals)))
