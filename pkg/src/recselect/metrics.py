"""Binary-relevance top-k metrics: nDCG, Recall and Hit Rate."""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
import scipy.sparse as sp

from .errors import EmptyRelevantSet

THRESHOLDS = (1, 3, 5, 10, 20)


class Metric(enum.Enum):
    NDCG = "NDCG"
    Recall = "Recall"
    HitRate = "HitRate"


@dataclass(frozen=True)
class MetricResult:
    metric: Metric
    k: int
    value: float


def _check(relevant) -> set:
    relevant = set(relevant)
    if not relevant:
        raise EmptyRelevantSet("relevant set is empty")
    return relevant


def ndcg_at_k(ranked: Sequence, relevant: Iterable, k: int) -> float:
    relevant = _check(relevant)
    dcg = sum(1.0 / np.log2(i + 2) for i, x in enumerate(ranked[:k]) if x in relevant)
    idcg = sum(1.0 / np.log2(i + 2) for i in range(min(k, len(relevant))))
    return float(dcg / idcg)


def recall_at_k(ranked: Sequence, relevant: Iterable, k: int) -> float:
    relevant = _check(relevant)
    return len(relevant.intersection(ranked[:k])) / len(relevant)


def hitrate_at_k(ranked: Sequence, relevant: Iterable, k: int) -> float:
    relevant = _check(relevant)
    return 1.0 if relevant.intersection(ranked[:k]) else 0.0


def batch_metrics(top: np.ndarray, test: sp.csr_matrix, users: np.ndarray, thresholds=THRESHOLDS) -> list[MetricResult]:
    """Mean metric values over ``users`` given their ``-1``-padded ranked lists ``top``.

    Each user counts once regardless of how many test items it has.
    """
    test = sp.csr_matrix(test)
    width = top.shape[1]
    n_rel = np.diff(test.indptr)[users]
    # membership lookup of each ranked item in the user's test row
    hits = np.zeros(top.shape, dtype=bool)
    sub = test[users]
    for r in range(len(users)):
        row = sub.indices[sub.indptr[r] : sub.indptr[r + 1]]
        hits[r] = np.isin(top[r], row) & (top[r] >= 0)
    discount = 1.0 / np.log2(np.arange(width) + 2.0)
    gains = np.cumsum(hits * discount, axis=1)
    ideal = np.cumsum(discount)
    counts = np.cumsum(hits, axis=1)
    out = []
    for k in thresholds:
        kk = min(k, width)
        idcg = ideal[np.minimum(k, n_rel) - 1]
        out.append(MetricResult(Metric.NDCG, k, float(np.mean(gains[:, kk - 1] / idcg))))
        out.append(MetricResult(Metric.Recall, k, float(np.mean(counts[:, kk - 1] / n_rel))))
        out.append(MetricResult(Metric.HitRate, k, float(np.mean(counts[:, kk - 1] > 0))))
    return out


def evaluate_fold(model, split, thresholds=THRESHOLDS) -> list[MetricResult]:
    """Evaluate ``model`` on ``split.test``; users without test items are skipped."""
    n_users, n_items = model.train.shape
    test = split.test_matrix(n_users, n_items)
    users = np.flatnonzero(np.diff(test.indptr))
    top = model.top_k(users, max(thresholds))
    return batch_metrics(top, test, users, thresholds)
