"""Leave-one-dataset-out evaluation of meta-learners as algorithm selectors."""

from __future__ import annotations

import csv
import enum
import io
import json
import logging
from collections import Counter
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Any, Sequence

import numpy as np
from scipy import stats
from threadpoolctl import threadpool_limits

from .errors import LengthMismatch, MalformedRanking, SchemaMismatch, TooFewDatasets
from .metadataset import GroundTruth, PerformanceTable, derive_seed, ground_truth
from .metalearn import DEFAULT_GRIDS, Family, fit_regressor, grid_search

log = logging.getLogger(__name__)


class Objective(enum.Enum):
    PerformancePrediction = "PerformancePrediction"
    RankingPrediction = "RankingPrediction"


def make_labels(gt: GroundTruth, objective: Objective) -> np.ndarray:
    """Label matrix ``[dataset, combo]``: mean score, or true rank (1 = best)."""
    if Objective(objective) is Objective.PerformancePrediction:
        return gt.labels.copy()
    return gt.ranks.astype(np.float64)


def predicted_order(values: np.ndarray, objective: Objective) -> np.ndarray:
    """Combo positions best-first; ties keep combo order."""
    values = np.asarray(values, dtype=np.float64)
    key = -values if Objective(objective) is Objective.PerformancePrediction else values
    return np.lexsort((np.arange(len(values)), key))


def average_ranks(x: np.ndarray) -> np.ndarray:
    """1-based ranks; tied values share the mean of their positions."""
    x = np.asarray(x, dtype=np.float64)
    order = np.argsort(x, kind="mergesort")
    xs = x[order]
    ranks = np.empty(len(x))
    i = 0
    while i < len(x):
        j = i
        while j + 1 < len(x) and xs[j + 1] == xs[i]:
            j += 1
        ranks[order[i : j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def spearman(a, b) -> tuple[float, float]:
    """Spearman correlation with average-rank ties and a t-approximation p-value.

    A constant input gives ``(0.0, 1.0)``.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise LengthMismatch(f"lengths {a.shape} and {b.shape} differ")
    n = len(a)
    if n < 3:
        raise LengthMismatch("need at least 3 values")
    ra, rb = average_ranks(a), average_ranks(b)
    da, db = ra - ra.mean(), rb - rb.mean()
    saa, sbb = float(da @ da), float(db @ db)
    if saa == 0 or sbb == 0:
        return 0.0, 1.0
    rho = float(da @ db) / np.sqrt(saa * sbb)
    rho = float(min(1.0, max(-1.0, rho)))
    if abs(rho) == 1.0:
        return rho, 0.0
    t = rho * np.sqrt((n - 2) / (1.0 - rho * rho))
    p = float(2.0 * stats.t.sf(abs(t), n - 2))
    return rho, min(1.0, p)


def selection_recall(predicted: Sequence, true: Sequence, n: int) -> float:
    """Share of the true top ``n`` found in the predicted top ``n``."""
    predicted, true = list(predicted), list(true)
    if len(set(predicted)) != len(predicted) or set(predicted) != set(true) or len(true) != len(predicted):
        raise MalformedRanking("rankings must be permutations of the same items")
    if not 1 <= n <= len(true):
        raise MalformedRanking(f"n={n} outside 1..{len(true)}")
    return len(set(predicted[:n]) & set(true[:n])) / n


@dataclass(frozen=True)
class LooRecord:
    held_out_dataset: str
    objective: Objective
    learner: str
    predicted_values: tuple[float, ...]
    predicted_ranking: tuple[str, ...]
    true_ranking: tuple[str, ...]
    spearman_rho: float
    spearman_p: float
    recall_at_1: float
    recall_at_3: float


def _predict_held_out(X, labels, d, family, grid, seed, inner_folds):
    train = np.array([i for i in range(len(X)) if i != d])
    preds = np.empty(labels.shape[1])
    with threadpool_limits(1):
        for c in range(labels.shape[1]):
            spec = grid_search(family, grid, X[train], labels[train, c], inner_folds, derive_seed(seed, d, c))
            model = fit_regressor(spec, X[train], labels[train, c])
            preds[c] = model.predict(X[d : d + 1])[0]
    return preds


def loo_evaluate(
    table: PerformanceTable,
    learner_family: Family,
    grid: Sequence[dict[str, Any]] | None = None,
    objective: Objective = Objective.RankingPrediction,
    seed: int = 0,
    inner_folds: int = 3,
    jobs: int = 1,
    gt: GroundTruth | None = None,
) -> list[LooRecord]:
    """One record per held-out dataset, in table order."""
    family = Family(learner_family)
    objective = Objective(objective)
    grid = DEFAULT_GRIDS[family] if grid is None else list(grid)
    if len(table.datasets) < 3:
        raise TooFewDatasets(f"{len(table.datasets)} datasets; leave-one-out needs at least 3")
    gt = gt or ground_truth(table)
    labels = make_labels(gt, objective)
    X = table.feature_matrix()
    names = [str(c) for c in table.combos]
    seed = derive_seed(seed, family.value, objective.value)
    args = [(X, labels, d, family, grid, seed, inner_folds) for d in range(len(table.datasets))]
    if jobs > 1:
        with ProcessPoolExecutor(jobs) as pool:
            all_preds = list(pool.map(_predict_held_out, *zip(*args)))
    else:
        all_preds = [_predict_held_out(*a) for a in args]
    records = []
    for d, preds in enumerate(all_preds):
        pred_rank = [names[i] for i in predicted_order(preds, objective)]
        true_rank = [names[i] for i in np.argsort(gt.ranks[d], kind="stable")]
        # predictions against the objective's own labels: a constant
        # predictor scores 0 and an exact one scores 1, ties included
        rho, p = spearman(preds, labels[d]) if len(names) >= 3 else (0.0, 1.0)
        records.append(
            LooRecord(
                table.datasets[d],
                objective,
                family.value,
                tuple(float(v) for v in preds),
                tuple(pred_rank),
                tuple(true_rank),
                rho,
                p,
                selection_recall(pred_rank, true_rank, 1),
                selection_recall(pred_rank, true_rank, min(3, len(names))),
            )
        )
        log.info("%s/%s held out %s: rho=%.3f r@1=%g", family.value, objective.value, table.datasets[d], rho, records[-1].recall_at_1)
    return records


# -- aggregation and reports ------------------------------------------------


def lower_median(values: Sequence[float]) -> float:
    v = sorted(values)
    return float(v[(len(v) - 1) // 2])


def _level(x: float, n: int) -> str:
    return str(Fraction(x).limit_denominator(n))


@dataclass
class Aggregate:
    learner: str
    objective: str
    median_rho: float
    mean_recall1: float
    mean_recall3: float
    rho_delta_vs_performance: float | None
    recall1_distribution: dict[str, int] = field(default_factory=dict)
    recall3_distribution: dict[str, int] = field(default_factory=dict)


@dataclass
class LooReport:
    records: list[LooRecord]
    aggregates: list[Aggregate]


def aggregate(records: Sequence[LooRecord]) -> LooReport:
    if not records:
        raise ValueError("no records to aggregate")
    groups: dict[tuple[str, str], list[LooRecord]] = {}
    for r in records:
        groups.setdefault((r.learner, Objective(r.objective).value), []).append(r)
    medians = {key: lower_median([r.spearman_rho for r in rs]) for key, rs in groups.items()}
    aggs = []
    for (learner, objective), rs in sorted(groups.items()):
        base = medians.get((learner, Objective.PerformancePrediction.value))
        delta = None if base is None else medians[(learner, objective)] - base
        r1 = Counter(_level(r.recall_at_1, 1) for r in rs)
        r3 = Counter(_level(r.recall_at_3, 3) for r in rs)
        aggs.append(
            Aggregate(
                learner,
                objective,
                medians[(learner, objective)],
                float(np.mean([r.recall_at_1 for r in rs])),
                float(np.mean([r.recall_at_3 for r in rs])),
                delta,
                {k: r1.get(k, 0) for k in ("0", "1")},
                {k: r3.get(k, 0) for k in ("0", "1/3", "2/3", "1")},
            )
        )
    return LooReport(list(records), aggs)


def filter_significant(records: Sequence[LooRecord], alpha: float = 0.05) -> list[LooRecord]:
    return [r for r in records if r.spearman_p < alpha]


RECORD_HEADER = ["dataset", "learner", "objective", "rho", "p", "recall1", "recall3", "predicted_ranking", "true_ranking"]
AGGREGATE_HEADER = ["learner", "objective", "median_rho", "mean_recall1", "mean_recall3", "rho_delta_vs_performance"]
DISTRIBUTION_HEADER = ["learner", "objective", "measure", "level", "count"]


def _f(x: float | None) -> str:
    return "" if x is None else repr(float(x))


def _record_rows(report: LooReport):
    for r in report.records:
        yield [
            r.held_out_dataset,
            r.learner,
            Objective(r.objective).value,
            _f(r.spearman_rho),
            _f(r.spearman_p),
            _f(r.recall_at_1),
            _f(r.recall_at_3),
            "|".join(r.predicted_ranking),
            "|".join(r.true_ranking),
        ]


def _aggregate_rows(report: LooReport):
    for a in report.aggregates:
        yield [a.learner, a.objective, _f(a.median_rho), _f(a.mean_recall1), _f(a.mean_recall3), _f(a.rho_delta_vs_performance)]


def _distribution_rows(report: LooReport):
    for a in report.aggregates:
        for measure, dist in (("recall1", a.recall1_distribution), ("recall3", a.recall3_distribution)):
            for level, count in dist.items():
                yield [a.learner, a.objective, measure, level, str(count)]


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def report_tables(report: LooReport) -> dict[str, list[dict[str, str]]]:
    """The three report tables as lists of string-valued rows."""
    return {
        "records": [dict(zip(RECORD_HEADER, r)) for r in _record_rows(report)],
        "aggregates": [dict(zip(AGGREGATE_HEADER, r)) for r in _aggregate_rows(report)],
        "distributions": [dict(zip(DISTRIBUTION_HEADER, r)) for r in _distribution_rows(report)],
    }


def emit_report(report: LooReport, path: str | Path, fmt: str = "csv") -> list[Path]:
    """Write ``records``, ``aggregates`` and ``distributions`` tables under directory ``path``."""
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    if fmt == "csv":
        out = []
        for name, header, rows in (
            ("records", RECORD_HEADER, _record_rows(report)),
            ("aggregates", AGGREGATE_HEADER, _aggregate_rows(report)),
            ("distributions", DISTRIBUTION_HEADER, _distribution_rows(report)),
        ):
            p = path / f"{name}.csv"
            p.write_text(_csv_text(header, rows), encoding="utf-8")
            out.append(p)
        return out
    if fmt == "json":
        p = path / "report.json"
        p.write_text(json.dumps(report_tables(report), indent=2) + "\n", encoding="utf-8")
        return [p]
    raise ValueError(f"unknown report format {fmt!r}")


def _parse_records(rows, where) -> list[LooRecord]:
    out = []
    for line, row in rows:
        try:
            d, learner, obj, rho, p, r1, r3, pred, true = row
            out.append(
                LooRecord(
                    d,
                    Objective(obj),
                    learner,
                    (),
                    tuple(pred.split("|")),
                    tuple(true.split("|")),
                    float(rho),
                    float(p),
                    float(r1),
                    float(r3),
                )
            )
        except (TypeError, ValueError) as exc:
            raise SchemaMismatch(f"{where}:{line}: {exc}") from None
    return out


def read_records(path: str | Path) -> list[LooRecord]:
    """Parse records from ``records.csv`` or ``report.json`` (ours or an external meta-model's)."""
    path = Path(path)
    if path.suffix == ".json":
        try:
            rows = json.loads(path.read_text(encoding="utf-8"))["records"]
            rows = [(i + 1, [r[h] for h in RECORD_HEADER]) for i, r in enumerate(rows)]
        except (KeyError, TypeError, json.JSONDecodeError) as exc:
            raise SchemaMismatch(f"{path}: not a report file ({exc})") from None
        return _parse_records(rows, path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        if next(reader, None) != RECORD_HEADER:
            raise SchemaMismatch(f"{path}:1: expected header {','.join(RECORD_HEADER)}")
        return _parse_records(((reader.line_num, row) for row in reader), path)
