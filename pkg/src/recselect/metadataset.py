"""Ground-truth performance tables: every (dataset, combo, fold) run, persisted as CSV."""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Sequence

import numpy as np
from threadpoolctl import threadpool_limits

from . import __version__
from .algos import AlgoComboId, default_zoo, fit
from .errors import DatasetTooSmall, IncompleteGrid, SchemaMismatch
from .interactions import InteractionDataset
from .metafeatures import MetaFeatureVector, extract, load_features, save_features
from .metrics import THRESHOLDS, Metric, evaluate_fold
from .preprocess import N_FOLDS, CvPlan, k_core_prune, make_cv_plan

log = logging.getLogger(__name__)

METRICS = (Metric.NDCG, Metric.Recall, Metric.HitRate)
MIN_INTERACTIONS = 50
DEFAULT_BUDGET = 60.0
PERFORMANCE_HEADER = ["dataset", "combo", "metric", "k", "fold", "score"]


def derive_seed(*parts: Any) -> int:
    """Stable 63-bit seed from a root seed and arbitrary keys (strings hashed with crc32)."""
    words = [zlib.crc32(p.encode()) if isinstance(p, str) else int(p) & 0xFFFFFFFF for p in parts]
    return int(np.random.SeedSequence(words).generate_state(2, np.uint32).view(np.uint64)[0] >> np.uint64(1))


@dataclass(frozen=True, eq=False)
class PreparedDataset:
    name: str
    dataset: InteractionDataset
    plan: CvPlan
    features: MetaFeatureVector


def prepare(name: str, dataset: InteractionDataset, seed: int, core_k: int = 5) -> PreparedDataset:
    """Prune, split and describe one dataset; raises DatasetTooSmall if too little survives."""
    pruned = k_core_prune(dataset, core_k)
    if pruned.n_interactions < MIN_INTERACTIONS:
        raise DatasetTooSmall(
            f"dataset {name!r}: {pruned.n_interactions} interactions after {core_k}-core pruning"
        )
    plan = make_cv_plan(pruned, derive_seed(seed, name))
    return PreparedDataset(name, pruned, plan, extract(pruned))


@dataclass(eq=False)
class PerformanceTable:
    """Scores indexed ``[dataset, combo, metric, k, fold]``."""

    datasets: list[str]
    combos: list[AlgoComboId]
    scores: np.ndarray = field(repr=False)
    meta_features: dict[str, MetaFeatureVector] = field(repr=False)
    fingerprint: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        expected = (len(self.datasets), len(self.combos), len(METRICS), len(THRESHOLDS), N_FOLDS)
        if self.scores.shape != expected:
            raise IncompleteGrid(f"score array shape {self.scores.shape}, expected {expected}")

    def score(self, dataset: str, combo: AlgoComboId, metric: Metric, k: int, fold: int) -> float:
        return float(
            self.scores[
                self.datasets.index(dataset),
                self.combos.index(combo),
                METRICS.index(metric),
                THRESHOLDS.index(k),
                fold,
            ]
        )

    def feature_matrix(self) -> np.ndarray:
        return np.array([self.meta_features[d] for d in self.datasets], dtype=np.float64)


def zoo_hash(zoo) -> str:
    payload = json.dumps([[str(c), hp] for c, hp in zoo], sort_keys=True)
    return hashlib.sha256(payload.encode()).hexdigest()[:16]


def _run_combo(prepared: PreparedDataset, combo: AlgoComboId, hp: dict, budget: float, seed: int) -> np.ndarray:
    out = np.empty((len(METRICS), len(THRESHOLDS), N_FOLDS))
    ds = prepared.dataset
    with threadpool_limits(1):
        for split in prepared.plan.folds:
            train = split.train_matrix(ds.n_users, ds.n_items)
            job_seed = derive_seed(seed, prepared.name, combo.algorithm.value, combo.config_index, split.fold_index)
            model = fit(combo, train, budget, job_seed, hp)
            if model.budget_exhausted:
                log.warning("%s/%s fold %d: budget exhausted", prepared.name, combo, split.fold_index)
            for r in evaluate_fold(model, split, THRESHOLDS):
                out[METRICS.index(r.metric), THRESHOLDS.index(r.k), split.fold_index] = r.value
            log.info("fit job done: dataset=%s combo=%s fold=%d", prepared.name, combo, split.fold_index)
    return out


def build_prepared(
    prepared: Sequence[PreparedDataset],
    zoo=None,
    budget: float = DEFAULT_BUDGET,
    seed: int = 0,
    jobs: int = 1,
) -> PerformanceTable:
    """Fill the complete score grid for already pruned and split datasets."""
    zoo = sorted(zoo or default_zoo(), key=lambda e: e[0])
    names = [p.name for p in prepared]
    if len(set(names)) != len(names):
        raise ValueError("dataset names must be unique")
    scores = np.empty((len(prepared), len(zoo), len(METRICS), len(THRESHOLDS), N_FOLDS))
    tasks = [(d, c) for d in range(len(prepared)) for c in range(len(zoo))]
    log.info("building meta-dataset: %d fit jobs", len(tasks) * N_FOLDS)

    def args(task):
        d, c = task
        return prepared[d], zoo[c][0], zoo[c][1], budget, seed

    if jobs > 1:
        with ProcessPoolExecutor(jobs) as pool:
            futures = {pool.submit(_run_combo, *args(t)): t for t in tasks}
            for fut, (d, c) in futures.items():
                scores[d, c] = fut.result()
    else:
        for d, c in tasks:
            scores[d, c] = _run_combo(*args((d, c)))
    return PerformanceTable(
        names,
        [c for c, _ in zoo],
        scores,
        {p.name: p.features for p in prepared},
        {"seed": seed, "budget": budget, "zoo_hash": zoo_hash(zoo)},
    )


def build(
    corpus: Sequence[tuple[str, InteractionDataset]],
    zoo=None,
    budget: float = DEFAULT_BUDGET,
    seed: int = 0,
    jobs: int = 1,
    core_k: int = 5,
) -> tuple[PerformanceTable, list[str]]:
    """Prune, split, fit and evaluate a corpus.

    Datasets too small after pruning are skipped with a warning; their names
    are returned alongside the table.
    """
    prepared, excluded = [], []
    for name, ds in corpus:
        try:
            prepared.append(prepare(name, ds, seed, core_k))
        except DatasetTooSmall as exc:
            log.warning("excluded: %s", exc)
            excluded.append(name)
    return build_prepared(prepared, zoo, budget, seed, jobs), excluded


@dataclass(frozen=True, eq=False)
class GroundTruth:
    datasets: list[str]
    combos: list[AlgoComboId]
    labels: np.ndarray
    ranks: np.ndarray


def rank_descending(values: np.ndarray) -> np.ndarray:
    """1-based ranks, highest value first, exact ties by position."""
    values = np.asarray(values, dtype=np.float64)
    order = np.lexsort((np.arange(len(values)), -values))
    ranks = np.empty(len(values), dtype=np.int64)
    ranks[order] = np.arange(1, len(values) + 1)
    return ranks


def ground_truth(table: PerformanceTable, metric: Metric = Metric.NDCG, k: int = 10) -> GroundTruth:
    cells = table.scores[:, :, METRICS.index(metric), THRESHOLDS.index(k), :]
    # sorted before summing so the mean is bit-identical under fold reordering
    labels = np.sort(cells, axis=2).mean(axis=2)
    ranks = np.array([rank_descending(row) for row in labels]).reshape(labels.shape)
    return GroundTruth(list(table.datasets), list(table.combos), labels, ranks)


# -- persistence --------------------------------------------------------------


def _fmt(x: float) -> str:
    return format(float(x), ".12g")


def save(table: PerformanceTable, path: str | Path, zoo=None, extra: dict | None = None) -> None:
    """Write ``performance.csv``, ``metafeatures.csv`` and ``manifest.json`` under ``path``."""
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    with (path / "performance.csv").open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(PERFORMANCE_HEADER)
        for d, name in enumerate(table.datasets):
            for c, combo in enumerate(table.combos):
                for m, metric in enumerate(METRICS):
                    for t, k in enumerate(THRESHOLDS):
                        for f in range(N_FOLDS):
                            w.writerow([name, combo, metric.value, k, f, _fmt(table.scores[d, c, m, t, f])])
    save_features({d: table.meta_features[d] for d in table.datasets}, path / "metafeatures.csv")
    manifest = {
        "tool": "recselect",
        "version": __version__,
        **table.fingerprint,
        "datasets": list(table.datasets),
        "combos": [str(c) for c in table.combos],
    }
    if zoo is not None:
        manifest["zoo"] = [{"combo": str(c), "hyperparameters": hp} for c, hp in sorted(zoo, key=lambda e: e[0])]
    if extra:
        manifest.update(extra)
    (path / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def load(path: str | Path) -> PerformanceTable:
    path = Path(path)
    perf = path / "performance.csv" if path.is_dir() else path
    cells: dict[tuple, float] = {}
    datasets: list[str] = []
    combos: list[AlgoComboId] = []
    with perf.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        if next(reader, None) != PERFORMANCE_HEADER:
            raise SchemaMismatch(f"{perf}:1: expected header {','.join(PERFORMANCE_HEADER)}")
        for row in reader:
            where = f"{perf}:{reader.line_num}"
            if len(row) != len(PERFORMANCE_HEADER):
                raise SchemaMismatch(f"{where}: expected {len(PERFORMANCE_HEADER)} fields")
            name, combo_s, metric_s, k_s, fold_s, score_s = row
            try:
                combo = AlgoComboId.parse(combo_s)
                metric = Metric(metric_s)
                k, fold, score = int(k_s), int(fold_s), float(score_s)
            except ValueError as exc:
                raise SchemaMismatch(f"{where}: {exc}") from None
            if k not in THRESHOLDS or not 0 <= fold < N_FOLDS:
                raise SchemaMismatch(f"{where}: k={k} fold={fold} outside the grid")
            if not 0.0 <= score <= 1.0:
                raise SchemaMismatch(f"{where}: score {score} outside [0, 1]")
            key = (name, combo, metric, k, fold)
            if key in cells:
                raise SchemaMismatch(f"{where}: duplicate cell")
            cells[key] = score
            if name not in datasets:
                datasets.append(name)
            if combo not in combos:
                combos.append(combo)
    scores = np.full((len(datasets), len(combos), len(METRICS), len(THRESHOLDS), N_FOLDS), np.nan)
    di = {n: i for i, n in enumerate(datasets)}
    ci = {c: i for i, c in enumerate(combos)}
    for (name, combo, metric, k, fold), v in cells.items():
        scores[di[name], ci[combo], METRICS.index(metric), THRESHOLDS.index(k), fold] = v
    if np.isnan(scores).any():
        d, c, m, t, f = np.argwhere(np.isnan(scores))[0]
        raise IncompleteGrid(
            f"{perf}: missing cell dataset={datasets[d]} combo={combos[c]} "
            f"metric={METRICS[m].value} k={THRESHOLDS[t]} fold={f}"
        )
    feats_path = perf.parent / "metafeatures.csv"
    features = load_features(feats_path) if feats_path.exists() else {}
    missing = [d for d in datasets if d not in features]
    if missing:
        raise IncompleteGrid(f"{feats_path}: no meta-features for {missing}")
    fingerprint = {}
    manifest = perf.parent / "manifest.json"
    if manifest.exists():
        m = json.loads(manifest.read_text())
        fingerprint = {k: m[k] for k in ("seed", "budget", "zoo_hash") if k in m}
    return PerformanceTable(datasets, combos, scores, {d: features[d] for d in datasets}, fingerprint)
