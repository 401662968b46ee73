"""k-core pruning and per-user k-fold cross-validation plans."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .errors import InsufficientInteractions, SchemaMismatch
from .interactions import InteractionDataset, pairs_to_matrix, subset

N_FOLDS = 5


def k_core_prune(dataset: InteractionDataset, k: int = 5) -> InteractionDataset:
    """Return the k-core: the largest sub-dataset where every user and item has >= k interactions.

    The result may be empty.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    users, items = dataset.pairs[:, 0], dataset.pairs[:, 1]
    alive = np.ones(len(users), dtype=bool)
    while True:
        udeg = np.bincount(users[alive], minlength=dataset.n_users)
        ideg = np.bincount(items[alive], minlength=dataset.n_items)
        drop = alive & ((udeg[users] < k) | (ideg[items] < k))
        if not drop.any():
            break
        alive &= ~drop
    return subset(dataset, alive)


@dataclass(frozen=True, eq=False)
class FoldSplit:
    fold_index: int
    train: np.ndarray
    test: np.ndarray

    def train_matrix(self, n_users: int, n_items: int) -> sp.csr_matrix:
        return pairs_to_matrix(self.train, n_users, n_items)

    def test_matrix(self, n_users: int, n_items: int) -> sp.csr_matrix:
        return pairs_to_matrix(self.test, n_users, n_items)


@dataclass(frozen=True, eq=False)
class CvPlan:
    seed: int
    folds: tuple[FoldSplit, ...]
    n_users: int
    n_items: int

    def __eq__(self, other):
        if not isinstance(other, CvPlan):
            return NotImplemented
        return (
            self.seed == other.seed
            and len(self.folds) == len(other.folds)
            and all(
                np.array_equal(a.train, b.train) and np.array_equal(a.test, b.test)
                for a, b in zip(self.folds, other.folds)
            )
        )

    __hash__ = None


def user_rng(seed: int, user: int) -> np.random.Generator:
    # keyed on (seed, user) alone so other users never perturb this user's split
    return np.random.default_rng([seed & 0xFFFFFFFFFFFFFFFF, user])


def make_cv_plan(dataset: InteractionDataset, seed: int, n_folds: int = N_FOLDS) -> CvPlan:
    """Partition every user's interactions into ``n_folds`` test buckets.

    Each user's interactions are shuffled and dealt round-robin, starting at a
    random bucket, so per-user bucket sizes differ by at most one and every
    interaction is tested exactly once.
    """
    if n_folds != N_FOLDS:
        raise ValueError(f"n_folds is fixed at {N_FOLDS}")
    pairs = dataset.pairs
    order = np.lexsort((pairs[:, 1], pairs[:, 0]))
    sorted_pairs = pairs[order]
    bounds = np.searchsorted(sorted_pairs[:, 0], np.arange(dataset.n_users + 1))
    degrees = np.diff(bounds)
    if dataset.n_users and degrees.min() < n_folds:
        bad = int(np.argmin(degrees))
        raise InsufficientInteractions(
            f"user {dataset.user_tokens[bad]!r} has {degrees[bad]} interactions, need {n_folds}"
        )
    bucket = np.empty(len(sorted_pairs), dtype=np.int64)
    for u in range(dataset.n_users):
        lo, hi = bounds[u], bounds[u + 1]
        rng = user_rng(seed, u)
        perm = rng.permutation(hi - lo)
        start = rng.integers(n_folds)
        b = np.empty(hi - lo, dtype=np.int64)
        b[perm] = (np.arange(hi - lo) + start) % n_folds
        bucket[lo:hi] = b
    folds = tuple(
        FoldSplit(f, sorted_pairs[bucket != f], sorted_pairs[bucket == f]) for f in range(n_folds)
    )
    return CvPlan(seed, folds, dataset.n_users, dataset.n_items)


def save_plan(plan: CvPlan, dataset: InteractionDataset, path: str | Path) -> None:
    """Write ``fold,user,item,role`` rows using original tokens."""
    ut, it = dataset.user_tokens, dataset.item_tokens
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["fold", "user", "item", "role"])
        for fold in plan.folds:
            for role, arr in (("train", fold.train), ("test", fold.test)):
                for u, i in arr.tolist():
                    w.writerow([fold.fold_index, ut[u], it[i], role])


def load_plan(path: str | Path, dataset: InteractionDataset, seed: int) -> CvPlan:
    """Read a plan written by :func:`save_plan` against the dataset it was made for."""
    uidx, iidx = dataset.user_index, dataset.item_index
    parts: dict[tuple[int, str], list[tuple[int, int]]] = {}
    with Path(path).open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["fold", "user", "item", "role"]:
            raise SchemaMismatch(f"{path}:1: unexpected header {header!r}")
        for row in reader:
            try:
                fold, user, item, role = row
                key = (int(fold), role)
                pair = (uidx[user], iidx[item])
            except (ValueError, KeyError) as exc:
                raise SchemaMismatch(f"{path}:{reader.line_num}: bad row {row!r} ({exc})") from None
            parts.setdefault(key, []).append(pair)
    folds = []
    for f in range(N_FOLDS):
        if (f, "test") not in parts or (f, "train") not in parts:
            raise SchemaMismatch(f"{path}: fold {f} is missing")
        folds.append(
            FoldSplit(
                f,
                np.array(parts[(f, "train")], dtype=np.int64),
                np.array(parts[(f, "test")], dtype=np.int64),
            )
        )
    return CvPlan(seed, tuple(folds), dataset.n_users, dataset.n_items)
