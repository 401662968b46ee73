"""Implicit-feedback top-k recommenders with a shared fit/recommend contract.

All models score items from a binary user-item training matrix. Ranking
excludes a user's training items and breaks score ties by ascending item index.
"""

from __future__ import annotations

import enum
import logging
import time
from dataclasses import dataclass, field
from functools import total_ordering
from typing import Any

import numpy as np
import scipy.sparse as sp

from .errors import UnknownUser

log = logging.getLogger(__name__)

ALS_ALPHA = 40.0
# dense item-item inversion above this many items is not attempted
EASE_MAX_ITEMS = 20_000
_SCORE_CHUNK = 4_000_000


class Algorithm(enum.Enum):
    Random = 0
    Popularity = 1
    UserKNN = 2
    ItemKNN = 3
    ImplicitALS = 4
    EASE = 5


@total_ordering
@dataclass(frozen=True)
class AlgoComboId:
    algorithm: Algorithm
    config_index: int = 0

    def __post_init__(self):
        if self.config_index not in (0, 1):
            raise ValueError("config_index must be 0 or 1")
        if self.algorithm in (Algorithm.Random, Algorithm.Popularity) and self.config_index:
            raise ValueError(f"{self.algorithm.name} has a single configuration")

    def __lt__(self, other):
        return (self.algorithm.value, self.config_index) < (other.algorithm.value, other.config_index)

    def __str__(self):
        return f"{self.algorithm.name}-{self.config_index}"

    @classmethod
    def parse(cls, text: str) -> AlgoComboId:
        name, _, idx = text.rpartition("-")
        try:
            return cls(Algorithm[name], int(idx))
        except (KeyError, ValueError):
            raise ValueError(f"bad combo id {text!r}") from None


def default_zoo() -> list[tuple[AlgoComboId, dict[str, Any]]]:
    A = Algorithm
    return [
        (AlgoComboId(A.Random), {}),
        (AlgoComboId(A.Popularity), {}),
        (AlgoComboId(A.UserKNN, 0), {"neighbors": 20}),
        (AlgoComboId(A.UserKNN, 1), {"neighbors": 100}),
        (AlgoComboId(A.ItemKNN, 0), {"neighbors": 20}),
        (AlgoComboId(A.ItemKNN, 1), {"neighbors": 100}),
        (AlgoComboId(A.ImplicitALS, 0), {"factors": 32, "reg": 0.01, "epochs": 20}),
        (AlgoComboId(A.ImplicitALS, 1), {"factors": 128, "reg": 0.1, "epochs": 20}),
        (AlgoComboId(A.EASE, 0), {"reg": 10.0}),
        (AlgoComboId(A.EASE, 1), {"reg": 500.0}),
    ]


@dataclass(eq=False)
class FittedModel:
    """Base class: subclasses implement :meth:`score_users`."""

    combo: AlgoComboId
    train: sp.csr_matrix = field(repr=False)
    budget_exhausted: bool = False

    @property
    def n_items(self) -> int:
        return self.train.shape[1]

    def score_users(self, users: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def top_k(self, users: np.ndarray, k: int) -> np.ndarray:
        """Ranked unseen items for each user, ``-1``-padded to width ``k``."""
        users = np.asarray(users, dtype=np.int64)
        out = np.full((len(users), k), -1, dtype=np.int64)
        step = max(1, _SCORE_CHUNK // max(self.n_items, 1))
        for lo in range(0, len(users), step):
            batch = users[lo : lo + step]
            scores = np.asarray(self.score_users(batch), dtype=np.float64)
            seen = self.train[batch]
            rows = np.repeat(np.arange(len(batch)), np.diff(seen.indptr))
            scores[rows, seen.indices] = -np.inf
            n_unseen = self.n_items - np.diff(seen.indptr)
            order = np.argsort(-scores, axis=1, kind="stable")[:, :k]
            width = order.shape[1]
            keep = np.arange(width)[None, :] < n_unseen[:, None]
            out[lo : lo + len(batch), :width] = np.where(keep, order, -1)
        return out


def recommend(model: FittedModel, user: int, k: int, seen=None) -> list[int]:
    """Top-``k`` unseen items for ``user``.

    ``seen`` defaults to the user's training items; when given it must match them.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    if not 0 <= user < model.train.shape[0] or model.train.indptr[user + 1] == model.train.indptr[user]:
        raise UnknownUser(f"user {user} has no training interactions")
    if seen is not None:
        train_items = set(model.train.indices[model.train.indptr[user] : model.train.indptr[user + 1]].tolist())
        if set(seen) != train_items:
            raise ValueError("seen items differ from the model's training items")
    row = model.top_k(np.array([user]), k)[0]
    return row[row >= 0].tolist()


# -- models -----------------------------------------------------------------


@dataclass(eq=False)
class RandomModel(FittedModel):
    seed: int = 0

    def score_users(self, users):
        return np.stack([np.random.default_rng([self.seed, int(u)]).random(self.n_items) for u in users])


@dataclass(eq=False)
class PopularityModel(FittedModel):
    item_scores: np.ndarray = None

    def score_users(self, users):
        return np.broadcast_to(self.item_scores, (len(users), self.n_items)).copy()


@dataclass(eq=False)
class NeighborhoodModel(FittedModel):
    """Pruned cosine similarity ``sim``; ``user_based`` chooses the side."""

    sim: sp.csr_matrix = None
    user_based: bool = False

    def score_users(self, users):
        if self.user_based:
            # score(u, i) = sum over u's neighbours v of sim(u, v) * R[v, i]
            return np.asarray((self.sim[users] @ self.train).todense())
        # score(u, i) = sum over seen j of sim(i, j), sim rows already pruned to top-N
        return np.asarray((self.train[users] @ self.sim.T).todense())


@dataclass(eq=False)
class ALSModel(FittedModel):
    user_factors: np.ndarray = None
    item_factors: np.ndarray = None
    objective_trace: list = None

    def score_users(self, users):
        return self.user_factors[users] @ self.item_factors.T


@dataclass(eq=False)
class EASEModel(FittedModel):
    weights: np.ndarray = None

    def score_users(self, users):
        return np.asarray(self.train[users] @ self.weights)


# -- training ---------------------------------------------------------------


def cosine_topn(m: sp.csr_matrix, neighbors: int, deadline: float | None = None) -> tuple[sp.csr_matrix, bool]:
    """Row-row cosine similarity of binary ``m``, keeping each row's top ``neighbors``.

    Self-similarity is excluded; ties keep the lower column index. Returns the
    pruned matrix and whether ``deadline`` cut construction short (rows not yet
    processed then have no neighbours).
    """
    m = sp.csr_matrix(m, dtype=np.float64)
    m.data[:] = 1.0
    deg = np.diff(m.indptr).astype(np.float64)
    mT = sp.csr_matrix(m.T)
    n = m.shape[0]
    rows, cols, vals = [], [], []
    cut = False
    step = max(1, _SCORE_CHUNK // max(n, 1))
    for lo in range(0, n, step):
        if deadline is not None and lo and time.monotonic() > deadline:
            cut = True
            break
        hi = min(n, lo + step)
        # exact co-occurrence counts over sqrt(deg_a * deg_b): equal cosines tie exactly
        co = np.asarray((m[lo:hi] @ mT).todense())
        denom = np.sqrt(np.outer(deg[lo:hi], deg))
        block = np.divide(co, denom, out=np.zeros_like(co), where=denom > 0)
        block[np.arange(hi - lo), np.arange(lo, hi)] = 0.0
        kk = min(neighbors, n)
        order = np.argsort(-block, axis=1, kind="stable")[:, :kk]
        top = np.take_along_axis(block, order, axis=1)
        r = np.repeat(np.arange(lo, hi), kk)
        keep = top.ravel() > 0
        rows.append(r[keep])
        cols.append(order.ravel()[keep])
        vals.append(top.ravel()[keep])
    if rows:
        rows, cols, vals = map(np.concatenate, (rows, cols, vals))
    sim = sp.csr_matrix((vals, (rows, cols)), shape=(n, n))
    return sim, cut


def als_objective(train: sp.csr_matrix, X: np.ndarray, Y: np.ndarray, reg: float, alpha: float = ALS_ALPHA) -> float:
    """Weighted squared loss over every (user, item) cell plus L2 penalty."""
    coo = train.tocoo()
    pred = np.einsum("ij,ij->i", X[coo.row], Y[coo.col])
    # sum of pred^2 over all cells, then correct the observed cells
    total = float(np.sum((X.T @ X) * (Y.T @ Y)))
    total += float(np.sum((1.0 + alpha) * (1.0 - pred) ** 2 - pred**2))
    return total + reg * (float(np.sum(X * X)) + float(np.sum(Y * Y)))


def _als_half(R: sp.csr_matrix, X: np.ndarray, Y: np.ndarray, reg: float, alpha: float, cg_steps: int) -> np.ndarray:
    """Update rows of ``X`` given fixed ``Y`` by conjugate gradient on each row's normal equations.

    Row u solves ``(Y'Y + alpha Y' diag(R_u) Y + reg I) x = (1 + alpha) Y' R_u``.
    CG from the current iterate never increases the quadratic it solves.
    """
    R = sp.csr_matrix(R)
    rows = np.repeat(np.arange(R.shape[0]), np.diff(R.indptr))
    cols = R.indices
    YtY = Y.T @ Y + reg * np.eye(Y.shape[1])

    dense = R.shape[0] * R.shape[1] <= _SCORE_CHUNK

    def apply(P):
        if dense:
            vals = (P @ Y.T)[rows, cols]
        else:
            vals = np.einsum("ij,ij->i", P[rows], Y[cols])
        M = sp.csr_matrix((alpha * vals, R.indices, R.indptr), shape=R.shape)
        return P @ YtY + M @ Y

    b = (1.0 + alpha) * (R @ Y)
    X = X.copy()
    r = b - apply(X)
    p = r.copy()
    rs = np.einsum("ij,ij->i", r, r)
    for _ in range(cg_steps):
        Ap = apply(p)
        pAp = np.einsum("ij,ij->i", p, Ap)
        step = np.divide(rs, pAp, out=np.zeros_like(rs), where=pAp > 1e-300)
        X += step[:, None] * p
        r -= step[:, None] * Ap
        rs_new = np.einsum("ij,ij->i", r, r)
        beta = np.divide(rs_new, rs, out=np.zeros_like(rs), where=rs > 1e-300)
        p = r + beta[:, None] * p
        rs = rs_new
    return X


def fit_als(
    train: sp.csr_matrix,
    factors: int,
    reg: float,
    epochs: int,
    seed: int,
    deadline: float | None = None,
    alpha: float = ALS_ALPHA,
    cg_steps: int = 3,
    track_objective: bool = False,
):
    """Alternating updates; the clock is checked after every epoch."""
    rng = np.random.default_rng(seed)
    n_users, n_items = train.shape
    X = rng.normal(scale=0.01, size=(n_users, factors))
    Y = rng.normal(scale=0.01, size=(n_items, factors))
    trace = [als_objective(train, X, Y, reg, alpha)] if track_objective else None
    trainT = sp.csr_matrix(train.T)
    done = 0
    for _ in range(epochs):
        X = _als_half(train, X, Y, reg, alpha, cg_steps)
        Y = _als_half(trainT, Y, X, reg, alpha, cg_steps)
        done += 1
        if trace is not None:
            trace.append(als_objective(train, X, Y, reg, alpha))
        if deadline is not None and time.monotonic() > deadline:
            break
    return X, Y, done < epochs, trace


def fit_ease(train: sp.csr_matrix, reg: float) -> np.ndarray:
    G = np.asarray((train.T @ train).todense(), dtype=np.float64)
    G[np.diag_indices_from(G)] += reg
    P = np.linalg.inv(G)
    B = -P / np.diag(P)[None, :]
    B[np.diag_indices_from(B)] = 0.0
    return B


def fit(
    combo: AlgoComboId,
    train: sp.csr_matrix,
    budget: float,
    seed: int,
    hyperparameters: dict[str, Any] | None = None,
) -> FittedModel:
    """Train ``combo`` on the binary matrix ``train`` within ``budget`` seconds.

    Hyperparameters default to the zoo's entry for ``combo``. Running out of
    time is reported through ``budget_exhausted`` rather than raised.
    """
    if budget <= 0:
        raise ValueError("budget must be positive")
    if train.nnz == 0:
        raise ValueError("empty training matrix")
    if hyperparameters is None:
        hyperparameters = dict(default_zoo())[combo]
    train = sp.csr_matrix(train, dtype=np.float64)
    train.data[:] = 1.0
    deadline = time.monotonic() + budget
    algo = combo.algorithm
    hp = hyperparameters

    if algo is Algorithm.Random:
        return RandomModel(combo, train, seed=seed)
    if algo is Algorithm.Popularity:
        return PopularityModel(combo, train, item_scores=np.asarray(train.sum(axis=0)).ravel())
    if algo is Algorithm.ItemKNN:
        sim, cut = cosine_topn(sp.csr_matrix(train.T), hp["neighbors"], deadline)
        return NeighborhoodModel(combo, train, cut, sim=sim, user_based=False)
    if algo is Algorithm.UserKNN:
        sim, cut = cosine_topn(train, hp["neighbors"], deadline)
        return NeighborhoodModel(combo, train, cut, sim=sim, user_based=True)
    if algo is Algorithm.ImplicitALS:
        X, Y, cut, trace = fit_als(train, hp["factors"], hp["reg"], hp["epochs"], seed, deadline)
        return ALSModel(combo, train, cut, user_factors=X, item_factors=Y, objective_trace=trace)
    if algo is Algorithm.EASE:
        if train.shape[1] > EASE_MAX_ITEMS:
            log.warning("EASE skipped: %d items exceeds ceiling %d", train.shape[1], EASE_MAX_ITEMS)
            return EASEModel(combo, train, True, weights=np.zeros((train.shape[1],) * 2))
        return EASEModel(combo, train, weights=fit_ease(train, hp["reg"]))
    raise ValueError(f"unknown algorithm {algo}")
