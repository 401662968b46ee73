"""Regression meta-learners over meta-feature vectors."""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from ..errors import DimensionMismatch, NonFiniteInput
from ..metafeatures import COUNT_COLUMNS, FEATURE_NAMES
from . import trees


class Family(enum.Enum):
    LinearRegression = "LinearRegression"
    KnnRegressor = "KnnRegressor"
    RandomForest = "RandomForest"
    GradientBoostedTrees = "GradientBoostedTrees"


DEFAULTS: dict[Family, dict[str, Any]] = {
    Family.LinearRegression: {"ridge": 1e-8},
    Family.KnnRegressor: {"neighbors": 5, "weighting": "uniform"},
    Family.RandomForest: {"trees": 100, "max_depth": None, "max_features": "sqrt"},
    Family.GradientBoostedTrees: {"trees": 100, "max_depth": 3, "learning_rate": 0.1, "subsample": 1.0},
}


def _validate(family: Family, hp: dict[str, Any]) -> None:
    unknown = set(hp) - set(DEFAULTS[family])
    if unknown:
        raise ValueError(f"{family.value}: unknown hyperparameters {sorted(unknown)}")
    if family is Family.LinearRegression:
        if not hp["ridge"] >= 0:
            raise ValueError("ridge must be >= 0")
    elif family is Family.KnnRegressor:
        if int(hp["neighbors"]) < 1:
            raise ValueError("neighbors must be >= 1")
        if hp["weighting"] not in ("uniform", "inverse-distance"):
            raise ValueError("weighting must be 'uniform' or 'inverse-distance'")
    elif family is Family.RandomForest:
        if int(hp["trees"]) < 1:
            raise ValueError("trees must be >= 1")
        if hp["max_depth"] is not None and int(hp["max_depth"]) < 1:
            raise ValueError("max_depth must be >= 1 or None")
        if hp["max_features"] not in ("sqrt", "all"):
            raise ValueError("max_features must be 'sqrt' or 'all'")
    elif family is Family.GradientBoostedTrees:
        if int(hp["trees"]) < 1:
            raise ValueError("trees must be >= 1")
        # depth 0 (a constant stage) is allowed for boosting
        if int(hp["max_depth"]) < 0:
            raise ValueError("max_depth must be >= 0")
        if not 0 < hp["learning_rate"] <= 1:
            raise ValueError("learning_rate must be in (0, 1]")
        if not 0 < hp["subsample"] <= 1:
            raise ValueError("subsample must be in (0, 1]")


@dataclass(frozen=True)
class RegressorSpec:
    family: Family
    hyperparameters: dict[str, Any] = field(default_factory=dict)
    seed: int = 0

    def __post_init__(self):
        family = Family(self.family)
        hp = {**DEFAULTS[family], **self.hyperparameters}
        _validate(family, hp)
        object.__setattr__(self, "family", family)
        object.__setattr__(self, "hyperparameters", hp)

    def to_json(self) -> str:
        return json.dumps(
            {"family": self.family.value, "hyperparameters": self.hyperparameters, "seed": self.seed},
            sort_keys=True,
        )

    @classmethod
    def from_json(cls, text: str) -> RegressorSpec:
        d = json.loads(text)
        return cls(Family(d["family"]), d.get("hyperparameters", {}), d.get("seed", 0))


def transform(X: np.ndarray) -> np.ndarray:
    """log1p on the count columns; other columns pass through."""
    X = np.array(X, dtype=np.float64, copy=True)
    X[:, COUNT_COLUMNS] = np.log1p(X[:, COUNT_COLUMNS])
    return X


def _as_matrix(X) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[None, :]
    if X.ndim != 2 or X.shape[1] != len(FEATURE_NAMES):
        raise DimensionMismatch(f"expected rows of {len(FEATURE_NAMES)} meta-features, got shape {X.shape}")
    return X


@dataclass(frozen=True, eq=False)
class TrainedRegressor:
    spec: RegressorSpec
    shift: np.ndarray
    scale: np.ndarray
    state: dict[str, Any] = field(repr=False)

    def scaled(self, X) -> np.ndarray:
        X = _as_matrix(X)
        if not np.isfinite(X).all():
            raise NonFiniteInput("non-finite meta-feature")
        Z = (transform(X) - self.shift) / self.scale
        if not np.isfinite(Z).all():
            raise NonFiniteInput("meta-features outside the transform's domain")
        return Z

    def predict(self, X) -> np.ndarray:
        Z = self.scaled(X)
        fam, s = self.spec.family, self.state
        if fam is Family.LinearRegression:
            return Z @ s["coef"] + s["intercept"]
        if fam is Family.KnnRegressor:
            return _knn_predict(s["Z"], s["y"], Z, self.spec.hyperparameters)
        if fam is Family.RandomForest:
            return trees.predict_ensemble(*s["nodes"], Z).mean(axis=0)
        return s["init"] + s["learning_rate"] * trees.predict_ensemble(*s["nodes"], Z).sum(axis=0)


def _knn_predict(Ztr: np.ndarray, ytr: np.ndarray, Z: np.ndarray, hp: dict) -> np.ndarray:
    k = min(int(hp["neighbors"]), len(ytr))
    out = np.empty(len(Z))
    pos = np.arange(len(ytr))
    for r, z in enumerate(Z):
        d = np.sqrt(((Ztr - z) ** 2).sum(axis=1))
        near = np.lexsort((pos, d))[:k]
        if hp["weighting"] == "uniform":
            out[r] = ytr[near].mean()
        else:
            dn = d[near]
            exact = dn == 0
            if exact.any():
                out[r] = ytr[near][exact].mean()
            else:
                w = 1.0 / dn
                out[r] = (w * ytr[near]).sum() / w.sum()
    return out


def canonical_order(X: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Row order sorted by (features..., label) so fits ignore input row order."""
    return np.lexsort((y, *X.T[::-1]))


def fit_regressor(spec: RegressorSpec, X, y) -> TrainedRegressor:
    X = _as_matrix(X)
    y = np.asarray(y, dtype=np.float64).ravel()
    if len(X) != len(y):
        raise DimensionMismatch(f"{len(X)} feature rows but {len(y)} labels")
    if len(y) < 2:
        raise DimensionMismatch("need at least 2 training rows")
    if not (np.isfinite(X).all() and np.isfinite(y).all()):
        raise NonFiniteInput("non-finite training data")
    order = canonical_order(X, y)
    X, y = X[order], y[order]
    T = transform(X)
    if not np.isfinite(T).all():
        raise NonFiniteInput("meta-features outside the transform's domain")
    shift = T.mean(axis=0)
    scale = T.std(axis=0)
    scale[scale == 0] = 1.0
    Z = (T - shift) / scale
    hp = spec.hyperparameters
    rng = np.random.default_rng(spec.seed)
    fam = spec.family
    n, p = Z.shape

    if fam is Family.LinearRegression:
        ym = y.mean()
        A = Z.T @ Z + hp["ridge"] * np.eye(p)
        coef = np.linalg.solve(A, Z.T @ (y - ym))
        state = {"coef": coef, "intercept": ym}
    elif fam is Family.KnnRegressor:
        state = {"Z": Z, "y": y}
    elif fam is Family.RandomForest:
        n_trees = int(hp["trees"])
        depth = -1 if hp["max_depth"] is None else int(hp["max_depth"])
        n_sub = p if hp["max_features"] == "all" else max(1, int(math.sqrt(p)))
        draws = rng.integers(0, n, (n_trees, n)) + n * np.arange(n_trees)[:, None]
        weights = np.bincount(draws.ravel(), minlength=n_trees * n).reshape(n_trees, n).astype(np.float64)
        max_nodes = 2 * n
        keys = rng.random((n_trees, max_nodes, p)) if n_sub < p else np.zeros((n_trees, 1, 1))
        nodes = trees.empty_nodes(n_trees, max_nodes)
        trees.build_forest(Z, y, weights, depth, n_sub, keys, *nodes)
        state = {"nodes": nodes}
    else:
        n_trees = int(hp["trees"])
        m = n if hp["subsample"] >= 1 else max(1, int(round(hp["subsample"] * n)))
        masks = np.zeros((n_trees, n))
        chosen = np.argsort(rng.random((n_trees, n)), axis=1)[:, :m]
        np.put_along_axis(masks, chosen, 1.0, axis=1)
        init = float(y.mean())
        nodes = trees.empty_nodes(n_trees, 2 * n)
        trees.build_boosting(Z, y, masks, int(hp["max_depth"]), float(hp["learning_rate"]), init, *nodes)
        state = {"nodes": nodes, "init": init, "learning_rate": float(hp["learning_rate"])}
    return TrainedRegressor(spec, shift, scale, state)


def predict(model: TrainedRegressor, x) -> float | np.ndarray:
    """Predict one meta-feature vector (returns a float) or a matrix of them."""
    single = np.ndim(x) == 1
    out = model.predict(x)
    return float(out[0]) if single else out
