"""Grid search by inner k-fold cross-validated RMSE."""

from __future__ import annotations

import itertools
from typing import Any, Sequence

import numpy as np

from ..errors import DimensionMismatch, EmptyGrid
from .models import Family, RegressorSpec, _as_matrix, canonical_order, fit_regressor


def _product(**axes) -> list[dict[str, Any]]:
    keys = list(axes)
    return [dict(zip(keys, vals)) for vals in itertools.product(*axes.values())]


DEFAULT_GRIDS: dict[Family, list[dict[str, Any]]] = {
    Family.LinearRegression: _product(ridge=[1e-8, 1e-2, 1.0]),
    Family.KnnRegressor: _product(neighbors=[1, 3, 5, 7], weighting=["uniform", "inverse-distance"]),
    Family.RandomForest: _product(trees=[100, 300], max_depth=[4, 8, None], max_features=["sqrt", "all"]),
    Family.GradientBoostedTrees: _product(
        trees=[100, 300], max_depth=[2, 3], learning_rate=[0.05, 0.1], subsample=[0.8, 1.0]
    ),
}


def cv_rmse(spec: RegressorSpec, X: np.ndarray, y: np.ndarray, folds: list[np.ndarray]) -> float:
    errs = []
    all_rows = np.arange(len(y))
    for val in folds:
        train = np.setdiff1d(all_rows, val)
        model = fit_regressor(spec, X[train], y[train])
        resid = model.predict(X[val]) - y[val]
        errs.append(np.sqrt(np.mean(resid**2)))
    return float(np.mean(errs))


def grid_search(
    family: Family,
    grid: Sequence[dict[str, Any]],
    X,
    y,
    inner_folds: int = 3,
    seed: int = 0,
) -> RegressorSpec:
    """Return the grid point with the lowest mean inner-CV RMSE (first one on ties)."""
    family = Family(family)
    if not grid:
        raise EmptyGrid(f"empty grid for {family.value}")
    specs = [RegressorSpec(family, dict(hp), seed) for hp in grid]
    if len(specs) == 1:
        return specs[0]
    X = _as_matrix(X)
    y = np.asarray(y, dtype=np.float64).ravel()
    if len(y) != len(X):
        raise DimensionMismatch(f"{len(X)} feature rows but {len(y)} labels")
    if len(y) < inner_folds:
        raise DimensionMismatch(f"{len(y)} rows cannot fill {inner_folds} folds")
    order = canonical_order(X, y)
    X, y = X[order], y[order]
    perm = np.random.default_rng(seed).permutation(len(y))
    folds = [np.sort(f) for f in np.array_split(perm, inner_folds)]
    best, best_err = specs[0], np.inf
    for spec in specs:
        err = cv_rmse(spec, X, y, folds)
        if err < best_err:
            best, best_err = spec, err
    return best
