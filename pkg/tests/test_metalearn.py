import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from recselect.errors import DimensionMismatch, EmptyGrid, NonFiniteInput
from recselect.metafeatures import COUNT_COLUMNS, FEATURE_NAMES
from recselect.metalearn import DEFAULT_GRIDS, Family, RegressorSpec, fit_regressor, grid_search, predict
from recselect.metalearn import trees

F = Family
P = len(FEATURE_NAMES)
DENSITY = FEATURE_NAMES.index("density")
RATIO = FEATURE_NAMES.index("user_item_ratio")
N_USERS = FEATURE_NAMES.index("n_users")
FREE_COLUMNS = [j for j in range(P) if j not in COUNT_COLUMNS]


def meta_matrix(rng, n):
    """Plausible meta-feature rows: counts are positive integers, the rest positive reals."""
    X = rng.uniform(0.01, 1.0, (n, P))
    X[:, COUNT_COLUMNS] = rng.integers(5, 5000, (n, len(COUNT_COLUMNS)))
    return X


def r2(y, pred):
    return 1 - np.sum((y - pred) ** 2) / np.sum((y - y.mean()) ** 2)


def test_linear_recovers_planted_line(rng):
    X = meta_matrix(rng, 20)
    y = 3 * X[:, DENSITY] + 1
    model = fit_regressor(RegressorSpec(F.LinearRegression), X, y)
    assert np.max(np.abs(model.predict(X) - y)) < 1e-8
    Xt = meta_matrix(rng, 50)
    assert np.max(np.abs(model.predict(Xt) - (3 * Xt[:, DENSITY] + 1))) < 1e-8


def test_linear_recovers_affine_in_transformed_space(rng):
    X = meta_matrix(rng, 40)
    w = rng.normal(size=P)
    Xt = X.copy()
    Xt[:, COUNT_COLUMNS] = np.log1p(Xt[:, COUNT_COLUMNS])
    y = Xt @ w - 2.5
    model = fit_regressor(RegressorSpec(F.LinearRegression), X, y)
    assert np.max(np.abs(model.predict(X) - y)) < 1e-8


def test_linear_midpoint_on_free_columns(rng):
    X = meta_matrix(rng, 30)
    model = fit_regressor(RegressorSpec(F.LinearRegression), X, rng.normal(size=30))
    for _ in range(20):
        a, b = meta_matrix(rng, 2)
        b[list(COUNT_COLUMNS)] = a[list(COUNT_COLUMNS)]  # log1p makes count columns non-affine
        mid = (a + b) / 2
        assert predict(model, mid) == pytest.approx((predict(model, a) + predict(model, b)) / 2, abs=1e-10)


def test_one_nn_interpolates(rng):
    X = meta_matrix(rng, 25)
    y = rng.normal(size=25)
    for weighting in ("uniform", "inverse-distance"):
        model = fit_regressor(RegressorSpec(F.KnnRegressor, {"neighbors": 1, "weighting": weighting}), X, y)
        assert np.array_equal(model.predict(X), y)
        assert predict(model, X[3]) == y[3]


def test_inverse_distance_exact_match(rng):
    X = meta_matrix(rng, 10)
    y = rng.normal(size=10)
    model = fit_regressor(RegressorSpec(F.KnnRegressor, {"neighbors": 5, "weighting": "inverse-distance"}), X, y)
    assert np.allclose(model.predict(X), y, atol=1e-12)


def test_forest_and_boosting_fit_planted_function(rng):
    X = meta_matrix(rng, 200)
    y = np.where(X[:, N_USERS] > 2000, 1.0, 0.0) + np.sin(3 * X[:, DENSITY])
    for spec in (
        RegressorSpec(F.RandomForest, {"trees": 100}, seed=1),
        RegressorSpec(F.GradientBoostedTrees, {"trees": 100}, seed=1),
    ):
        assert r2(y, fit_regressor(spec, X, y).predict(X)) >= 0.9


def test_forest_step_function_of_n_users(rng):
    X = meta_matrix(rng, 100)
    y = (X[:, N_USERS] > 1000).astype(float)
    model = fit_regressor(RegressorSpec(F.RandomForest, {"trees": 100}, seed=3), X, y)
    assert r2(y, model.predict(X)) >= 0.9


def test_degenerate_booster_predicts_mean(rng):
    X = meta_matrix(rng, 30)
    y = rng.normal(size=30)
    spec = RegressorSpec(F.GradientBoostedTrees, {"trees": 1, "max_depth": 0, "learning_rate": 1e-9})
    pred = fit_regressor(spec, X, y).predict(meta_matrix(rng, 10))
    assert np.allclose(pred, y.mean(), atol=1e-12)


@pytest.mark.parametrize("family", list(F))
def test_row_permutation_invariance(rng, family):
    X = meta_matrix(rng, 30)
    y = rng.normal(size=30)
    spec = RegressorSpec(family, {}, seed=9)
    perm = rng.permutation(30)
    Xt = meta_matrix(rng, 15)
    a = fit_regressor(spec, X, y).predict(Xt)
    b = fit_regressor(spec, X[perm], y[perm]).predict(Xt)
    assert np.array_equal(a, b)


@pytest.mark.parametrize("family", [F.KnnRegressor, F.RandomForest, F.GradientBoostedTrees])
def test_positive_scaling_of_free_columns(rng, family):
    X = meta_matrix(rng, 40)
    y = rng.normal(size=40)
    spec = RegressorSpec(family, {}, seed=2)
    base = fit_regressor(spec, X, y).predict(X)
    c = rng.uniform(0.1, 10, len(FREE_COLUMNS))
    Xs = X.copy()
    Xs[:, FREE_COLUMNS] *= c
    np.testing.assert_allclose(fit_regressor(spec, Xs, y).predict(Xs), base, atol=1e-9)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(2, 40))
def test_prediction_bounds(seed, n):
    rng = np.random.default_rng(seed)
    X = meta_matrix(rng, n)
    y = rng.normal(size=n)
    Xt = meta_matrix(rng, 20) * rng.uniform(0.1, 10, P)
    lo, hi, span = y.min(), y.max(), y.max() - y.min()
    for family in (F.RandomForest, F.KnnRegressor):
        p = fit_regressor(RegressorSpec(family, {"trees": 10} if family is F.RandomForest else {}, seed), X, y).predict(Xt)
        assert np.all((p >= lo - 1e-12) & (p <= hi + 1e-12))
    p = fit_regressor(RegressorSpec(F.GradientBoostedTrees, {"trees": 10}, seed), X, y).predict(Xt)
    assert np.all((p >= lo - span - 1e-12) & (p <= hi + span + 1e-12))


def test_fit_errors(rng):
    X = meta_matrix(rng, 5)
    spec = RegressorSpec(F.LinearRegression)
    with pytest.raises(DimensionMismatch):
        fit_regressor(spec, X, np.zeros(4))
    with pytest.raises(DimensionMismatch):
        fit_regressor(spec, X[:1], np.zeros(1))
    with pytest.raises(DimensionMismatch):
        fit_regressor(spec, X[:, :5], np.zeros(5))
    bad = X.copy()
    bad[0, 3] = np.nan
    with pytest.raises(NonFiniteInput):
        fit_regressor(spec, bad, np.zeros(5))
    model = fit_regressor(spec, X, np.zeros(5))
    with pytest.raises(NonFiniteInput):
        model.predict(bad)


@pytest.mark.parametrize(
    "family,hp",
    [
        (F.KnnRegressor, {"neighbors": 0}),
        (F.RandomForest, {"trees": 0}),
        (F.GradientBoostedTrees, {"learning_rate": 1.5}),
        (F.GradientBoostedTrees, {"learning_rate": 0.0}),
        (F.RandomForest, {"max_depth": 0}),
        (F.KnnRegressor, {"weighting": "gaussian"}),
    ],
)
def test_spec_validation(family, hp):
    with pytest.raises(ValueError):
        RegressorSpec(family, hp)


def test_spec_json_roundtrip():
    spec = RegressorSpec(F.RandomForest, {"trees": 300, "max_depth": None}, seed=4)
    again = RegressorSpec.from_json(spec.to_json())
    assert again == spec


# -- CART split oracle --------------------------------------------------------


def exhaustive_split(X, y, w):
    """Enumerate every (feature, threshold) and recompute both sides' SSE from scratch."""
    def sse(mask):
        ww, yy = w[mask], y[mask]
        mean = np.sum(ww * yy) / np.sum(ww)
        return np.sum(ww * (yy - mean) ** 2)

    total = sse(np.ones(len(y), dtype=bool))
    cands = []
    for f in range(X.shape[1]):
        vals = np.unique(X[:, f])
        for a, b in zip(vals[:-1], vals[1:]):
            thr = (a + b) / 2
            left = X[:, f] <= thr
            cands.append((total - sse(left) - sse(~left), f, thr))
    return cands


def check_split(X, y, w):
    f, thr, gain = trees.best_split(X, y, w, np.arange(len(y)), np.arange(X.shape[1]))
    cands = exhaustive_split(X, y, w)
    best = max((c[0] for c in cands), default=0.0)
    scale = max(1.0, np.sum(w * y**2))
    if not cands or best <= 1e-12 * scale:
        assert f == -1 or gain <= 1e-12 * scale
        return
    # first candidate within float noise of the maximum, in (feature, threshold) order
    want = next(c for c in cands if c[0] >= best - 1e-10 * scale)
    assert (f, thr) == (want[1], want[2])
    assert gain == pytest.approx(best, rel=1e-9, abs=1e-12)


def test_cart_split_matches_exhaustive_oracle(rng):
    for case in range(100):
        n = int(rng.integers(2, 51))
        p = int(rng.integers(1, 5))
        X = rng.normal(size=(n, p))
        if case % 2:
            X = np.round(X * 2)  # repeated values
        y = rng.normal(size=n)
        check_split(X, y, np.ones(n))


def test_weighted_split_equals_replicated_rows(rng):
    for _ in range(30):
        n = int(rng.integers(3, 20))
        X = np.round(rng.normal(size=(n, 3)), 1)
        y = rng.normal(size=n)
        w = rng.integers(0, 4, n).astype(float)
        w[0] = max(w[0], 1.0)
        keep = np.flatnonzero(w > 0)
        a = trees.best_split(X, y, w, keep, np.arange(3))
        rep = np.repeat(np.arange(n), w.astype(int))
        b = trees.best_split(X[rep], y[rep], np.ones(len(rep)), np.arange(len(rep)), np.arange(3))
        assert a[:2] == b[:2]
        assert a[2] == pytest.approx(b[2], rel=1e-9, abs=1e-12)


# -- grid search --------------------------------------------------------------


def test_grid_of_one_is_returned(rng):
    X = meta_matrix(rng, 10)
    spec = grid_search(F.KnnRegressor, [{"neighbors": 2}], X, rng.normal(size=10), seed=4)
    assert spec == RegressorSpec(F.KnnRegressor, {"neighbors": 2}, 4)


def test_empty_grid():
    with pytest.raises(EmptyGrid):
        grid_search(F.LinearRegression, [], np.zeros((3, P)), np.zeros(3))


def test_linear_beats_one_nn_on_linear_data(rng):
    X = meta_matrix(rng, 30)
    y = 2 * X[:, DENSITY] - X[:, RATIO]
    lin = grid_search(F.LinearRegression, [{"ridge": 1e-8}], X, y)
    nn = grid_search(F.KnnRegressor, [{"neighbors": 1}], X, y)
    from recselect.metalearn.search import cv_rmse

    folds = [np.sort(f) for f in np.array_split(rng.permutation(len(y)), 3)]
    assert cv_rmse(lin, X, y, folds) < cv_rmse(nn, X, y, folds)


def test_grid_search_picks_lowest_rmse_first_on_ties(rng):
    X = meta_matrix(rng, 20)
    y = 5 * X[:, DENSITY]
    grid = [{"ridge": 1.0}, {"ridge": 1e-8}, {"ridge": 1e-8}]
    spec = grid_search(F.LinearRegression, grid, X, y, seed=1)
    assert spec.hyperparameters["ridge"] == 1e-8
    # identical points tie exactly: the earlier one wins
    knn = grid_search(F.KnnRegressor, [{"neighbors": 3}, {"neighbors": 3, "weighting": "uniform"}], X, y)
    assert knn.hyperparameters == {"neighbors": 3, "weighting": "uniform"}


def test_grid_search_deterministic(rng):
    X = meta_matrix(rng, 24)
    y = rng.normal(size=24)
    grid = DEFAULT_GRIDS[F.GradientBoostedTrees][:4]
    assert grid_search(F.GradientBoostedTrees, grid, X, y, seed=8) == grid_search(
        F.GradientBoostedTrees, grid, X, y, seed=8
    )


def test_default_grid_sizes():
    assert [len(DEFAULT_GRIDS[f]) for f in F] == [3, 8, 12, 16]
