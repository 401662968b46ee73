from .models import Family, RegressorSpec, TrainedRegressor, fit_regressor, predict
from .search import DEFAULT_GRIDS, grid_search

__all__ = [
    "DEFAULT_GRIDS",
    "Family",
    "RegressorSpec",
    "TrainedRegressor",
    "fit_regressor",
    "grid_search",
    "predict",
]
