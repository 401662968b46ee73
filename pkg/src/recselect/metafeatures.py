"""Dataset meta-features computed from the binary interaction matrix."""

from __future__ import annotations

import csv
from pathlib import Path
from typing import NamedTuple

import numpy as np

from .errors import EmptyDataset, SchemaMismatch
from .interactions import InteractionDataset


class MetaFeatureVector(NamedTuple):
    n_users: float
    n_items: float
    n_interactions: float
    density: float
    user_item_ratio: float
    item_user_ratio: float
    max_user_degree: float
    min_user_degree: float
    max_item_degree: float
    min_item_degree: float
    mean_user_degree: float
    mean_item_degree: float


FEATURE_NAMES = MetaFeatureVector._fields

# integer-valued counts spanning orders of magnitude; log1p'd before scaling
COUNT_FEATURES = (
    "n_users",
    "n_items",
    "n_interactions",
    "max_user_degree",
    "min_user_degree",
    "max_item_degree",
    "min_item_degree",
)
COUNT_COLUMNS = tuple(FEATURE_NAMES.index(n) for n in COUNT_FEATURES)


def extract(dataset: InteractionDataset) -> MetaFeatureVector:
    if dataset.n_interactions == 0:
        raise EmptyDataset("cannot describe an empty dataset")
    nu, ni, n = dataset.n_users, dataset.n_items, dataset.n_interactions
    ud, id_ = dataset.user_degrees(), dataset.item_degrees()
    return MetaFeatureVector(
        float(nu),
        float(ni),
        float(n),
        n / (nu * ni),
        nu / ni,
        ni / nu,
        float(ud.max()),
        float(ud.min()),
        float(id_.max()),
        float(id_.min()),
        n / nu,
        n / ni,
    )


def save_features(features: dict[str, MetaFeatureVector], path: str | Path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["dataset", *FEATURE_NAMES])
        for name, vec in features.items():
            w.writerow([name, *(repr(float(v)) for v in vec)])


def load_features(path: str | Path) -> dict[str, MetaFeatureVector]:
    out = {}
    with Path(path).open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["dataset", *FEATURE_NAMES]:
            raise SchemaMismatch(f"{path}:1: unexpected meta-feature header")
        for row in reader:
            try:
                vec = MetaFeatureVector(*map(float, row[1:]))
            except (TypeError, ValueError):
                raise SchemaMismatch(f"{path}:{reader.line_num}: bad meta-feature row") from None
            if not all(np.isfinite(vec)):
                raise SchemaMismatch(f"{path}:{reader.line_num}: non-finite meta-feature")
            out[row[0]] = vec
    return out
