import numpy as np
import pytest

from conftest import complete_bipartite, random_core_dataset, random_dataset
from recselect.errors import EmptyDataset
from recselect.interactions import from_token_pairs, subset
from recselect.metafeatures import FEATURE_NAMES, extract, load_features, save_features


def test_complete_5x5():
    assert tuple(extract(complete_bipartite(5, 5))) == (5, 5, 25, 1.0, 1.0, 1.0, 5, 5, 5, 5, 5.0, 5.0)


def test_hand_counted_example():
    ds = from_token_pairs([("u0", "i0"), ("u0", "i1"), ("u0", "i2"), ("u1", "i0")])
    f = extract(ds)
    assert (f.n_users, f.n_items, f.n_interactions) == (2, 3, 4)
    assert f.density == pytest.approx(4 / 6, abs=1e-15)
    assert (f.max_user_degree, f.min_user_degree) == (3, 1)
    assert (f.max_item_degree, f.min_item_degree) == (2, 1)
    assert f.mean_user_degree == 2.0
    assert f.mean_item_degree == pytest.approx(4 / 3, abs=1e-15)


def test_empty_dataset_rejected():
    ds = from_token_pairs([("u", "i")])
    with pytest.raises(EmptyDataset):
        extract(subset(ds, np.zeros(1, dtype=bool)))


def test_invariants_against_raw_pairs(rng):
    for _ in range(100):
        ds = random_dataset(rng, int(rng.integers(1, 20)), int(rng.integers(1, 20)), int(rng.integers(1, 150)))
        f = extract(ds)
        pairs = {(ds.user_tokens[u], ds.item_tokens[i]) for u, i in ds.pairs.tolist()}
        users = {u for u, _ in pairs}
        items = {i for _, i in pairs}
        udeg = [sum(1 for p in pairs if p[0] == u) for u in users]
        ideg = [sum(1 for p in pairs if p[1] == i) for i in items]
        assert (f.n_users, f.n_items, f.n_interactions) == (len(users), len(items), len(pairs))
        assert (f.max_user_degree, f.min_user_degree) == (max(udeg), min(udeg))
        assert (f.max_item_degree, f.min_item_degree) == (max(ideg), min(ideg))
        assert 0 < f.density <= 1
        assert f.min_user_degree <= f.mean_user_degree <= f.max_user_degree
        assert f.min_item_degree <= f.mean_item_degree <= f.max_item_degree
        assert f.mean_user_degree * f.n_users == pytest.approx(f.n_interactions, rel=1e-15)
        assert f.mean_item_degree * f.n_items == pytest.approx(f.n_interactions, rel=1e-15)
        assert f.user_item_ratio * f.item_user_ratio == pytest.approx(1.0, rel=1e-15)


def test_relabeling_invariance(rng):
    ds = random_dataset(rng, 12, 9, 80)
    pairs = [(ds.user_tokens[u], ds.item_tokens[i]) for u, i in ds.pairs.tolist()]
    shuffled = [pairs[j] for j in rng.permutation(len(pairs))]
    renamed = from_token_pairs((f"x{u}", f"y{i}") for u, i in shuffled)
    assert extract(renamed) == extract(ds)


def test_after_core_pruning(rng):
    for _ in range(20):
        f = extract(random_core_dataset(rng))
        assert f.min_user_degree >= 5 and f.min_item_degree >= 5


def test_csv_roundtrip_exact(tmp_path, rng):
    feats = {f"d{j}": extract(random_dataset(rng, 7, 11, 40)) for j in range(4)}
    save_features(feats, tmp_path / "m.csv")
    assert load_features(tmp_path / "m.csv") == feats
    assert (tmp_path / "m.csv").read_text().splitlines()[0] == ",".join(("dataset", *FEATURE_NAMES))
