import numpy as np
import pytest

from recselect.interactions import InteractionDataset, from_token_pairs


def random_dataset(rng, n_users=10, n_items=10, n=60) -> InteractionDataset:
    pairs = [(f"u{rng.integers(n_users)}", f"i{rng.integers(n_items)}") for _ in range(n)]
    return from_token_pairs(pairs)


def complete_bipartite(n_users, n_items) -> InteractionDataset:
    return from_token_pairs((f"u{u}", f"i{i}") for u in range(n_users) for i in range(n_items))


def random_core_dataset(rng, k=5) -> InteractionDataset:
    """Random dataset where every user and item has >= k interactions."""
    from recselect.preprocess import k_core_prune

    while True:
        n_users = int(rng.integers(k + 1, 25))
        n_items = int(rng.integers(k + 1, 25))
        m = rng.random((n_users, n_items)) < rng.uniform(0.4, 0.9)
        ds = k_core_prune(from_token_pairs((f"u{u}", f"i{i}") for u, i in zip(*np.nonzero(m))), k)
        if ds.n_interactions:
            return ds


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
