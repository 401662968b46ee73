import numpy as np
import pytest

from recselect.errors import ConfigError
from recselect.metafeatures import extract
from recselect.preprocess import k_core_prune
from recselect.synth import REGIMES, Profile, generate, generate_corpus, planted_winner


@pytest.fixture(scope="module")
def corpus():
    return generate_corpus(24, seed=3, max_interactions=5000)


def test_corpus_has_distinct_profiles(corpus):
    assert [name for name, _, _ in corpus] == [f"synth{d:02d}" for d in range(24)]
    profiles = {tuple(extract(ds)) for _, _, ds in corpus}
    assert len(profiles) == 24
    assert all(ds.n_interactions <= 5000 for _, _, ds in corpus)


def test_regimes_dealt_round_robin(corpus):
    counts = {r: sum(reg == r for _, reg, _ in corpus) for r in REGIMES}
    assert set(counts.values()) == {24 // len(REGIMES)}


def test_planted_winner_matches_regime(corpus):
    # the rule reads meta-features only, so it must agree with the generating regime
    for _, regime, ds in corpus:
        assert planted_winner(extract(ds)) == REGIMES[regime]["winner"]


def test_corpus_survives_five_core(corpus):
    for _, _, ds in corpus:
        # the long tail loses a few rare items, never the bulk of the data
        assert k_core_prune(ds, 5).n_interactions >= 0.85 * ds.n_interactions


def test_same_seed_same_corpus():
    a = generate_corpus(4, seed=9, max_interactions=3000)
    b = generate_corpus(4, seed=9, max_interactions=3000)
    c = generate_corpus(4, seed=10, max_interactions=3000)
    for (na, ra, da), (nb, rb, db) in zip(a, b):
        assert (na, ra) == (nb, rb)
        assert np.array_equal(da.pairs, db.pairs) and list(da.user_tokens) == list(db.user_tokens)
    assert any(not np.array_equal(x[2].pairs, y[2].pairs) for x, y in zip(a, c))


def test_generate_is_seeded():
    p = Profile(50, 30, 8)
    a = generate(p, np.random.default_rng(1))
    b = generate(p, np.random.default_rng(1))
    assert np.array_equal(a.pairs, b.pairs)


@pytest.mark.parametrize(
    "kwargs",
    [{"n_datasets": 2}, {"n_datasets": 5, "rule": "density"}, {"n_datasets": 5, "max_interactions": 10}],
)
def test_bad_corpus_requests(kwargs):
    with pytest.raises(ConfigError):
        generate_corpus(seed=0, **kwargs)
