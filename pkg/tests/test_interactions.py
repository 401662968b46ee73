import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from recselect.errors import EmptyFile, EmptyInput, MissingColumn, ParseError
from recselect.interactions import (
    CsvSchema,
    RawInteraction,
    build_dataset,
    export_csv,
    ingest_csv,
    load_exported,
)


@pytest.fixture
def ratings_csv(tmp_path):
    p = tmp_path / "r.csv"
    p.write_text("u1,i1,5\nu1,i2,3\nu2,i1,4\n")
    return p


def test_ingest_with_ratings(ratings_csv):
    rows = ingest_csv(ratings_csv, CsvSchema(0, 1, rating_col=2))
    assert [r.rating for r in rows] == [5, 3, 4]
    assert [(r.user, r.item) for r in rows] == [("u1", "i1"), ("u1", "i2"), ("u2", "i1")]


def test_ingest_without_rating_column(ratings_csv):
    rows = ingest_csv(ratings_csv, CsvSchema(0, 1))
    assert len(rows) == 3
    assert all(r.rating is None for r in rows)


def test_header_only_is_empty(tmp_path):
    p = tmp_path / "e.csv"
    p.write_text("user,item\n")
    with pytest.raises(EmptyFile):
        ingest_csv(p, CsvSchema("user", "item", has_header=True))


def test_missing_column_reports_line(tmp_path):
    p = tmp_path / "m.csv"
    p.write_text("a,x,1\nb\n")
    with pytest.raises(MissingColumn, match=":2:"):
        ingest_csv(p, CsvSchema(0, 1, rating_col=2))


def test_bad_rating(tmp_path):
    p = tmp_path / "b.csv"
    p.write_text("a,x,five\n")
    with pytest.raises(ParseError):
        ingest_csv(p, CsvSchema(0, 1, rating_col=2))


def test_named_columns_and_delimiter(tmp_path):
    p = tmp_path / "t.tsv"
    p.write_text("ts\titem\tuser\n100\tx\ta\n200\ty\tb\n")
    rows = ingest_csv(p, CsvSchema("user", "item", timestamp_col="ts", delimiter="\t", has_header=True))
    assert rows == [RawInteraction("a", "x", None, 100), RawInteraction("b", "y", None, 200)]


def test_build_drops_ratings_and_duplicates():
    rows = [RawInteraction("u1", "i1", 5), RawInteraction("u1", "i1", 2), RawInteraction("u2", "i1")]
    ds = build_dataset(rows)
    assert (ds.n_users, ds.n_items, ds.n_interactions) == (2, 1, 2)


def test_first_appearance_indexing():
    ds = build_dataset([RawInteraction(*p) for p in [("a", "x"), ("b", "y"), ("a", "y")]])
    assert (ds.n_users, ds.n_items) == (2, 2)
    assert ds.interaction_set() == {(0, 0), (1, 1), (0, 1)}


def test_negative_and_zero_ratings_count():
    ds = build_dataset([RawInteraction("a", "x", 0.0), RawInteraction("a", "y", -3.0)])
    assert ds.n_interactions == 2


def test_empty_input():
    with pytest.raises(EmptyInput):
        build_dataset([])


def test_dedup_against_set_oracle(rng):
    tokens = [(f"u{rng.integers(10)}", f"i{rng.integers(10)}") for _ in range(1000)]
    ds = build_dataset([RawInteraction(u, i) for u, i in tokens])
    assert ds.n_interactions == len(set(tokens))
    back = {(ds.user_tokens[u], ds.item_tokens[i]) for u, i in ds.pairs.tolist()}
    assert back == set(tokens)
    ds.validate()


token = st.sampled_from([f"t{i}" for i in range(8)])


@settings(max_examples=60, deadline=None)
@given(st.lists(st.tuples(token, token), min_size=1, max_size=80))
def test_roundtrip_properties(tmp_path_factory, pairs):
    ds = build_dataset([RawInteraction(u, "x" + i) for u, i in pairs])
    ds.validate()
    assert ds.n_interactions <= ds.n_users * ds.n_items
    for t, i in ds.user_index.items():
        assert ds.user_tokens[i] == t
    path = tmp_path_factory.mktemp("rt") / "d.csv"
    export_csv(ds, path)
    again = load_exported(path)
    assert again == ds


def test_pairs_are_read_only(rng):
    ds = build_dataset([RawInteraction("a", "x")])
    with pytest.raises(ValueError):
        ds.pairs[0, 0] = 3
    assert isinstance(ds.pairs, np.ndarray)
