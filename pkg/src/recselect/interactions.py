"""Implicit-feedback datasets: CSV ingestion and the canonical in-memory form."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Iterable

import numpy as np
import scipy.sparse as sp

from .errors import EmptyFile, EmptyInput, MissingColumn, ParseError


@dataclass(frozen=True)
class RawInteraction:
    user: str
    item: str
    rating: float | None = None
    timestamp: int | None = None

    def __post_init__(self):
        if not self.user or not self.item:
            raise ValueError("user and item tokens must be non-empty")


@dataclass(frozen=True)
class CsvSchema:
    """Column mapping for :func:`ingest_csv`.

    Columns are zero-based positions, or header names when ``has_header`` is set.
    """

    user_col: int | str = 0
    item_col: int | str = 1
    rating_col: int | str | None = None
    timestamp_col: int | str | None = None
    delimiter: str = ","
    has_header: bool = False


def _resolve(col, header: list[str] | None, path) -> int | None:
    if col is None:
        return None
    if isinstance(col, int):
        return col
    if header is None:
        raise MissingColumn(f"{path}: column {col!r} named but file has no header")
    try:
        return header.index(col)
    except ValueError:
        raise MissingColumn(f"{path}:1: header lacks column {col!r}") from None


def ingest_csv(path: str | Path, schema: CsvSchema = CsvSchema()) -> list[RawInteraction]:
    """Read interactions from a delimited text file, in file order."""
    path = Path(path)
    rows: list[RawInteraction] = []
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh, delimiter=schema.delimiter)
        header = None
        if schema.has_header:
            header = next(reader, None)
            if header is None:
                raise EmptyFile(f"{path}: file is empty")
            header = [h.strip() for h in header]
        ucol = _resolve(schema.user_col, header, path)
        icol = _resolve(schema.item_col, header, path)
        rcol = _resolve(schema.rating_col, header, path)
        tcol = _resolve(schema.timestamp_col, header, path)
        needed = max(c for c in (ucol, icol, rcol, tcol) if c is not None)
        for record in reader:
            if not record or all(not f.strip() for f in record):
                continue
            line = reader.line_num
            if len(record) <= needed:
                raise MissingColumn(
                    f"{path}:{line}: expected at least {needed + 1} columns, got {len(record)}"
                )
            user, item = record[ucol].strip(), record[icol].strip()
            if not user or not item:
                raise MissingColumn(f"{path}:{line}: empty user or item token")
            rating = timestamp = None
            if rcol is not None:
                try:
                    rating = float(record[rcol])
                except ValueError:
                    raise ParseError(f"{path}:{line}: rating {record[rcol]!r} is not numeric") from None
            if tcol is not None:
                try:
                    timestamp = int(float(record[tcol]))
                except ValueError:
                    raise ParseError(
                        f"{path}:{line}: timestamp {record[tcol]!r} is not numeric"
                    ) from None
            rows.append(RawInteraction(user, item, rating, timestamp))
    if not rows:
        raise EmptyFile(f"{path}: no data rows")
    return rows


@dataclass(frozen=True, eq=False)
class InteractionDataset:
    """Deduplicated binary user-item interactions with contiguous indices.

    ``pairs`` is an ``(n, 2)`` integer array of ``(user_index, item_index)``
    rows; ``user_tokens[i]`` is the original token of user index ``i``.
    """

    user_tokens: tuple[str, ...]
    item_tokens: tuple[str, ...]
    pairs: np.ndarray = field(repr=False)

    def __post_init__(self):
        pairs = np.asarray(self.pairs, dtype=np.int64).reshape(-1, 2)
        pairs.setflags(write=False)
        object.__setattr__(self, "pairs", pairs)

    @property
    def n_users(self) -> int:
        return len(self.user_tokens)

    @property
    def n_items(self) -> int:
        return len(self.item_tokens)

    @property
    def n_interactions(self) -> int:
        return len(self.pairs)

    @cached_property
    def user_index(self) -> dict[str, int]:
        return {t: i for i, t in enumerate(self.user_tokens)}

    @cached_property
    def item_index(self) -> dict[str, int]:
        return {t: i for i, t in enumerate(self.item_tokens)}

    def interaction_set(self) -> set[tuple[int, int]]:
        return set(map(tuple, self.pairs.tolist()))

    def user_degrees(self) -> np.ndarray:
        return np.bincount(self.pairs[:, 0], minlength=self.n_users)

    def item_degrees(self) -> np.ndarray:
        return np.bincount(self.pairs[:, 1], minlength=self.n_items)

    def matrix(self) -> sp.csr_matrix:
        return pairs_to_matrix(self.pairs, self.n_users, self.n_items)

    def validate(self) -> None:
        """Check the structural invariants; raises ``ValueError`` on violation."""
        p = self.pairs
        if len(p):
            if p.min() < 0 or p[:, 0].max() >= self.n_users or p[:, 1].max() >= self.n_items:
                raise ValueError("index out of range")
        if len(np.unique(p[:, 0] * max(self.n_items, 1) + p[:, 1])) != len(p):
            raise ValueError("duplicate interaction")
        if (self.user_degrees() == 0).any() or (self.item_degrees() == 0).any():
            raise ValueError("orphan index")
        if len(set(self.user_tokens)) != self.n_users or len(set(self.item_tokens)) != self.n_items:
            raise ValueError("token maps are not bijective")

    def __eq__(self, other):
        if not isinstance(other, InteractionDataset):
            return NotImplemented
        return (
            self.user_tokens == other.user_tokens
            and self.item_tokens == other.item_tokens
            and np.array_equal(self.pairs, other.pairs)
        )

    __hash__ = None


def pairs_to_matrix(pairs: np.ndarray, n_users: int, n_items: int) -> sp.csr_matrix:
    pairs = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
    data = np.ones(len(pairs), dtype=np.float64)
    m = sp.csr_matrix((data, (pairs[:, 0], pairs[:, 1])), shape=(n_users, n_items))
    m.sum_duplicates()
    m.data[:] = 1.0
    return m


def build_dataset(rows: Iterable[RawInteraction]) -> InteractionDataset:
    """Collapse raw rows into an :class:`InteractionDataset`.

    Ratings and timestamps are dropped, duplicate pairs collapse, and indices
    follow first appearance of each token.
    """
    return from_token_pairs((r.user, r.item) for r in rows)


def from_token_pairs(pairs: Iterable[tuple[str, str]]) -> InteractionDataset:
    users: dict[str, int] = {}
    items: dict[str, int] = {}
    seen: set[tuple[int, int]] = set()
    out: list[tuple[int, int]] = []
    for u, i in pairs:
        ui = users.setdefault(u, len(users))
        ii = items.setdefault(i, len(items))
        key = (ui, ii)
        if key not in seen:
            seen.add(key)
            out.append(key)
    if not out:
        raise EmptyInput("no interactions")
    return InteractionDataset(tuple(users), tuple(items), np.array(out, dtype=np.int64))


def subset(dataset: InteractionDataset, keep: np.ndarray) -> InteractionDataset:
    """Keep the interactions selected by boolean mask ``keep``, re-compacting indices."""
    pairs = dataset.pairs[keep]
    if not len(pairs):
        return InteractionDataset((), (), np.empty((0, 2), dtype=np.int64))
    users = np.unique(pairs[:, 0])
    items = np.unique(pairs[:, 1])
    umap = np.full(dataset.n_users, -1, dtype=np.int64)
    imap = np.full(dataset.n_items, -1, dtype=np.int64)
    umap[users] = np.arange(len(users))
    imap[items] = np.arange(len(items))
    return InteractionDataset(
        tuple(dataset.user_tokens[u] for u in users),
        tuple(dataset.item_tokens[i] for i in items),
        np.column_stack([umap[pairs[:, 0]], imap[pairs[:, 1]]]),
    )


def export_csv(dataset: InteractionDataset, path: str | Path) -> None:
    """Write ``user,item`` rows with original tokens."""
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["user", "item"])
        ut, it = dataset.user_tokens, dataset.item_tokens
        for u, i in dataset.pairs.tolist():
            w.writerow([ut[u], it[i]])


def load_exported(path: str | Path) -> InteractionDataset:
    return build_dataset(ingest_csv(path, CsvSchema("user", "item", has_header=True)))

