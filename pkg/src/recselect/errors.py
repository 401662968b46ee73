"""Exception hierarchy.

Every error carries a short machine-readable ``kind`` so the CLI can print a
single parsable line. ``DataError`` subclasses map to exit code 2.
"""

from __future__ import annotations


class RecSelectError(Exception):
    exit_code = 3

    @property
    def kind(self) -> str:
        return type(self).__name__


class UsageError(RecSelectError):
    exit_code = 1


class ConfigError(UsageError):
    pass


class DataError(RecSelectError):
    exit_code = 2


class MissingColumn(DataError):
    pass


class ParseError(DataError):
    pass


class EmptyFile(DataError):
    pass


class EmptyInput(DataError):
    pass


class EmptyDataset(DataError):
    pass


class InsufficientInteractions(DataError):
    pass


class DatasetTooSmall(DataError):
    pass


class UnknownUser(DataError):
    pass


class EmptyRelevantSet(DataError):
    pass


class SchemaMismatch(DataError):
    pass


class IncompleteGrid(DataError):
    pass


class DimensionMismatch(DataError):
    pass


class NonFiniteInput(DataError):
    pass


class EmptyGrid(DataError):
    pass


class TooFewDatasets(DataError):
    pass


class LengthMismatch(DataError):
    pass


class MalformedRanking(DataError):
    pass


class MissingStageOutput(DataError):
    pass
