"""Exception hierarchy.

Every error carries the CLI exit code it maps to: 1 usage, 2 data, 3 numeric.
"""

from __future__ import annotations


class VibroError(Exception):
    exit_code = 2


class DataError(VibroError, ValueError):
    exit_code = 2


class NumericError(VibroError, ArithmeticError):
    exit_code = 3


class UsageError(VibroError):
    exit_code = 1


# ingest
class MissingColumn(DataError):
    def __init__(self, column: str):
        super().__init__(f"required column {column!r} missing from header")
        self.column = column


class MalformedRow(DataError):
    def __init__(self, row: int, col: str, value: str = ""):
        super().__init__(f"row {row}, column {col!r}: cannot parse {value!r} as a finite number")
        self.row = row
        self.col = col


class EmptyFile(DataError):
    pass


class TooShort(DataError):
    pass


class BadWindowLen(DataError):
    pass


class InsufficientSamples(DataError):
    pass


# dsp
class BadLength(DataError):
    pass


class ShapeMismatch(DataError):
    pass


class TooFewBins(DataError):
    pass


class BadSegment(DataError):
    pass


# shared
class DimMismatch(DataError):
    pass


class LengthMismatch(DataError):
    pass


class Empty(DataError):
    pass


# pca / svm / hpo / mlp
class RankTooLow(NumericError):
    def __init__(self, k: int, rank: int):
        super().__init__(f"requested {k} components but covariance rank is {rank}")
        self.k = k
        self.rank = rank


class SingleClass(DataError):
    pass


class ClassTooSmall(DataError):
    pass


class NoConvergence(RuntimeWarning):
    """Warning: SMO hit its iteration cap with KKT violations above tol."""


class LineSearchFailure(RuntimeWarning):
    """Warning: L-BFGS could not satisfy the Armijo condition."""


class ObjectiveFailure(RuntimeWarning):
    """Warning: an objective evaluation raised; the point was scored 1.0."""


# bench / cli
class BadSpec(DataError):
    pass


class DatasetError(DataError):
    pass


class VersionMismatch(DataError):
    def __init__(self, found: int, supported: int):
        super().__init__(f"bundle format_version {found} is newer than reader version {supported}")
        self.found = found
        self.supported = supported


class IoError(VibroError, OSError):
    exit_code = 2
