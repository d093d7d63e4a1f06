"""Exception hierarchy shared by all sparsecp modules."""


class SparsecpError(Exception):
    """Base class for all errors raised by this package."""


class RankDeficient(SparsecpError):
    """Least-squares matrix is numerically rank deficient."""


class OutOfDomain(SparsecpError):
    """A point lies outside the basis interval (beyond the boundary slack)."""


class DegenerateColumn(SparsecpError):
    """A design matrix column has (numerically) zero norm."""


class ConstantResponse(SparsecpError):
    """The response vector is constant; the leave-one-out scale is undefined."""


class AllStepsInvalid(SparsecpError):
    """Every regularization-path step was skipped during selection."""


class DegenerateFactor(SparsecpError):
    """A rank-one factor collapsed to all zeros; no useful correction found."""


class EmptyModel(SparsecpError):
    """Operation requires at least one rank-one term."""


class ZeroDenominator(SparsecpError):
    """Reference norm in a relative-error computation is zero."""


class MalformedDocument(SparsecpError):
    """A model document or data table failed validation.

    The message carries a location (JSON path or row number) pointing at
    the offending entry.
    """
