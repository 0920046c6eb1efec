"""Exception hierarchy shared by all modules."""


class CompConjError(Exception):
    """Base class for every error raised by this package."""


class MalformedExpr(CompConjError):
    """A function expression could not be parsed or is semantically invalid."""

    def __init__(self, message, line=None, column=None):
        self.line = line
        self.column = column
        if line is not None:
            message = f"{message} (line {line}, column {column})"
        super().__init__(message)


class ArityMismatch(CompConjError):
    pass


class GridMismatch(CompConjError):
    pass


class NodeOutOfGrid(CompConjError):
    pass


class DimensionMismatch(CompConjError):
    pass


class DimensionTooLarge(CompConjError):
    pass


class NonConvexDomain(CompConjError):
    pass


class NotConvex(CompConjError):
    pass


class DegenerateSet(CompConjError):
    pass


class MissingVRep(CompConjError):
    pass


class PieceInconsistent(CompConjError):
    pass


class SampleMismatch(CompConjError):
    pass


class UnknownExample(CompConjError):
    pass


class ScenarioError(CompConjError):
    """Scenario file failed to parse or validate."""


class InvariantViolation(CompConjError):
    pass
