"""Exception hierarchy shared by every module of the package."""


class DCFlowError(Exception):
    """Base class for all package errors."""


class MeshError(DCFlowError):
    pass


class NonManifold(MeshError):
    pass


class Disconnected(MeshError):
    pass


class NonOrientable(MeshError):
    pass


class DegenerateFlip(MeshError):
    """Both sides of the edge lie on the same face record."""


class InvalidU(DCFlowError, ValueError):
    pass


class InvalidR(DCFlowError, ValueError):
    pass


class DegenerateLength(DCFlowError):
    pass


class DegenerateTriangle(DCFlowError):
    pass


class FoldedQuad(DegenerateTriangle):
    """The quadrilateral around an edge is not strictly convex at an endpoint."""


class PreconditionViolated(DCFlowError, ValueError):
    pass


class NotPSD(DCFlowError):
    pass


class DimensionMismatch(DCFlowError, ValueError):
    pass


class InvalidTarget(DCFlowError, ValueError):
    pass


class StepFailure(DCFlowError):
    """The integrator could not advance without degenerating.

    ``trace`` holds the records accepted before the failure, when known.
    """

    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = trace


class FlipLimitExceeded(DCFlowError):
    pass


class ParseError(DCFlowError, ValueError):
    def __init__(self, message, line=None, column=None):
        loc = ""
        if line is not None:
            loc = f"line {line}" + (f", column {column}" if column is not None else "") + ": "
        super().__init__(loc + message)
        self.line = line
        self.column = column
