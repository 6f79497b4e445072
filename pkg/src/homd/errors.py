"""Exception hierarchy shared by all modules."""


class HomdError(Exception):
    """Base class for every error raised by this package."""


class MeshError(HomdError, ValueError):
    pass


class NonManifoldEdge(MeshError):
    pass


class DegenerateTriangle(MeshError):
    pass


class InconsistentOrientation(MeshError):
    pass


class IndexOutOfRange(MeshError, IndexError):
    pass


class FieldError(HomdError, ValueError):
    pass


class MeshMismatch(FieldError):
    pass


class ChannelMismatch(FieldError):
    pass


class WeightShapeMismatch(FieldError):
    pass


class CountMismatch(FieldError):
    pass


class SolverError(HomdError, ArithmeticError):
    pass


class NonFinite(SolverError):
    pass


class ZeroNormal(SolverError):
    pass


class DegenerateFace(SolverError):
    """A triangle collapsed during vertex updating."""

    def __init__(self, face, message=None):
        self.face = int(face)
        super().__init__(message or f"face {self.face} is degenerate")


class ParseError(HomdError, ValueError):
    """Malformed mesh file. ``line`` is 1-based, or None for whole-file errors."""

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
