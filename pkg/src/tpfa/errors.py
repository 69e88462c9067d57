"""Exception hierarchy shared by all modules."""


class TpfaError(Exception):
    """Base class for every error raised by the package."""


class MeshError(TpfaError):
    """Raised when a mesh cannot be built or ingested."""


class OrthogonalityViolation(MeshError):
    pass


class PointOutsideCell(MeshError):
    pass


class NonConformity(MeshError):
    pass


class DegenerateGeometry(MeshError):
    pass


class NonAcutePattern(MeshError):
    pass


class ParseError(MeshError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class DataMisalignment(TpfaError):
    pass


class SolverDivergence(TpfaError):
    pass


class QuadratureFailure(TpfaError):
    pass


class DomainError(TpfaError, ValueError):
    pass


class SingularPoint(TpfaError, ValueError):
    pass


class DiagonalPoint(TpfaError, ValueError):
    pass


class UndefinedValue(TpfaError, ValueError):
    pass


class BoundViolation(TpfaError):
    pass


class FixedPointStall(TpfaError):
    pass


class OracleMissing(TpfaError):
    pass
