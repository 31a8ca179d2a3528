"""Exception hierarchy.

Every numerical error records the name of the operation that raised it so the
CLI can report where a pipeline failed.
"""


class HelmsenseError(Exception):
    """Base class for all library errors."""

    def __init__(self, message, operation=None):
        self.operation = operation
        if operation:
            message = f"{operation}: {message}"
        super().__init__(message)


class NumericalError(HelmsenseError):
    """A computation could not produce a trustworthy number."""


class ResonanceError(NumericalError):
    """k**2 sits (numerically) on a Dirichlet eigenvalue of the operator."""


class SingularJacobianError(NumericalError):
    """The transport map folds the domain (det DT_s vanishes)."""


class MeshError(HelmsenseError):
    """Invalid mesh request or corrupted mesh data."""


class HoleTooCloseError(MeshError):
    pass


class PointOutsideMeshError(HelmsenseError):
    pass


class UnknownTagError(HelmsenseError):
    pass


class DomainError(HelmsenseError):
    """A closed form was evaluated outside its domain of validity."""


class ConfigError(HelmsenseError):
    pass
