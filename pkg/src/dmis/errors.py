"""Exception hierarchy shared across the package."""


class DmisError(Exception):
    """Base class for all package errors."""


class ConfigError(DmisError):
    """Invalid configuration value or unknown option."""


class NonFiniteError(DmisError):
    """A NaN or infinity reached a computation that requires finite input."""


class ContractViolation(DmisError):
    """A caller broke a documented precondition."""


class StructuralError(DmisError):
    """A loss node was backpropagated through the wrong tape."""


class DegenerateGeometryError(DmisError):
    """Too few distinct points, or all points collinear."""


class InstabilityError(DmisError):
    """A reference solve blew up; the message names the violated step bound."""


class DivergenceError(DmisError):
    """Training aborted after too many consecutive non-finite iterations."""


class MissingArtifactError(DmisError):
    """A required file (checkpoint, grid cache) does not exist."""


class RangeError(DmisError):
    """A query point lies outside the domain covered by a solution grid."""
