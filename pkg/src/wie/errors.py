"""Exception types shared across the package."""


class WieError(Exception):
    """Base class for all package errors."""


class ShapeError(WieError):
    """Array length or shape does not match the grid it claims to live on."""


class ParameterError(WieError):
    """Scalar parameter outside its admissible range."""


class TailToleranceError(WieError):
    """Quadrature horizon too short for the requested tail tolerance."""


class AdmissibilityError(WieError):
    """Integrand grows too fast for the kernel it is paired with."""


class ForcingError(WieError):
    """Invalid or non-finite forcing evaluation."""


class ConstraintError(WieError):
    """Field violates the fixed initial layers."""


class SingularityError(WieError):
    """Power-term slope evaluated at a zero of the field for exponent < 2."""


class OptimizerError(WieError):
    """Line search or descent-direction failure inside the minimizer."""


class RangeError(WieError):
    """Requested point lies outside the covered time horizon."""


class InstabilityError(WieError):
    """Explicit time stepping blew up."""


class ConfigError(WieError):
    """Experiment configuration failed validation."""


class InputError(WieError):
    """User-supplied input violates a documented precondition."""
