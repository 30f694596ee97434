"""Exception types raised across the package."""


class TransientImpactError(Exception):
    """Base class for all package errors."""


class ConfigError(TransientImpactError, ValueError):
    """Invalid or incomplete configuration.

    ``field`` names the offending dotted config key when known.
    """

    def __init__(self, message, field=None, line=None):
        self.field = field
        self.line = line
        where = []
        if line is not None:
            where.append(f"line {line}")
        if field is not None:
            where.append(field)
        prefix = f"[{', '.join(where)}] " if where else ""
        super().__init__(prefix + message)


class NumericalError(TransientImpactError, ArithmeticError):
    """A numerical invariant failed. ``invariant`` names it."""

    invariant = "numerical"

    def __init__(self, message, invariant=None):
        if invariant is not None:
            self.invariant = invariant
        super().__init__(message)


class SingularCovarianceError(NumericalError):
    invariant = "covariance_conditioning"


class NotPositiveDefiniteError(NumericalError, ValueError):
    invariant = "positive_definite"


class RiccatiError(NumericalError):
    invariant = "riccati_residual"


class HorizonError(NumericalError):
    invariant = "horizon_tail"


class StiffnessError(NumericalError, ValueError):
    invariant = "stiffness_guard"


class NonFiniteStateError(NumericalError):
    invariant = "finite_state"
