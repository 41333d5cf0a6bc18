"""Exception hierarchy shared by all modules."""


class NSGalerkinError(Exception):
    """Base class for every error raised by the package."""


class InvalidArgumentError(NSGalerkinError, ValueError):
    pass


class AliasingError(InvalidArgumentError):
    """Quadrature / sampling grid too coarse for the requested field."""


class TruncationError(InvalidArgumentError):
    """Explicit coefficient list longer than the basis."""


class DivisionError(NSGalerkinError, ZeroDivisionError):
    """A ratio was requested whose denominator vanishes."""


class EvaluationError(NSGalerkinError):
    """An envelope could not be evaluated at the requested time."""


class StabilityError(InvalidArgumentError):
    """Explicit RK4 step above the linear stability bound."""

    def __init__(self, dt, bound):
        self.dt = dt
        self.bound = bound
        super().__init__(
            f"dt={dt!r} exceeds the rk4 linear stability bound 2.8/(nu*lambda_max)={bound!r}"
        )


class BlowUpError(NSGalerkinError, FloatingPointError):
    """Non-finite coefficients encountered while stepping.

    ``trace`` and ``state`` hold everything computed up to the last finite sample.
    """

    def __init__(self, t_reached, trace=None, state=None):
        self.t_reached = t_reached
        self.trace = trace
        self.state = state
        super().__init__(f"numerical blow-up: non-finite state after t={t_reached!r}")


class ConfigError(InvalidArgumentError):
    """Scenario configuration failed validation; ``field`` names the offending key."""

    def __init__(self, field, message):
        self.field = field
        super().__init__(f"{field}: {message}")


class BasisMismatchError(InvalidArgumentError):
    pass
