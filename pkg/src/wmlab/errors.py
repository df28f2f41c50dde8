"""Exception types shared across the laboratory modules."""


class ContractViolation(ValueError):
    """An operation was called outside its documented preconditions."""


class QuadratureError(RuntimeError):
    """Adaptive quadrature failed to converge at the requested tolerance.

    Carries the worst offending subinterval as ``(lo, hi)``.
    """

    def __init__(self, message, interval=None):
        super().__init__(message)
        self.interval = interval


class IndicialMismatchError(RuntimeError):
    """Right-hand side incompatible with the declared leading power.

    ``order`` names the first Taylor order whose matching fails.
    """

    def __init__(self, message, order=None):
        super().__init__(message)
        self.order = order


class IntegratorStallError(RuntimeError):
    """Adaptive ODE integration collapsed before reaching the target.

    ``reached`` reports the abscissa attained before the failure.
    """

    def __init__(self, message, reached=None):
        super().__init__(message)
        self.reached = reached


class TailEstimateError(RuntimeError):
    """Analytic tail bound of a truncated integral exceeds the tolerance."""


class SpectralError(RuntimeError):
    """Eigenfunction or connection-coefficient computation failed."""
