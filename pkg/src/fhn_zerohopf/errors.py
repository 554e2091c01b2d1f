"""Exception types shared across the package."""


class DomainError(ValueError):
    """Parameters fall outside the region where an object is defined."""

    def __init__(self, message, conditions=None):
        super().__init__(message)
        self.conditions = list(conditions or [])


class DegenerateFamily(DomainError):
    pass


class FirstOrderNotZero(DomainError):
    """Second-order averaging requested while the first-order average is nonzero."""


class QuadratureNotConverged(RuntimeError):
    pass


class IntegrationError(RuntimeError):
    pass


class StepSizeUnderflow(IntegrationError):
    pass


class MaxTimeExceeded(IntegrationError):
    pass


class NoReturn(IntegrationError):
    pass


class TangentialCrossing(IntegrationError):
    pass


class ShootingDiverged(RuntimeError):
    def __init__(self, message, residual=float("nan"), iterations=0):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations
