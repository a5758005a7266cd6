"""Exception hierarchy shared by the numerical modules."""


class G2InstantonError(Exception):
    """Base class for all package errors."""


class NumericFailure(G2InstantonError):
    """A computation could not complete; the CLI maps it to exit status 1."""


class ConfigError(G2InstantonError):
    """Invalid run configuration; the CLI maps it to exit status 2."""


class NonPositiveMetric(NumericFailure):
    pass


class DegenerateFrame(NumericFailure):
    pass


class SeriesOrderUnavailable(NumericFailure):
    pass


class BlowUp(NumericFailure):
    def __init__(self, t, message=None):
        self.t = t
        super().__init__(message or f"solution left the admissible region at t={t!r}")


class StepFailure(NumericFailure):
    def __init__(self, t, message=None):
        self.t = t
        super().__init__(message or f"integrator failed at t={t!r}")


class NoBracket(NumericFailure):
    pass


class NoConvergence(NumericFailure):
    pass


class ConditionViolated(NumericFailure):
    def __init__(self, message, h=None, residual=None):
        self.h = h
        self.residual = residual
        super().__init__(message)


class SingularRecursion(NumericFailure):
    def __init__(self, h):
        self.h = h
        super().__init__(f"linear solve at series order {h} is singular")


class OutOfTrust(NumericFailure):
    pass


class SingularTime(NumericFailure):
    pass


class WrongBundle(NumericFailure):
    pass


class DenominatorVanishes(NumericFailure):
    def __init__(self, t):
        self.t = t
        super().__init__(f"quadrature denominator 4a^2-(b-r0^3)^2 is not positive at t={t!r}")


class EigenSolveFailure(NumericFailure):
    pass


class NoContraction(NumericFailure):
    def __init__(self, history):
        self.history = list(history)
        super().__init__(f"Picard iterates do not contract: sup-distances {self.history}")
