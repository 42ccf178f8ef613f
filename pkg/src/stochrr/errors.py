"""Exception hierarchy shared by all stochrr modules."""


class StochRRError(Exception):
    """Base class for errors raised by stochrr."""


class DomainError(StochRRError, ValueError):
    """An argument lies outside the domain of an operation."""


class NodeSingularity(StochRRError):
    """The wave function vanishes, so its log-gradient is undefined."""

    def __init__(self, message, point=None):
        super().__init__(message)
        self.point = point


class StencilOutOfDomain(StochRRError):
    """A finite-difference stencil leaves the region where a field is defined."""


class EnsembleCollapse(StochRRError):
    """Every path of an ensemble was rejected."""


class NumericError(StochRRError, ArithmeticError):
    """A non-finite value appeared during a computation."""


class StabilityError(StochRRError):
    """An explicit time step violates its stability bound."""

    def __init__(self, message, suggested_dt=None):
        super().__init__(message)
        self.suggested_dt = suggested_dt


class InsufficientStatistics(StochRRError):
    """Too few samples to form a requested estimate."""


class RunawayDetected(StochRRError):
    """A third-order radiation-reaction integration ran away.

    This is an expected outcome of forward LAD integration, so the partial
    trajectory is attached for inspection.
    """

    def __init__(self, message, tau=None, trajectory=None):
        super().__init__(message)
        self.tau = tau
        self.trajectory = trajectory


class DegenerateVelocity(StochRRError):
    """The real part of the complex velocity is null or spacelike."""


class ConvergenceError(StochRRError):
    """A quadrature failed its refinement check."""


class ConfigError(StochRRError):
    """A scenario configuration is invalid.

    ``location`` names the offending key, for example ``"grid.dtau"``.
    """

    def __init__(self, message, location=None):
        super().__init__(f"{location}: {message}" if location else message)
        self.location = location


class IntegratorAuditWarning(UserWarning):
    """An ODE integration exceeded its step-size or constraint-drift budget."""
