"""Exception hierarchy shared by all modules."""


class FlowError(Exception):
    """Base class for every error raised by this package."""


class ArgumentError(FlowError, ValueError):
    """Invalid argument: bad sign, wrong dimension, time outside the horizon."""


class InconsistentBoundError(FlowError):
    """A certified lower bound on inf(phi + psi) is violated by a data point."""


class InadmissibleDataError(FlowError):
    """Cauchy data (x0, v0) does not lie on the graph of the subdifferential."""

    def __init__(self, message, residual):
        super().__init__(f"{message} (residual={residual:.3e})")
        self.residual = residual


class IntegrationFailure(FlowError):
    """The integrator could not reach the horizon.

    ``partial`` holds the trajectory computed up to the failure point (or
    ``None`` if nothing was produced).
    """

    def __init__(self, message, partial=None):
        super().__init__(message)
        self.partial = partial


class StiffnessError(IntegrationFailure):
    """Step size underflow."""


class NonConvergenceError(FlowError):
    """The mollified sequence did not reach the target Cauchy gap."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or []


class ConfigError(FlowError):
    """Experiment configuration could not be parsed or validated."""
