"""Exception hierarchy shared by all modules."""


class AttractorLabError(Exception):
    """Base class for every error raised by the package."""


class ConfigurationError(AttractorLabError, ValueError):
    """Invalid domain, basis, config file or experiment set-up."""


class ArgumentError(AttractorLabError, ValueError):
    """An argument is outside the range an operation accepts."""


class ModelError(AttractorLabError, ValueError):
    """A damping or nonlinearity description is malformed."""


class StepError(AttractorLabError, RuntimeError):
    """Newton iteration of an implicit step did not converge."""

    def __init__(self, message, residual=None, t=None):
        super().__init__(message)
        self.residual = residual
        self.t = t


class DivergenceError(AttractorLabError, RuntimeError):
    """The discrete state became non-finite or the energy blew up."""

    def __init__(self, message, t=None, record=None):
        super().__init__(message)
        self.t = t
        self.record = record


class SimulationError(AttractorLabError, RuntimeError):
    """A step failure propagated out of ``simulate`` with its failure time."""

    def __init__(self, message, t=None, record=None, cause=None):
        super().__init__(message)
        self.t = t
        self.record = record
        self.cause = cause


class EquilibriumError(AttractorLabError, RuntimeError):
    def __init__(self, message, residual=None, iterations=None):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations


class RangeError(AttractorLabError, IndexError):
    """Requested time lies outside a trajectory record."""


class UndefinedRatioError(AttractorLabError, ZeroDivisionError):
    """Continuous-dependence ratio requested for identical initial data."""


class ExperimentError(AttractorLabError, RuntimeError):
    def __init__(self, message, details=None):
        super().__init__(message)
        self.details = details or {}


class ReportError(AttractorLabError, RuntimeError):
    def __init__(self, message, problems=None):
        super().__init__(message)
        self.problems = list(problems or [])


class PreconditionError(AttractorLabError, ValueError):
    """An experiment's modelling precondition (such as (G2)) does not hold."""
