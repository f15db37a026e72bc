"""Exception hierarchy shared by all rwlab modules."""


class RwlabError(Exception):
    """Base class for every error raised by rwlab."""


class DomainError(RwlabError, ValueError):
    """A coordinate lies outside the region where a map is defined."""


class ConfigError(RwlabError, ValueError):
    """Invalid or inconsistent configuration."""


class ConvergenceError(RwlabError, RuntimeError):
    """An iterative solver failed to converge within its cap."""


class ConditionViolation(RwlabError):
    """A structural condition on the background does not hold."""


class NumericalBlowUp(RwlabError, FloatingPointError):
    """Non-finite values appeared during time stepping."""

    def __init__(self, message, t=None):
        super().__init__(message)
        self.t = t


class ContractError(RwlabError, ValueError):
    """An operator was called with input violating its contract."""
