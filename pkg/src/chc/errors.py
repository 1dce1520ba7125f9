"""Exception hierarchy shared by every stage of the synthesis pipeline."""


class CHCError(Exception):
    """Base class for all errors raised by this package."""


class DomainViolationError(CHCError, ValueError):
    """A state lies outside the bounded domain of the model or partition."""


class ModelDefinitionError(CHCError, ValueError):
    """The hybrid model is inconsistent (e.g. no mode matches a binary input)."""


class IntegrationError(CHCError, ArithmeticError):
    """Numerical integration produced a non-finite state."""


class ConfigurationError(CHCError, ValueError):
    """Invalid user configuration (seed, destination, thresholds, ...)."""


class BudgetError(CHCError):
    """A symbolic-input family is larger than the configured budget."""


class ReachabilityError(CHCError):
    """The current element has no successor in the reachability sector.

    Raised when Post(RS, q) is empty, i.e. the reachability condition for
    steering the system to the set point does not hold from ``q``.
    """


class ScenarioParseError(CHCError, ValueError):
    """A scenario or archive file could not be parsed."""
