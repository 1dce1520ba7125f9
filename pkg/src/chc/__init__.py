"""Computational Hybrid Controller: partition, transition graph, reachability
sector, LP fine-tuner and the switching supervisor."""

from chc import benchmarks  # noqa: F401  (registers the named pendulum mode)
from chc.errors import (
    BudgetError,
    CHCError,
    ConfigurationError,
    DomainViolationError,
    IntegrationError,
    ModelDefinitionError,
    ReachabilityError,
    ScenarioParseError,
)

__all__ = [
    "BudgetError",
    "CHCError",
    "ConfigurationError",
    "DomainViolationError",
    "IntegrationError",
    "ModelDefinitionError",
    "ReachabilityError",
    "ScenarioParseError",
]
