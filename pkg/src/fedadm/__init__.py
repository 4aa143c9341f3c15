"""Profit-driven admission control for service federation between two domains.

Builds the exact MDP of the system, solves it by policy iteration for the
optimal-policy bound, trains tabular Q-learning and R-learning agents against
a seeded simulator, and orchestrates the experiment sweeps.
"""

from .model import (
    Action,
    EventKind,
    EventMark,
    State,
    SystemConfig,
    TrafficClass,
    default_config,
    load_config,
)

__all__ = [
    "Action",
    "EventKind",
    "EventMark",
    "State",
    "SystemConfig",
    "TrafficClass",
    "default_config",
    "load_config",
]
