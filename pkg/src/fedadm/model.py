"""Core domain model: traffic classes, system configuration, states and actions.

A consumer domain with ``local_capacity`` resource units serves demands from a
set of traffic classes.  A peering provider domain offers a federation quota of
``provider_capacity`` units.  Each arriving demand is accepted locally (earning
the class revenue), federated to the provider (revenue minus federation cost),
or rejected.  Departures free the resources held by the leaving demand.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, replace
from enum import IntEnum
from pathlib import Path
from typing import Callable, Mapping, NamedTuple, Union

from .errors import ConfigError, InvalidActionError, InvalidStateError


class Action(IntEnum):
    ACCEPT = 0
    FEDERATE = 1
    REJECT = 2
    NO_ACTION = 3


# Fixed preference order used wherever ties between equally valued actions
# must be broken deterministically.
ACTION_PRIORITY = (Action.ACCEPT, Action.FEDERATE, Action.REJECT, Action.NO_ACTION)


class EventKind(IntEnum):
    ARRIVAL = 0
    DEPARTURE = 1


class EventMark(NamedTuple):
    """The single arrival or departure event attached to a state."""

    kind: EventKind
    class_index: int


class State(NamedTuple):
    """Per-class occupancy of both domains plus the event that just occurred.

    ``local[i]`` / ``federated[i]`` count the active demands of class ``i``
    deployed in the consumer / provider domain.
    """

    local: tuple[int, ...]
    federated: tuple[int, ...]
    event: EventMark

    @property
    def is_arrival(self) -> bool:
        return self.event.kind == EventKind.ARRIVAL


Policy = Mapping[State, Action]
PolicyLike = Union[Policy, Callable[[State], Action]]


@dataclass(frozen=True)
class TrafficClass:
    """One demand class: Poisson arrivals, exponential lifetimes, flat pricing."""

    index: int
    arrival_rate: float
    departure_rate: float
    resource_demand: int
    revenue: float
    federation_cost: float

    def __post_init__(self):
        if self.index < 0:
            raise ConfigError(f"class index must be >= 0, got {self.index}")
        if not self.arrival_rate > 0:
            raise ConfigError(f"arrival_rate must be > 0, got {self.arrival_rate}")
        if not self.departure_rate > 0:
            raise ConfigError(f"departure_rate must be > 0, got {self.departure_rate}")
        if not isinstance(self.resource_demand, int) or self.resource_demand < 1:
            raise ConfigError(
                f"resource_demand must be an integer >= 1, got {self.resource_demand!r}"
            )
        if self.revenue < 0:
            raise ConfigError(f"revenue must be >= 0, got {self.revenue}")
        if self.federation_cost < 0:
            raise ConfigError(f"federation_cost must be >= 0, got {self.federation_cost}")


@dataclass(frozen=True)
class SystemConfig:
    """Capacities, traffic classes, and the two sweep multipliers.

    ``load_scale`` multiplies every arrival rate and ``cost_scale`` every
    federation cost.  Both are applied lazily by the accessors below so a
    single base configuration drives all experiment sweeps.  ``cost_scale``
    never affects action legality, only the federate reward.
    """

    local_capacity: int
    provider_capacity: int
    classes: tuple[TrafficClass, ...]
    load_scale: float = 1.0
    cost_scale: float = 1.0

    def __post_init__(self):
        if not isinstance(self.local_capacity, int) or self.local_capacity < 0:
            raise ConfigError(f"local_capacity must be an integer >= 0, got {self.local_capacity!r}")
        if not isinstance(self.provider_capacity, int) or self.provider_capacity < 0:
            raise ConfigError(
                f"provider_capacity must be an integer >= 0, got {self.provider_capacity!r}"
            )
        if not self.classes:
            raise ConfigError("at least one traffic class is required")
        object.__setattr__(self, "classes", tuple(self.classes))
        for i, cls in enumerate(self.classes):
            if cls.index != i:
                raise ConfigError(f"class at position {i} carries index {cls.index}")
        if not self.load_scale > 0:
            raise ConfigError(f"load_scale must be > 0, got {self.load_scale}")
        if self.cost_scale < 0:
            raise ConfigError(f"cost_scale must be >= 0, got {self.cost_scale}")

    @property
    def num_classes(self) -> int:
        return len(self.classes)

    def weights(self) -> tuple[int, ...]:
        return tuple(c.resource_demand for c in self.classes)

    def arrival_rates(self) -> tuple[float, ...]:
        """Effective (scaled) arrival rates."""
        return tuple(self.load_scale * c.arrival_rate for c in self.classes)

    def departure_rates(self) -> tuple[float, ...]:
        return tuple(c.departure_rate for c in self.classes)

    def federation_costs(self) -> tuple[float, ...]:
        """Effective (scaled) per-demand federation costs."""
        return tuple(self.cost_scale * c.federation_cost for c in self.classes)

    def total_arrival_rate(self) -> float:
        return sum(self.arrival_rates())

    def with_local_capacity(self, lc: int) -> "SystemConfig":
        return replace(self, local_capacity=lc)

    def with_load_scale(self, scale: float) -> "SystemConfig":
        return replace(self, load_scale=scale)

    def with_cost_scale(self, scale: float) -> "SystemConfig":
        return replace(self, cost_scale=scale)


def used_capacity(counts: tuple[int, ...], config: SystemConfig) -> int:
    """Resource units held by the given per-class demand counts."""
    if len(counts) != config.num_classes:
        raise ConfigError(
            f"count vector has {len(counts)} entries for {config.num_classes} classes"
        )
    return sum(n * c.resource_demand for n, c in zip(counts, config.classes))


def check_state(state: State, config: SystemConfig) -> None:
    """Raise InvalidStateError unless ``state`` satisfies all invariants."""
    n = config.num_classes
    if len(state.local) != n or len(state.federated) != n:
        raise InvalidStateError(f"occupancy vectors do not match {n} classes: {state}")
    if any(x < 0 for x in state.local) or any(x < 0 for x in state.federated):
        raise InvalidStateError(f"negative occupancy: {state}")
    if used_capacity(state.local, config) > config.local_capacity:
        raise InvalidStateError(f"local capacity exceeded: {state}")
    if used_capacity(state.federated, config) > config.provider_capacity:
        raise InvalidStateError(f"provider quota exceeded: {state}")
    kind, i = state.event
    if not 0 <= i < n:
        raise InvalidStateError(f"event class {i} out of range: {state}")
    if kind == EventKind.DEPARTURE and state.local[i] + state.federated[i] < 1:
        raise InvalidStateError(f"departure of class {i} with no active demand: {state}")


def is_valid_state(state: State, config: SystemConfig) -> bool:
    try:
        check_state(state, config)
    except InvalidStateError:
        return False
    return True


def valid_actions(state: State, config: SystemConfig) -> tuple[Action, ...]:
    """Legal actions for ``state``, in deterministic preference order.

    Departure states admit only NO_ACTION.  Arrival states always admit
    REJECT; ACCEPT and FEDERATE require enough free capacity in the
    respective domain for the arriving class.
    """
    kind, i = state.event
    if kind == EventKind.DEPARTURE:
        return (Action.NO_ACTION,)
    w = config.classes[i].resource_demand
    acts = []
    if config.local_capacity - used_capacity(state.local, config) >= w:
        acts.append(Action.ACCEPT)
    if config.provider_capacity - used_capacity(state.federated, config) >= w:
        acts.append(Action.FEDERATE)
    acts.append(Action.REJECT)
    return tuple(acts)


def apply_action(
    state: State, action: Action, config: SystemConfig
) -> tuple[tuple[int, ...], tuple[int, ...], float]:
    """Occupancy and immediate reward after the agent's decision.

    The decision takes effect before the next event is drawn.  NO_ACTION
    leaves the occupancy untouched here; the pending departure is resolved by
    the transition law / simulator step that consumes the state.
    """
    if action not in valid_actions(state, config):
        raise InvalidActionError(f"action {action.name} is not legal in {state}")
    kind, i = state.event
    if kind == EventKind.DEPARTURE:
        return state.local, state.federated, 0.0
    if action == Action.REJECT:
        return state.local, state.federated, 0.0
    cls = config.classes[i]
    if action == Action.ACCEPT:
        local = state.local[:i] + (state.local[i] + 1,) + state.local[i + 1 :]
        return local, state.federated, cls.revenue
    # FEDERATE
    federated = state.federated[:i] + (state.federated[i] + 1,) + state.federated[i + 1 :]
    return state.local, federated, cls.revenue - config.cost_scale * cls.federation_cost


# --- configuration files -----------------------------------------------------

def config_to_dict(config: SystemConfig) -> dict:
    return {
        "lc": config.local_capacity,
        "pc": config.provider_capacity,
        "load_scale": config.load_scale,
        "cost_scale": config.cost_scale,
        "classes": [
            {
                "lambda": c.arrival_rate,
                "mu": c.departure_rate,
                "w": c.resource_demand,
                "r": c.revenue,
                "phi": c.federation_cost,
            }
            for c in config.classes
        ],
    }


def config_from_dict(data: dict) -> SystemConfig:
    try:
        classes = tuple(
            TrafficClass(
                index=i,
                arrival_rate=float(entry["lambda"]),
                departure_rate=float(entry["mu"]),
                resource_demand=int(entry["w"]),
                revenue=float(entry["r"]),
                federation_cost=float(entry["phi"]),
            )
            for i, entry in enumerate(data["classes"])
        )
        return SystemConfig(
            local_capacity=int(data["lc"]),
            provider_capacity=int(data["pc"]),
            classes=classes,
            load_scale=float(data.get("load_scale", 1.0)),
            cost_scale=float(data.get("cost_scale", 1.0)),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"malformed config: {exc!r}") from exc


def load_config(path: str | Path) -> SystemConfig:
    try:
        data = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return config_from_dict(data)


def save_config(config: SystemConfig, path: str | Path) -> None:
    Path(path).write_text(json.dumps(config_to_dict(config), indent=2) + "\n")


def config_digest(config: SystemConfig) -> str:
    """Short stable hash identifying an effective configuration."""
    canonical = json.dumps(config_to_dict(config), sort_keys=True)
    return hashlib.sha256(canonical.encode()).hexdigest()[:16]


def default_config() -> SystemConfig:
    """Two-class default setting used by the bundled experiments.

    Class 0 is short-lived and high-revenue, class 1 long-lived and cheap;
    together they oversubscribe the local capacity, so admission decisions
    matter.
    """
    return SystemConfig(
        local_capacity=30,
        provider_capacity=20,
        classes=(
            TrafficClass(0, arrival_rate=10.0, departure_rate=4.0, resource_demand=2,
                         revenue=100.0, federation_cost=30.0),
            TrafficClass(1, arrival_rate=5.0, departure_rate=0.5, resource_demand=4,
                         revenue=20.0, federation_cost=5.0),
        ),
    )
