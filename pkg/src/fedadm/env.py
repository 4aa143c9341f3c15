"""Seeded stochastic environment for the admission-control system.

Events are drawn by competing exponentials: after the agent's decision is
applied, the next event is an arrival of class ``j`` (rate ``load_scale *
lambda_j``) or a departure of class ``j`` (rate ``count_j * mu_j``), each with
probability proportional to its rate.  The per-step law of (next state,
reward) matches ``mdp.transition_distribution`` exactly; the chain oracle and
this simulator cross-validate each other.

Randomness comes from one ``random.Random`` (Mersenne Twister) stream seeded
at reset.  Each step consumes draws in a fixed order: the departure-domain
draw (departure states with demands in both domains only), the holding-time
draw, then the next-event draw.  Trajectories are therefore pure functions of
(seed, action sequence), portable across platforms.
"""
from __future__ import annotations

import hashlib
import json
from collections import deque
from dataclasses import dataclass
from random import Random
from typing import Callable, Mapping, NamedTuple

from .errors import IncompletePolicyError, InvalidActionError, LifecycleError
from .model import (
    Action,
    EventKind,
    EventMark,
    PolicyLike,
    State,
    SystemConfig,
    check_state,
)


def derive_seed(*parts) -> int:
    """Deterministic 63-bit seed from arbitrary labels.

    Used to split independent random streams per (experiment, sweep value,
    algorithm, repetition, ...) so results do not depend on scheduling order.
    """
    text = "\x1f".join(str(p) for p in parts)
    return int.from_bytes(hashlib.sha256(text.encode()).digest()[:8], "big") >> 1


@dataclass
class DemandOutcome:
    """Per-demand log record; end_time is None for rejected or still-active demands."""

    class_index: int
    decision: Action
    reward: float
    start_time: float
    end_time: float | None = None


class DecisionCounts(NamedTuple):
    accepted: tuple[int, ...]
    federated: tuple[int, ...]
    rejected: tuple[int, ...]

    @property
    def total(self) -> int:
        return sum(self.accepted) + sum(self.federated) + sum(self.rejected)


class RunResult(NamedTuple):
    profit_per_demand: float
    counts: DecisionCounts
    outcomes: list


class Env:
    """Single-threaded simulation handle; share nothing, seed explicitly."""

    def __init__(self, config: SystemConfig):
        self.config = config
        n = config.num_classes
        self._n = n
        self._lc = config.local_capacity
        self._pc = config.provider_capacity
        self._weights = config.weights()
        self._arr = config.arrival_rates()
        self._mus = config.departure_rates()
        self._lambda_total = sum(self._arr)
        costs = config.federation_costs()
        self._accept_reward = tuple(c.revenue for c in config.classes)
        self._federate_reward = tuple(
            c.revenue - costs[i] for i, c in enumerate(config.classes)
        )
        self._rng: Random | None = None
        self._l: list[int] = [0] * n
        self._f: list[int] = [0] * n
        self._used_l = 0
        self._used_f = 0
        self.clock = 0.0
        self.demands_seen = 0
        self.current: State | None = None
        # ("local" | "federated", class_index) resolved by the last step that
        # consumed a departure state; None otherwise.
        self.last_removal: tuple[str, int] | None = None

    def reset(self, seed: int) -> State:
        """Empty both domains and draw the first arrival class by rate share."""
        self._rng = Random(seed)
        self._l = [0] * self._n
        self._f = [0] * self._n
        self._used_l = 0
        self._used_f = 0
        self.clock = 0.0
        self.demands_seen = 1
        self.last_removal = None
        u = self._rng.random() * self._lambda_total
        acc = 0.0
        j = self._n - 1
        for k in range(self._n):
            acc += self._arr[k]
            if u < acc:
                j = k
                break
        self.current = State((0,) * self._n, (0,) * self._n, EventMark(EventKind.ARRIVAL, j))
        return self.current

    def jump_to(self, state: State) -> State:
        """Force the current state; diagnostic hook for distribution tests.

        Requires a prior reset (the random stream keeps running).
        """
        if self._rng is None:
            raise LifecycleError("jump_to before reset")
        check_state(state, self.config)
        self._l = list(state.local)
        self._f = list(state.federated)
        self._used_l = sum(n * w for n, w in zip(self._l, self._weights))
        self._used_f = sum(n * w for n, w in zip(self._f, self._weights))
        self.current = state
        self.last_removal = None
        return state

    def step(self, action: Action) -> tuple[State, float]:
        """Apply the action, then sample the next event with post-decision rates."""
        s = self.current
        if s is None or self._rng is None:
            raise LifecycleError("step before reset")
        rng = self._rng
        kind, i = s.event
        l, f = self._l, self._f
        reward = 0.0
        self.last_removal = None
        if kind == EventKind.ARRIVAL:
            if action == Action.ACCEPT:
                w = self._weights[i]
                if self._used_l + w > self._lc:
                    raise InvalidActionError(f"accept does not fit locally in {s}")
                l[i] += 1
                self._used_l += w
                reward = self._accept_reward[i]
            elif action == Action.FEDERATE:
                w = self._weights[i]
                if self._used_f + w > self._pc:
                    raise InvalidActionError(f"federate does not fit in the quota in {s}")
                f[i] += 1
                self._used_f += w
                reward = self._federate_reward[i]
            elif action != Action.REJECT:
                raise InvalidActionError(f"action {action.name} illegal in arrival state {s}")
        else:
            if action != Action.NO_ACTION:
                raise InvalidActionError(f"action {action.name} illegal in departure state {s}")
            li, fi = l[i], f[i]
            # The departing demand leaves the consumer or the provider domain
            # in proportion to where the class is currently deployed.
            if fi == 0:
                from_local = True
            elif li == 0:
                from_local = False
            else:
                from_local = rng.random() * (li + fi) < li
            if from_local:
                l[i] -= 1
                self._used_l -= self._weights[i]
                self.last_removal = ("local", i)
            else:
                f[i] -= 1
                self._used_f -= self._weights[i]
                self.last_removal = ("federated", i)
        # capacity safety invariant, checked on every step
        assert 0 <= self._used_l <= self._lc and 0 <= self._used_f <= self._pc
        mus = self._mus
        m_total = 0.0
        for j in range(self._n):
            k = l[j] + f[j]
            if k:
                m_total += k * mus[j]
        total = self._lambda_total + m_total
        self.clock += rng.expovariate(total)
        u = rng.random() * total
        acc = 0.0
        mark = None
        for j in range(self._n):
            acc += self._arr[j]
            if u < acc:
                mark = EventMark(EventKind.ARRIVAL, j)
                break
        if mark is None:
            for j in range(self._n):
                k = l[j] + f[j]
                if k:
                    acc += k * mus[j]
                    if u < acc:
                        mark = EventMark(EventKind.DEPARTURE, j)
                        break
        if mark is None:
            # float rounding put u at the very top of the range; take the
            # last event with positive rate
            for j in range(self._n - 1, -1, -1):
                if l[j] + f[j]:
                    mark = EventMark(EventKind.DEPARTURE, j)
                    break
            else:
                mark = EventMark(EventKind.ARRIVAL, self._n - 1)
        if mark.kind == EventKind.ARRIVAL:
            self.demands_seen += 1
        self.current = State(tuple(l), tuple(f), mark)
        return self.current, reward


def _as_policy_fn(policy: PolicyLike) -> Callable[[State], Action]:
    if callable(policy):
        return policy
    mapping: Mapping = policy

    def fn(state: State) -> Action:
        action = mapping.get(state)
        if action is None:
            raise IncompletePolicyError(f"policy has no action for {state}")
        return action

    return fn


def run_policy(
    policy: PolicyLike,
    config: SystemConfig,
    num_demands: int,
    seed: int,
    trace=None,
    collect_outcomes: bool = True,
) -> RunResult:
    """Simulate until ``num_demands`` arrivals have been decided.

    Departure states consume steps with the forced NO_ACTION but do not count
    toward the demand budget.  The profit per demand is computed exactly from
    the decision counts: sum of accepted revenue plus federated net revenue,
    divided by the number of demands.

    ``trace``, when given, receives one JSON line per step (step index,
    event clock, state, action, reward).
    """
    if num_demands < 1:
        raise ValueError("num_demands must be >= 1")
    pol = _as_policy_fn(policy)
    env = Env(config)
    state = env.reset(seed)
    n = config.num_classes
    accepted = [0] * n
    federated = [0] * n
    rejected = [0] * n
    outcomes: list[DemandOutcome] = []
    open_local: list[deque] = [deque() for _ in range(n)]
    open_fed: list[deque] = [deque() for _ in range(n)]
    acted = 0
    step_index = 0
    while acted < num_demands:
        now = env.clock
        acted_on = state
        if state.is_arrival:
            action = pol(state)
            pending = state.event.class_index
        else:
            action = Action.NO_ACTION
            pending = None
        state, reward = env.step(action)
        if trace is not None:
            kindv, classv = acted_on.event
            trace.write(json.dumps({
                "step": step_index,
                "clock": now,
                "local": list(acted_on.local),
                "federated": list(acted_on.federated),
                "event": f"{'arrival' if kindv == EventKind.ARRIVAL else 'departure'}:{classv}",
                "action": action.name.lower(),
                "reward": reward,
            }) + "\n")
        step_index += 1
        if pending is not None:
            i = pending
            acted += 1
            if action == Action.ACCEPT:
                accepted[i] += 1
                if collect_outcomes:
                    outcomes.append(DemandOutcome(i, action, reward, now))
                    open_local[i].append(len(outcomes) - 1)
            elif action == Action.FEDERATE:
                federated[i] += 1
                if collect_outcomes:
                    outcomes.append(DemandOutcome(i, action, reward, now))
                    open_fed[i].append(len(outcomes) - 1)
            else:
                rejected[i] += 1
                if collect_outcomes:
                    outcomes.append(DemandOutcome(i, action, reward, now))
        elif collect_outcomes and env.last_removal is not None:
            domain, j = env.last_removal
            dq = open_local[j] if domain == "local" else open_fed[j]
            if dq:
                outcomes[dq.popleft()].end_time = now
    costs = config.federation_costs()
    total = sum(
        accepted[i] * config.classes[i].revenue
        + federated[i] * (config.classes[i].revenue - costs[i])
        for i in range(n)
    )
    counts = DecisionCounts(tuple(accepted), tuple(federated), tuple(rejected))
    return RunResult(total / num_demands, counts, outcomes)
