"""Admission policies: greedy baseline, tabular Q-learning and R-learning.

Both learners act on every environment transition, including the forced
NO_ACTION in departure states, and decay their learning/exploration rates
once at the start of each episode.  R-learning additionally tracks the
average reward per step (rho) and updates it only on greedy steps, which
keeps exploration noise out of the estimate.
"""
from __future__ import annotations

from dataclasses import dataclass
from random import Random
from typing import Iterable, Sequence

from .errors import GapUndefinedError
from .env import Env, derive_seed, run_policy
from .mdp import StateSpace
from .model import (
    Action,
    EventKind,
    State,
    SystemConfig,
    used_capacity,
    valid_actions,
)


def greedy_action(state: State, config: SystemConfig) -> Action:
    """Accept when the consumer domain fits the demand, else federate, else reject."""
    kind, i = state.event
    if kind == EventKind.DEPARTURE:
        return Action.NO_ACTION
    w = config.classes[i].resource_demand
    if config.local_capacity - used_capacity(state.local, config) >= w:
        return Action.ACCEPT
    if config.provider_capacity - used_capacity(state.federated, config) >= w:
        return Action.FEDERATE
    return Action.REJECT


def greedy_policy(space: StateSpace, config: SystemConfig) -> dict:
    """The greedy baseline materialized over a full state space."""
    return {s: greedy_action(s, config) for s in space.states}


def reward_bounds(config: SystemConfig) -> tuple[float, float]:
    """Smallest and largest immediate reward any action can earn."""
    costs = config.federation_costs()
    nets = [c.revenue - costs[i] for i, c in enumerate(config.classes)]
    lo = min(0.0, min(nets))
    hi = max(0.0, max(c.revenue for c in config.classes))
    return lo, hi


class QTable:
    """Values for legal (state, action) pairs; unvisited pairs read as 0.

    Rows are created on first touch with a zero for every legal action, so the
    table never holds an illegal pair.
    """

    def __init__(self, config: SystemConfig):
        self.config = config
        self.reward_range = reward_bounds(config)
        self._rows: dict[State, dict[Action, float]] = {}
        self._legal: dict[State, tuple[Action, ...]] = {}

    def legal(self, state: State) -> tuple[Action, ...]:
        acts = self._legal.get(state)
        if acts is None:
            acts = valid_actions(state, self.config)
            self._legal[state] = acts
        return acts

    def row(self, state: State) -> dict[Action, float]:
        row = self._rows.get(state)
        if row is None:
            row = {a: 0.0 for a in self.legal(state)}
            self._rows[state] = row
        return row

    def value(self, state: State, action: Action) -> float:
        row = self._rows.get(state)
        return row[action] if row is not None else 0.0

    def max_value(self, state: State) -> float:
        row = self._rows.get(state)
        return max(row.values()) if row is not None else 0.0

    def greedy(self, state: State) -> Action:
        """Argmax over legal actions; ties keep the preference order."""
        row = self._rows.get(state)
        if row is None:
            return self.legal(state)[0]
        best_a = None
        best_q = -float("inf")
        for a, q in row.items():
            if q > best_q:
                best_q = q
                best_a = a
        return best_a

    def states(self) -> Iterable[State]:
        return self._rows.keys()

    def __len__(self) -> int:
        return len(self._rows)

    def readout_policy(self) -> dict:
        """Greedy action per visited state."""
        return {s: self.greedy(s) for s in self._rows}

    def max_abs_value(self) -> float:
        return max(
            (abs(q) for row in self._rows.values() for q in row.values()),
            default=0.0,
        )


def epsilon_greedy(qtable: QTable, state: State, epsilon: float, rng: Random) -> Action:
    """Uniform draw over the legal actions with probability epsilon, else argmax."""
    acts = qtable.legal(state)
    if len(acts) == 1:
        return acts[0]
    if epsilon > 0.0 and rng.random() < epsilon:
        return acts[rng.randrange(len(acts))]
    return qtable.greedy(state)


def q_update(
    qtable: QTable,
    state: State,
    action: Action,
    reward: float,
    next_state: State,
    alpha: float,
    gamma: float,
) -> float:
    """One Q-learning update; returns the new Q[state, action]."""
    row = qtable.row(state)
    target = reward + gamma * qtable.max_value(next_state)
    row[action] = (1.0 - alpha) * row[action] + alpha * target
    return row[action]


def r_update(
    qtable: QTable,
    state: State,
    action: Action,
    reward: float,
    next_state: State,
    alpha: float,
    beta: float,
    rho: float,
) -> float:
    """One R-learning update; returns the (possibly unchanged) rho.

    rho moves only when the just-updated Q[state, action] is the exact row
    maximum, i.e. the taken action is greedy in hindsight.  The quantity fed
    into the rho average is clamped to the attainable reward range: the
    long-run average lives inside that range, so the clamp is inactive at
    equilibrium, but it keeps the coupled Q/rho recursion from running away
    at the large early learning rates, where stale bootstrapped maxima
    otherwise feed the estimate back into itself.
    """
    row = qtable.row(state)
    next_max = qtable.max_value(next_state)
    row[action] = (1.0 - alpha) * row[action] + alpha * ((reward - rho) + next_max)
    row_max = max(row.values())
    if row[action] == row_max:
        lo, hi = qtable.reward_range
        sample = reward - row_max + next_max
        if sample < lo:
            sample = lo
        elif sample > hi:
            sample = hi
        rho = (1.0 - beta) * rho + beta * sample
    return rho


@dataclass(frozen=True)
class LearningParams:
    """Hyperparameters shared by both learners.

    ``episode_unit`` selects what one loop iteration means.  With "demands"
    (default) the agent acts and updates on arrival states only, m counts
    decided demands, and departures resolve inside the environment between
    decisions; the average-reward estimate then tracks profit per demand.
    With "steps" the agent also consumes departure states with the forced
    NO_ACTION, updating on every transition with reward 0.
    """

    episodes: int = 200
    steps_per_episode: int = 4000
    learning_rate: float = 0.9
    exploration: float = 0.9
    discount: float = 0.9
    rho_rate: float = 0.9
    decay: float = 0.99
    episode_unit: str = "demands"

    def __post_init__(self):
        if self.episodes < 1 or self.steps_per_episode < 0:
            raise ValueError("episodes must be >= 1 and steps_per_episode >= 0")
        if not 0.0 < self.learning_rate <= 1.0:
            raise ValueError(f"learning_rate must be in (0, 1], got {self.learning_rate}")
        if not 0.0 <= self.exploration <= 1.0:
            raise ValueError(f"exploration must be in [0, 1], got {self.exploration}")
        if not 0.0 <= self.discount < 1.0:
            raise ValueError(f"discount must be in [0, 1), got {self.discount}")
        if not 0.0 < self.rho_rate <= 1.0:
            raise ValueError(f"rho_rate must be in (0, 1], got {self.rho_rate}")
        if self.episode_unit not in ("steps", "demands"):
            raise ValueError(f"episode_unit must be 'steps' or 'demands', got {self.episode_unit}")


@dataclass(frozen=True)
class CurveSpec:
    """Held-out evaluation protocol for per-episode learning curves."""

    seeds: tuple[int, ...]
    demands: int = 5000
    every: int = 1
    reference_profit: float | None = None


@dataclass
class EpisodePoint:
    episode: int  # 1-based count of completed episodes
    alpha: float
    epsilon: float
    rho: float | None = None
    average_profit: float | None = None
    optimality_gap: float | None = None


@dataclass
class TrainResult:
    """Training artifacts.

    ``rho_series`` holds the average-reward estimate averaged within each
    episode (one value per episode); the raw end-of-episode value is on
    ``curve[i].rho``.  ``snapshots`` maps an episode count to the greedy
    readout frozen at that point.
    """

    policy: dict
    qtable: QTable
    curve: list[EpisodePoint]
    rho_series: list[float] | None
    snapshots: dict[int, dict]
    seed: int
    params: LearningParams


def _train(
    config: SystemConfig,
    params: LearningParams,
    seed: int,
    algo: str,
    curve: CurveSpec | None,
    snapshot_episodes: Sequence[int],
) -> TrainResult:
    qtable = QTable(config)
    env = Env(config)
    explore_rng = Random(derive_seed(seed, "explore"))
    alpha = params.learning_rate
    epsilon = params.exploration
    beta = params.rho_rate
    gamma = params.discount
    rho = 0.0
    rho_series: list[float] | None = [] if algo == "r" else None
    curve_points: list[EpisodePoint] = []
    snapshots: dict[int, dict] = {}
    wanted_snapshots = set(snapshot_episodes)
    per_demand = params.episode_unit == "demands"
    for ep in range(params.episodes):
        alpha *= params.decay
        epsilon *= params.decay
        if algo == "r":
            beta *= params.decay
        state = env.reset(derive_seed(seed, "episode", ep))
        rho_sum = 0.0
        for _ in range(params.steps_per_episode):
            action = epsilon_greedy(qtable, state, epsilon, explore_rng)
            next_state, reward = env.step(action)
            if per_demand:
                # departures in between are not decision points for the agent
                while not next_state.is_arrival:
                    next_state, _ = env.step(Action.NO_ACTION)
            if algo == "q":
                q_update(qtable, state, action, reward, next_state, alpha, gamma)
            else:
                rho = r_update(qtable, state, action, reward, next_state, alpha, beta, rho)
                rho_sum += rho
            state = next_state
        episode = ep + 1
        if rho_series is not None:
            steps = max(params.steps_per_episode, 1)
            rho_series.append(rho_sum / steps if params.steps_per_episode else rho)
        if episode in wanted_snapshots:
            snapshots[episode] = qtable.readout_policy()
        if curve is not None and episode % curve.every == 0:
            report = evaluate_policy(
                qtable.readout_policy(), config, curve.demands, curve.seeds,
                reference=curve.reference_profit,
            )
            curve_points.append(EpisodePoint(
                episode, alpha, epsilon,
                rho=rho if algo == "r" else None,
                average_profit=report.average_profit,
                optimality_gap=report.optimality_gap,
            ))
        else:
            curve_points.append(EpisodePoint(
                episode, alpha, epsilon, rho=rho if algo == "r" else None,
            ))
    return TrainResult(
        policy=qtable.readout_policy(),
        qtable=qtable,
        curve=curve_points,
        rho_series=rho_series,
        snapshots=snapshots,
        seed=seed,
        params=params,
    )


def q_learning_train(
    config: SystemConfig,
    params: LearningParams,
    seed: int,
    curve: CurveSpec | None = None,
    snapshot_episodes: Sequence[int] = (),
) -> TrainResult:
    """Tabular Q-learning with epsilon-greedy exploration and per-episode decay."""
    return _train(config, params, seed, "q", curve, snapshot_episodes)


def r_learning_train(
    config: SystemConfig,
    params: LearningParams,
    seed: int,
    curve: CurveSpec | None = None,
    snapshot_episodes: Sequence[int] = (),
) -> TrainResult:
    """Tabular average-reward R-learning; rho persists across episodes."""
    return _train(config, params, seed, "r", curve, snapshot_episodes)


@dataclass
class EvalReport:
    average_profit: float
    optimality_gap: float | None
    accepted: tuple[int, ...]
    federated: tuple[int, ...]
    rejected: tuple[int, ...]
    num_demands: int
    seeds: tuple[int, ...]
    per_seed_profits: tuple[float, ...]
    fallback_decisions: int


def policy_with_fallback(policy_map, config: SystemConfig, counter: list | None = None):
    """Callable policy: table lookup, greedy baseline on unknown states."""

    def fn(state: State) -> Action:
        action = policy_map.get(state)
        if action is None:
            if counter is not None:
                counter[0] += 1
            return greedy_action(state, config)
        return action

    return fn


def completed_policy(policy_map, space: StateSpace, config: SystemConfig) -> dict:
    """Extend a partial policy to the full space with the greedy fallback."""
    out = {}
    for s in space.states:
        action = policy_map.get(s)
        out[s] = action if action is not None else greedy_action(s, config)
    return out


def evaluate_policy(
    policy,
    config: SystemConfig,
    num_demands: int,
    seeds: Sequence[int],
    reference: float | None = None,
) -> EvalReport:
    """Simulated average profit over a fixed seed list, exploration off.

    Partial policies (mappings) fall back to the greedy action on states they
    do not cover; the number of fallback decisions is reported.  ``reference``
    is the profit of the bound policy evaluated under the same protocol; the
    optimality gap is (reference - profit) / reference.
    """
    counter = [0]
    if callable(policy):
        fn = policy
    else:
        fn = policy_with_fallback(policy, config, counter)
    n = config.num_classes
    accepted = [0] * n
    federated = [0] * n
    rejected = [0] * n
    profits = []
    for seed in seeds:
        result = run_policy(fn, config, num_demands, seed, collect_outcomes=False)
        profits.append(result.profit_per_demand)
        for i in range(n):
            accepted[i] += result.counts.accepted[i]
            federated[i] += result.counts.federated[i]
            rejected[i] += result.counts.rejected[i]
    average = sum(profits) / len(profits)
    gap = None
    if reference is not None:
        if reference <= 0:
            raise GapUndefinedError(f"reference profit {reference} is not positive")
        gap = (reference - average) / reference
    return EvalReport(
        average_profit=average,
        optimality_gap=gap,
        accepted=tuple(accepted),
        federated=tuple(federated),
        rejected=tuple(rejected),
        num_demands=num_demands,
        seeds=tuple(seeds),
        per_seed_profits=tuple(profits),
        fallback_decisions=counter[0],
    )
