"""Exact finite MDP built over the admission-control state space.

Enumerates every valid state, materializes per-(state, action) transition
rows from the competing-exponentials law, and evaluates any stationary policy
in closed form through the induced Markov chain.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, NamedTuple

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import (
    ConfigError,
    IncompletePolicyError,
    InvalidActionError,
    NonConvergenceError,
    TractabilityError,
)
from .model import (
    Action,
    EventKind,
    EventMark,
    Policy,
    State,
    SystemConfig,
    apply_action,
    config_digest,
    valid_actions,
)

DEFAULT_STATE_CEILING = 5_000_000

# Stationary-solve tolerances: stop power iteration when the L1 change per
# sweep is below SWEEP_TOL, accept the result when the true residual
# ||pi P - pi||_1 is below RESIDUAL_TOL.
SWEEP_TOL = 1e-12
RESIDUAL_TOL = 1e-10
ROW_SUM_TOL = 1e-9


class TransitionEntry(NamedTuple):
    next_state: State
    probability: float
    reward: float


@dataclass(frozen=True, eq=False)
class StateSpace:
    """All valid states for a configuration, with a dense stable indexing."""

    states: tuple[State, ...]
    index: dict

    def __len__(self) -> int:
        return len(self.states)

    def __iter__(self) -> Iterator[State]:
        return iter(self.states)

    def id_of(self, state: State) -> int:
        return self.index[state]

    def arrival_ids(self) -> np.ndarray:
        return np.array([i for i, s in enumerate(self.states) if s.is_arrival], dtype=np.int64)


def feasible_occupancies(capacity: int, weights: tuple[int, ...]) -> list[tuple[int, ...]]:
    """All count vectors whose total resource usage fits within ``capacity``."""
    out: list[tuple[int, ...]] = []

    def rec(i: int, remaining: int, prefix: tuple[int, ...]) -> None:
        if i == len(weights):
            out.append(prefix)
            return
        w = weights[i]
        for n in range(remaining // w + 1):
            rec(i + 1, remaining - n * w, prefix + (n,))

    rec(0, capacity, ())
    return out


def count_occupancies(capacity: int, weights: tuple[int, ...]) -> int:
    """Number of feasible count vectors, without materializing them."""
    ways = np.zeros(capacity + 1, dtype=np.int64)
    ways[0] = 1
    for w in weights:
        nxt = ways.copy()
        for c in range(w, capacity + 1):
            nxt[c] += nxt[c - w]
        ways = nxt
    return int(ways.sum())


def count_states(config: SystemConfig) -> int:
    """Exact state count for a configuration (arrival plus departure states)."""
    weights = config.weights()
    n = config.num_classes
    num_l = count_occupancies(config.local_capacity, weights)
    num_f = count_occupancies(config.provider_capacity, weights)
    total = num_l * num_f * n  # arrival marks
    for i in range(n):
        rest = weights[:i] + weights[i + 1 :]
        l_zero = count_occupancies(config.local_capacity, rest)
        f_zero = count_occupancies(config.provider_capacity, rest)
        total += num_l * num_f - l_zero * f_zero  # pairs where class i is present
    return total


def enumerate_states(
    config: SystemConfig, max_states: int = DEFAULT_STATE_CEILING
) -> StateSpace:
    """Enumerate every valid state in a stable, documented order.

    Order: local occupancies lexicographically, then provider occupancies,
    then arrival marks for class 0..n-1 followed by departure marks for the
    classes with at least one active demand.
    """
    total = count_states(config)
    if total > max_states:
        raise TractabilityError(
            f"state space has {total} states, above the ceiling of {max_states}"
        )
    weights = config.weights()
    n = config.num_classes
    arrivals = tuple(EventMark(EventKind.ARRIVAL, i) for i in range(n))
    departures = tuple(EventMark(EventKind.DEPARTURE, i) for i in range(n))
    states: list[State] = []
    for local in feasible_occupancies(config.local_capacity, weights):
        for federated in feasible_occupancies(config.provider_capacity, weights):
            for mark in arrivals:
                states.append(State(local, federated, mark))
            for i in range(n):
                if local[i] + federated[i] >= 1:
                    states.append(State(local, federated, departures[i]))
    assert len(states) == total
    return StateSpace(states=tuple(states), index={s: i for i, s in enumerate(states)})


def _event_expansion(
    local: tuple[int, ...], federated: tuple[int, ...], config: SystemConfig
) -> list[tuple[EventMark, float]]:
    """Next-event distribution given the post-decision occupancy.

    Competing exponentials: each event's probability is its rate over the
    total rate, where departures count one clock per active demand.
    """
    rates = config.arrival_rates()
    mus = config.departure_rates()
    total = sum(rates)
    dep_rates = []
    for j in range(config.num_classes):
        k = local[j] + federated[j]
        if k:
            rate = k * mus[j]
            dep_rates.append((j, rate))
            total += rate
    out = [(EventMark(EventKind.ARRIVAL, j), rates[j] / total) for j in range(config.num_classes)]
    out.extend((EventMark(EventKind.DEPARTURE, j), rate / total) for j, rate in dep_rates)
    return out


def _expand(state: State, action: Action, config: SystemConfig):
    """Reward and successor distribution for one (state, action) pair."""
    local, federated, reward = apply_action(state, action, config)
    if state.is_arrival:
        succ = [
            (State(local, federated, mark), p)
            for mark, p in _event_expansion(local, federated, config)
        ]
        return reward, succ
    # Departure state: the leaving demand is removed from the consumer or the
    # provider domain in proportion to where the class is deployed, and the
    # next event is drawn with the post-removal rates.
    i = state.event.class_index
    total_i = local[i] + federated[i]
    merged: dict[State, float] = {}
    branches = (
        (local[i] / total_i, local[:i] + (local[i] - 1,) + local[i + 1 :], federated),
        (federated[i] / total_i, local, federated[:i] + (federated[i] - 1,) + federated[i + 1 :]),
    )
    for weight, bl, bf in branches:
        if weight == 0.0:
            continue
        for mark, p in _event_expansion(bl, bf, config):
            ns = State(bl, bf, mark)
            merged[ns] = merged.get(ns, 0.0) + weight * p
    return 0.0, list(merged.items())


def transition_distribution(
    state: State, action: Action, config: SystemConfig
) -> list[TransitionEntry]:
    """Materialized transition row for one legal (state, action) pair.

    Probabilities sum to 1; zero-probability successors are omitted and
    coincident successors are merged.  The reward is a function of the state
    and action only, so it repeats on every entry.
    """
    reward, succ = _expand(state, action, config)
    return [TransitionEntry(ns, p, reward) for ns, p in succ]


class MdpTables(NamedTuple):
    """Flattened transition tensor over dense state ids.

    Pairs are grouped per state in action-priority order; pair ``k`` owns the
    successor slice ``succ_state[pair_succ_ptr[k]:pair_succ_ptr[k+1]]``.
    """

    state_pair_ptr: np.ndarray
    pair_action: np.ndarray
    pair_reward: np.ndarray
    pair_succ_ptr: np.ndarray
    succ_state: np.ndarray
    succ_prob: np.ndarray

    @property
    def num_states(self) -> int:
        return len(self.state_pair_ptr) - 1

    def pair_index(self, sid: int, action: Action) -> int:
        lo, hi = self.state_pair_ptr[sid], self.state_pair_ptr[sid + 1]
        for k in range(lo, hi):
            if self.pair_action[k] == action:
                return int(k)
        raise InvalidActionError(f"action {action.name} illegal in state id {sid}")


class Mdp:
    """State space plus lazily built, cached transition structure."""

    def __init__(self, config: SystemConfig, space: StateSpace | None = None,
                 max_states: int = DEFAULT_STATE_CEILING):
        self.config = config
        self.space = space if space is not None else enumerate_states(config, max_states)
        self._tables: MdpTables | None = None

    def row(self, state: State, action: Action) -> list[TransitionEntry]:
        return transition_distribution(state, action, self.config)

    def tables(self) -> MdpTables:
        if self._tables is None:
            self._tables = self._build_tables()
        return self._tables

    def _build_tables(self) -> MdpTables:
        config, index = self.config, self.space.index
        state_pair_ptr = [0]
        pair_action: list[int] = []
        pair_reward: list[float] = []
        pair_succ_ptr = [0]
        succ_state: list[int] = []
        succ_prob: list[float] = []
        for s in self.space.states:
            for a in valid_actions(s, config):
                reward, succ = _expand(s, a, config)
                pair_action.append(int(a))
                pair_reward.append(reward)
                for ns, p in succ:
                    succ_state.append(index[ns])
                    succ_prob.append(p)
                pair_succ_ptr.append(len(succ_state))
            state_pair_ptr.append(len(pair_action))
        return MdpTables(
            state_pair_ptr=np.asarray(state_pair_ptr, dtype=np.int64),
            pair_action=np.asarray(pair_action, dtype=np.int8),
            pair_reward=np.asarray(pair_reward, dtype=np.float64),
            pair_succ_ptr=np.asarray(pair_succ_ptr, dtype=np.int64),
            succ_state=np.asarray(succ_state, dtype=np.int64),
            succ_prob=np.asarray(succ_prob, dtype=np.float64),
        )

    def policy_pair_choice(self, policy: Policy) -> np.ndarray:
        """Per-state index into the pair arrays for a complete policy."""
        tables = self.tables()
        choice = np.empty(len(self.space), dtype=np.int64)
        for sid, state in enumerate(self.space.states):
            try:
                action = policy[state] if not callable(policy) else policy(state)
            except KeyError:
                raise IncompletePolicyError(f"policy does not cover state {state}") from None
            if action is None:
                raise IncompletePolicyError(f"policy does not cover state {state}")
            choice[sid] = tables.pair_index(sid, action)
        return choice


def _chain_from_choice(tables: MdpTables, choice: np.ndarray):
    """Row-stochastic chain (and per-state reward) for one pair per state."""
    starts = tables.pair_succ_ptr[choice]
    counts = tables.pair_succ_ptr[choice + 1] - starts
    indptr = np.concatenate(([0], np.cumsum(counts)))
    take = np.repeat(starts, counts) + (np.arange(indptr[-1]) - np.repeat(indptr[:-1], counts))
    matrix = sp.csr_matrix(
        (tables.succ_prob[take], tables.succ_state[take], indptr),
        shape=(tables.num_states, tables.num_states),
    )
    return matrix, tables.pair_reward[choice]


def induced_chain(policy: Policy, space: StateSpace, config: SystemConfig,
                  mdp: Mdp | None = None):
    """Markov chain induced by a fixed policy.

    Returns ``(P, r)`` where ``P`` is a sparse row-stochastic matrix over
    state ids and ``r[s]`` the reward earned when leaving state ``s``.
    """
    mdp = mdp if mdp is not None else Mdp(config, space)
    choice = mdp.policy_pair_choice(policy)
    return _chain_from_choice(mdp.tables(), choice)


def reachable_mask(P: sp.csr_matrix, start_ids: np.ndarray) -> np.ndarray:
    """States reachable from ``start_ids`` following positive-probability edges."""
    n = P.shape[0]
    mask = np.zeros(n, dtype=bool)
    stack = list(start_ids)
    mask[start_ids] = True
    indptr, indices = P.indptr, P.indices
    while stack:
        s = stack.pop()
        for t in indices[indptr[s]:indptr[s + 1]]:
            if not mask[t]:
                mask[t] = True
                stack.append(t)
    return mask


def stationary_distribution(
    P: sp.csr_matrix,
    sweep_tol: float = SWEEP_TOL,
    max_iters: int = 1_000_000,
    damping: float = 0.5,
) -> tuple[np.ndarray, float]:
    """Stationary distribution of an irreducible row-stochastic chain.

    Damped power iteration from the uniform vector; the damping keeps
    near-periodic chains converging without changing the fixed point.  Falls
    back to a direct sparse solve of ``(P^T - I) pi = 0`` with normalization
    when iteration stalls.  Returns ``(pi, residual)`` with the residual
    guaranteed at most RESIDUAL_TOL.
    """
    n = P.shape[0]
    if n == 1:
        return np.ones(1), 0.0
    PT = P.T.tocsr()
    pi = np.full(n, 1.0 / n)
    converged = False
    for _ in range(max_iters):
        nxt = damping * pi + (1.0 - damping) * (PT @ pi)
        diff = np.abs(nxt - pi).sum()
        pi = nxt
        if diff <= sweep_tol:
            converged = True
            break
    if converged:
        residual = float(np.abs(PT @ pi - pi).sum())
        if residual <= RESIDUAL_TOL:
            return pi, residual
    # Direct solve fallback: replace the first balance equation with the
    # normalization constraint.
    A = (PT - sp.identity(n, format="csr")).tolil()
    A[0, :] = 1.0
    b = np.zeros(n)
    b[0] = 1.0
    pi = spla.spsolve(A.tocsc(), b)
    pi = np.clip(pi, 0.0, None)
    pi /= pi.sum()
    residual = float(np.abs(PT @ pi - pi).sum())
    if residual > RESIDUAL_TOL:
        raise NonConvergenceError(
            f"stationary solve residual {residual:.3e} above {RESIDUAL_TOL}", residual
        )
    return pi, residual


def exact_average_profit(
    policy: Policy,
    space: StateSpace,
    config: SystemConfig,
    mdp: Mdp | None = None,
) -> float:
    """Long-run profit per demand of a policy, from the stationary chain.

    Expected reward per chain step divided by the stationary fraction of
    arrival states (each arrival state carries exactly one demand).  States
    unreachable from the empty system are excluded from the solve.
    """
    P, rewards = induced_chain(policy, space, config, mdp=mdp)
    zeros = (0,) * config.num_classes
    start_ids = np.array(
        [space.index[State(zeros, zeros, EventMark(EventKind.ARRIVAL, j))]
         for j in range(config.num_classes)],
        dtype=np.int64,
    )
    mask = reachable_mask(P, start_ids)
    ids = np.flatnonzero(mask)
    sub = P[ids][:, ids]
    pi, _ = stationary_distribution(sub)
    per_step = float(pi @ rewards[ids])
    arrival = np.array([space.states[i].is_arrival for i in ids])
    arrival_fraction = float(pi[arrival].sum())
    return per_step / arrival_fraction


# --- policy files -------------------------------------------------------------

POLICY_FORMAT = "fedadm-policy"


def save_policy(
    policy: Policy,
    space: StateSpace,
    config: SystemConfig,
    path: str | Path,
    metadata: dict | None = None,
) -> None:
    """Write a policy as JSON: action name per dense state id, plus config hash."""
    actions = []
    for state in space.states:
        action = policy[state] if not callable(policy) else policy(state)
        if action is None:
            raise IncompletePolicyError(f"policy does not cover state {state}")
        actions.append(action.name.lower())
    doc = {
        "format": POLICY_FORMAT,
        "version": 1,
        "config_digest": config_digest(config),
        "num_states": len(space),
        "metadata": metadata or {},
        "actions": actions,
    }
    Path(path).write_text(json.dumps(doc) + "\n")


def load_policy(path: str | Path, space: StateSpace, config: SystemConfig) -> dict:
    """Read a policy file back into a state -> action mapping."""
    doc = json.loads(Path(path).read_text())
    if doc.get("format") != POLICY_FORMAT:
        raise ConfigError(f"{path} is not a policy file")
    if doc["config_digest"] != config_digest(config):
        raise ConfigError(
            f"policy {path} was produced for a different configuration "
            f"({doc['config_digest']} != {config_digest(config)})"
        )
    if doc["num_states"] != len(space):
        raise ConfigError(f"policy covers {doc['num_states']} states, space has {len(space)}")
    return {
        state: Action[name.upper()]
        for state, name in zip(space.states, doc["actions"])
    }
