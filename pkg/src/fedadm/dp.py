"""Policy iteration on the exact MDP.

In-place Gauss-Seidel policy evaluation alternating with greedy improvement.
Because the event chain is not uniform in time (admitting demands adds
departure events), values discount per unit of simulated time rather than per
event: each successor is weighted by the expected discount over the
exponential holding time that precedes it.  The discount parameter is the
factor applied per mean arrival interval, so as it approaches 1 the solution
approaches the long-run profit-per-demand optimum, the reference bound the
learning agents are measured against.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit

from .errors import NonConvergenceError
from .mdp import Mdp, StateSpace
from .model import Action, Policy, SystemConfig

ValueTable = np.ndarray  # V(s) indexed by dense state id


@dataclass(frozen=True)
class DpParams:
    """Solver knobs.

    ``discount`` is the factor per mean arrival interval (1 / total arrival
    rate of simulated time); 0 makes the backup myopic.  ``tolerance`` is the
    Gauss-Seidel stopping threshold on the max per-state change.
    """

    discount: float = 0.99
    tolerance: float = 1e-6
    max_eval_sweeps: int = 200_000
    max_improvement_rounds: int = 100

    def __post_init__(self):
        if not 0.0 <= self.discount < 1.0:
            raise ValueError(f"discount must be in [0, 1), got {self.discount}")
        if not self.tolerance > 0:
            raise ValueError(f"tolerance must be > 0, got {self.tolerance}")


@dataclass(frozen=True)
class SolveResult:
    policy: dict
    values: ValueTable
    improvement_rounds: int
    eval_sweeps: tuple[int, ...]
    final_delta: float


def state_rates(space: StateSpace, config: SystemConfig) -> np.ndarray:
    """Total event rate (arrivals plus one clock per active demand) per state."""
    lam = config.total_arrival_rate()
    mus = config.departure_rates()
    out = np.empty(len(space))
    for sid, s in enumerate(space.states):
        m = 0.0
        for j in range(config.num_classes):
            m += (s.local[j] + s.federated[j]) * mus[j]
        out[sid] = lam + m
    return out


def holding_discounts(space: StateSpace, config: SystemConfig, discount: float) -> np.ndarray:
    """Expected discount over the holding time preceding each state.

    The continuous-time discount rate kappa is chosen so that one mean
    arrival interval is worth ``discount``; a successor reached after an
    Exp(rate) holding time is then discounted by rate / (rate + kappa).
    """
    if discount == 0.0:
        return np.zeros(len(space))
    kappa = -math.log(discount) * config.total_arrival_rate()
    rates = state_rates(space, config)
    return rates / (rates + kappa)


def _discounted_probs(mdp: Mdp, params: DpParams) -> np.ndarray:
    tables = mdp.tables()
    beta = holding_discounts(mdp.space, mdp.config, params.discount)
    return tables.succ_prob * beta[tables.succ_state]


@njit(cache=True)
def _gauss_seidel(values, choice, pair_reward, pair_succ_ptr, succ_state, succ_dprob,
                  theta, max_sweeps):
    """Sweep V in place until the max per-state change drops to theta.

    ``succ_dprob`` carries probability times successor discount, so the
    backup is reward plus the plain dot product.
    """
    n = values.shape[0]
    delta = 0.0
    for sweep in range(max_sweeps):
        delta = 0.0
        for s in range(n):
            k = choice[s]
            acc = 0.0
            for t in range(pair_succ_ptr[k], pair_succ_ptr[k + 1]):
                acc += succ_dprob[t] * values[succ_state[t]]
            nv = pair_reward[k] + acc
            d = nv - values[s]
            if d < 0.0:
                d = -d
            if d > delta:
                delta = d
            values[s] = nv
        if delta <= theta:
            return sweep + 1, delta
    return -1, delta


@njit(cache=True)
def _greedy_choice(values, state_pair_ptr, pair_reward, pair_succ_ptr, succ_state,
                   succ_dprob, out_choice):
    """One-step-backup argmax per state; pairs are pre-sorted by tie priority."""
    n = out_choice.shape[0]
    for s in range(n):
        best_q = -1.0e300
        best_k = -1
        for k in range(state_pair_ptr[s], state_pair_ptr[s + 1]):
            acc = 0.0
            for t in range(pair_succ_ptr[k], pair_succ_ptr[k + 1]):
                acc += succ_dprob[t] * values[succ_state[t]]
            q = pair_reward[k] + acc
            if q > best_q:
                best_q = q
                best_k = k
        out_choice[s] = best_k


def _choice_to_policy(mdp: Mdp, choice: np.ndarray) -> dict:
    tables = mdp.tables()
    return {
        state: Action(int(tables.pair_action[choice[sid]]))
        for sid, state in enumerate(mdp.space.states)
    }


def _initial_choice(mdp: Mdp) -> np.ndarray:
    # Last pair per state in priority order: REJECT in arrival states,
    # NO_ACTION in departure states.  Evaluating it from zero values makes
    # the first improvement the myopic-reward policy, a useful anchor.
    tables = mdp.tables()
    return tables.state_pair_ptr[1:] - 1


def policy_evaluation(
    policy: Policy,
    values: ValueTable,
    params: DpParams,
    mdp: Mdp,
) -> ValueTable:
    """Evaluate a fixed policy by in-place Gauss-Seidel sweeps.

    ``values`` seeds the iteration (warm starts converge fast) and is
    returned updated in place.
    """
    tables = mdp.tables()
    choice = mdp.policy_pair_choice(policy)
    dprob = _discounted_probs(mdp, params)
    sweeps, delta = _gauss_seidel(
        values, choice, tables.pair_reward, tables.pair_succ_ptr,
        tables.succ_state, dprob,
        params.tolerance, params.max_eval_sweeps,
    )
    if sweeps < 0:
        raise NonConvergenceError(
            f"policy evaluation still at delta={delta:.3e} after "
            f"{params.max_eval_sweeps} sweeps (theta={params.tolerance})",
            delta,
        )
    return values


def policy_improvement(
    values: ValueTable,
    params: DpParams,
    mdp: Mdp,
    current: Policy | None = None,
) -> tuple[dict, bool]:
    """Greedy policy with respect to ``values``.

    Ties break by the fixed order ACCEPT > FEDERATE > REJECT; departure
    states keep their forced NO_ACTION.  ``changed`` reports whether any
    state's action differs from ``current`` (True when no baseline given).
    """
    tables = mdp.tables()
    dprob = _discounted_probs(mdp, params)
    choice = np.empty(len(mdp.space), dtype=np.int64)
    _greedy_choice(
        values, tables.state_pair_ptr, tables.pair_reward, tables.pair_succ_ptr,
        tables.succ_state, dprob, choice,
    )
    policy = _choice_to_policy(mdp, choice)
    if current is None:
        return policy, True
    changed = any(policy[s] != current[s] for s in mdp.space.states)
    return policy, changed


def policy_iteration(
    params: DpParams,
    mdp: Mdp,
    on_round=None,
) -> SolveResult:
    """Alternate evaluation and improvement until the policy is stable.

    ``on_round(round_index, policy, values)`` is invoked after each
    evaluation+improvement round.
    """
    tables = mdp.tables()
    dprob = _discounted_probs(mdp, params)
    values = np.zeros(tables.num_states)
    choice = _initial_choice(mdp)
    eval_sweeps: list[int] = []
    delta = 0.0
    last_diff = 0
    for round_index in range(params.max_improvement_rounds):
        sweeps, delta = _gauss_seidel(
            values, choice, tables.pair_reward, tables.pair_succ_ptr,
            tables.succ_state, dprob,
            params.tolerance, params.max_eval_sweeps,
        )
        if sweeps < 0:
            raise NonConvergenceError(
                f"evaluation in round {round_index} did not converge (delta={delta:.3e})",
                delta,
            )
        eval_sweeps.append(sweeps)
        new_choice = np.empty_like(choice)
        _greedy_choice(
            values, tables.state_pair_ptr, tables.pair_reward, tables.pair_succ_ptr,
            tables.succ_state, dprob, new_choice,
        )
        last_diff = int(np.sum(new_choice != choice))
        choice = new_choice
        if on_round is not None:
            on_round(round_index, _choice_to_policy(mdp, choice), values)
        if last_diff == 0:
            return SolveResult(
                policy=_choice_to_policy(mdp, choice),
                values=values,
                improvement_rounds=round_index + 1,
                eval_sweeps=tuple(eval_sweeps),
                final_delta=delta,
            )
    raise NonConvergenceError(
        f"policy iteration hit the round cap ({params.max_improvement_rounds}); "
        f"last two policies differ in {last_diff} states (possible oscillation)"
    )


def solve(config_mdp: Mdp, params: DpParams | None = None) -> SolveResult:
    """Convenience wrapper: policy iteration with default parameters."""
    return policy_iteration(params or DpParams(), config_mdp)
