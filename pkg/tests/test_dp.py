import numpy as np
import pytest

from fedadm.dp import (
    DpParams,
    _gauss_seidel,
    holding_discounts,
    policy_evaluation,
    policy_improvement,
    policy_iteration,
    state_rates,
)
from fedadm.errors import NonConvergenceError
from fedadm.mdp import Mdp, enumerate_states, exact_average_profit
from fedadm.model import (
    Action,
    EventKind,
    EventMark,
    State,
    SystemConfig,
    TrafficClass,
    valid_actions,
)


def reject_all(space):
    return {
        s: Action.REJECT if s.is_arrival else Action.NO_ACTION
        for s in space.states
    }


class TestParams:
    def test_validation(self):
        with pytest.raises(ValueError):
            DpParams(discount=1.0)
        with pytest.raises(ValueError):
            DpParams(tolerance=0.0)

    def test_defaults(self):
        p = DpParams()
        assert p.discount == 0.99 and p.tolerance == 1e-6


class TestKernel:
    def test_self_loop_geometric_series(self):
        # one state, self-loop with probability 1, constant reward: the fixed
        # point is the geometric series r / (1 - gamma)
        gamma = 0.99
        values = np.zeros(1)
        sweeps, delta = _gauss_seidel(
            values,
            np.array([0], dtype=np.int64),            # choice
            np.array([100.0]),                        # pair rewards
            np.array([0, 1], dtype=np.int64),         # pair succ ptr
            np.array([0], dtype=np.int64),            # succ state
            np.array([gamma]),                        # prob * discount
            1e-9, 10_000,
        )
        assert sweeps > 0
        assert values[0] == pytest.approx(100.0 / (1 - gamma), rel=1e-9)


class TestHoldingDiscounts:
    def test_zero_discount_is_myopic(self, config, space):
        assert not holding_discounts(space, config, 0.0).any()

    def test_rates_grow_with_occupancy(self, config, space):
        rates = state_rates(space, config)
        empty = space.index[State((0, 0), (0, 0), EventMark(EventKind.ARRIVAL, 0))]
        busy = space.index[State((3, 2), (1, 1), EventMark(EventKind.ARRIVAL, 0))]
        assert rates[empty] == pytest.approx(15.0)
        assert rates[busy] == pytest.approx(15.0 + 4 * 4 + 3 * 0.5)
        beta = holding_discounts(space, config, 0.99)
        assert 0 < beta[empty] < beta[busy] < 1

    def test_discount_bounded_by_one(self, config, space):
        beta = holding_discounts(space, config, 0.999)
        assert (beta < 1.0).all() and (beta > 0.0).all()


class TestPolicyEvaluation:
    def test_reject_all_is_zero(self, config, mdp):
        values = np.zeros(len(mdp.space))
        out = policy_evaluation(reject_all(mdp.space), values, DpParams(), mdp)
        assert np.abs(out).max() == 0.0

    def test_myopic_evaluation_equals_immediate_reward(self, config, mdp):
        from fedadm.agents import greedy_policy

        policy = greedy_policy(mdp.space, config)
        values = np.zeros(len(mdp.space))
        policy_evaluation(policy, values, DpParams(discount=0.0), mdp)
        for sid, s in enumerate(mdp.space.states):
            if not s.is_arrival:
                assert values[sid] == 0.0
        accept_state = mdp.space.index[State((0, 0), (0, 0), EventMark(EventKind.ARRIVAL, 0))]
        assert values[accept_state] == 100.0

    def test_nonconvergence_raises(self, config, mdp):
        from fedadm.agents import greedy_policy

        values = np.zeros(len(mdp.space))
        with pytest.raises(NonConvergenceError):
            policy_evaluation(
                greedy_policy(mdp.space, config), values,
                DpParams(max_eval_sweeps=2), mdp,
            )

    def test_value_bound(self, config, mdp):
        from fedadm.agents import greedy_policy

        params = DpParams()
        values = np.zeros(len(mdp.space))
        policy_evaluation(greedy_policy(mdp.space, config), values, params, mdp)
        r_max = max(c.revenue for c in config.classes)
        assert np.abs(values).max() <= r_max / (1 - params.discount)


class TestPolicyImprovement:
    def test_zero_values_give_myopic_argmax(self, config, mdp):
        values = np.zeros(len(mdp.space))
        policy, _ = policy_improvement(values, DpParams(), mdp)
        for s in mdp.space.states:
            acts = valid_actions(s, config)
            if not s.is_arrival:
                assert policy[s] == Action.NO_ACTION
            elif Action.ACCEPT in acts:
                assert policy[s] == Action.ACCEPT  # revenue beats net-federate
            elif Action.FEDERATE in acts:
                assert policy[s] == Action.FEDERATE  # positive net revenue
            else:
                assert policy[s] == Action.REJECT

    def test_gamma_zero_matches_zero_values(self, config, mdp):
        rng = np.random.default_rng(3)
        values = rng.normal(size=len(mdp.space)) * 50
        myopic, _ = policy_improvement(np.zeros(len(mdp.space)), DpParams(), mdp)
        gamma_zero, _ = policy_improvement(values, DpParams(discount=0.0), mdp)
        assert gamma_zero == myopic

    def test_changed_flag(self, config, mdp):
        values = np.zeros(len(mdp.space))
        policy, _ = policy_improvement(values, DpParams(), mdp)
        again, changed = policy_improvement(values, DpParams(), mdp, current=policy)
        assert not changed and again == policy
        _, changed = policy_improvement(values, DpParams(), mdp, current=reject_all(mdp.space))
        assert changed


class TestPolicyIteration:
    def test_unprofitable_federation_rejects_everything(self):
        cfg = SystemConfig(0, 10, (
            TrafficClass(0, 2.0, 1.0, 1, 10.0, 50.0),
            TrafficClass(1, 1.0, 1.0, 1, 5.0, 9.0),
        ))
        mdp = Mdp(cfg)
        result = policy_iteration(DpParams(), mdp)
        for s in mdp.space.states:
            if s.is_arrival:
                assert result.policy[s] == Action.REJECT
        assert exact_average_profit(result.policy, mdp.space, cfg, mdp=mdp) == 0.0

    def test_single_class_large_capacity_accepts_everywhere(self):
        cfg = SystemConfig(100, 20, (TrafficClass(0, 10.0, 4.0, 2, 100.0, 30.0),))
        mdp = Mdp(cfg)
        result = policy_iteration(DpParams(), mdp)
        for s in mdp.space.states:
            if s.is_arrival and Action.ACCEPT in valid_actions(s, cfg):
                assert result.policy[s] == Action.ACCEPT

    def test_beats_greedy_on_defaults(self, config, mdp):
        from fedadm.agents import greedy_policy

        result = policy_iteration(DpParams(), mdp)
        dp = exact_average_profit(result.policy, mdp.space, config, mdp=mdp)
        greedy = exact_average_profit(greedy_policy(mdp.space, config), mdp.space, config, mdp=mdp)
        assert dp > greedy

    def test_terminates_quickly_and_is_fixed_point(self, config, mdp):
        result = policy_iteration(DpParams(), mdp)
        assert result.improvement_rounds < 100
        again, changed = policy_improvement(result.values, DpParams(), mdp, current=result.policy)
        assert not changed

    def test_monotone_improvement(self, config, mdp):
        profits = []

        def on_round(_, policy, __):
            profits.append(exact_average_profit(policy, mdp.space, config, mdp=mdp))

        policy_iteration(DpParams(), mdp, on_round=on_round)
        slack = 10 * DpParams().tolerance
        for earlier, later in zip(profits, profits[1:]):
            assert later >= earlier - slack

    def test_reward_scaling_leaves_policy_unchanged(self, config, mdp):
        c = 4.0
        scaled_cfg = SystemConfig(
            config.local_capacity, config.provider_capacity,
            tuple(
                TrafficClass(k.index, k.arrival_rate, k.departure_rate,
                             k.resource_demand, k.revenue * c, k.federation_cost * c)
                for k in config.classes
            ),
        )
        scaled = policy_iteration(DpParams(), Mdp(scaled_cfg))
        base = policy_iteration(DpParams(), mdp)
        relabeled = {
            State(s.local, s.federated, s.event): a for s, a in scaled.policy.items()
        }
        assert relabeled == base.policy

    def test_round_cap_raises(self, config, mdp):
        with pytest.raises(NonConvergenceError):
            policy_iteration(DpParams(max_improvement_rounds=1), mdp)
