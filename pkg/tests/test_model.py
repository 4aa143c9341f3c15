import json
from pathlib import Path

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fedadm.errors import ConfigError, InvalidActionError, InvalidStateError
from fedadm.model import (
    Action,
    EventKind,
    EventMark,
    State,
    SystemConfig,
    TrafficClass,
    apply_action,
    check_state,
    config_digest,
    config_from_dict,
    config_to_dict,
    default_config,
    is_valid_state,
    load_config,
    used_capacity,
    valid_actions,
)

ARR0 = EventMark(EventKind.ARRIVAL, 0)
ARR1 = EventMark(EventKind.ARRIVAL, 1)
DEP0 = EventMark(EventKind.DEPARTURE, 0)
DEP1 = EventMark(EventKind.DEPARTURE, 1)


def small_configs():
    """Tiny random two-class systems for property tests."""
    cls = st.tuples(
        st.floats(0.2, 5.0), st.floats(0.2, 5.0), st.integers(1, 3),
        st.floats(0.0, 50.0), st.floats(0.0, 20.0),
    )
    def build(lc, pc, specs, load, cost):
        classes = tuple(
            TrafficClass(i, lam, mu, w, r, phi)
            for i, (lam, mu, w, r, phi) in enumerate(specs)
        )
        return SystemConfig(lc, pc, classes, load_scale=load, cost_scale=cost)
    return st.builds(
        build,
        st.integers(0, 6), st.integers(0, 6),
        st.lists(cls, min_size=1, max_size=2),
        st.floats(0.25, 2.0), st.floats(0.0, 2.0),
    )


class TestTrafficClass:
    def test_rejects_bad_rates(self):
        with pytest.raises(ConfigError):
            TrafficClass(0, 0.0, 1.0, 1, 10.0, 0.0)
        with pytest.raises(ConfigError):
            TrafficClass(0, 1.0, -1.0, 1, 10.0, 0.0)

    def test_rejects_fractional_or_zero_demand(self):
        with pytest.raises(ConfigError):
            TrafficClass(0, 1.0, 1.0, 0, 10.0, 0.0)
        with pytest.raises(ConfigError):
            TrafficClass(0, 1.0, 1.0, 1.5, 10.0, 0.0)

    def test_rejects_negative_money(self):
        with pytest.raises(ConfigError):
            TrafficClass(0, 1.0, 1.0, 1, -1.0, 0.0)
        with pytest.raises(ConfigError):
            TrafficClass(0, 1.0, 1.0, 1, 1.0, -0.5)


class TestSystemConfig:
    def test_default_matches_shipped_file(self):
        shipped = load_config(Path(__file__).parent.parent / "configs" / "default.json")
        assert shipped == default_config()

    def test_default_values(self, config):
        assert config.local_capacity == 30
        assert config.provider_capacity == 20
        assert [c.arrival_rate for c in config.classes] == [10.0, 5.0]
        assert [c.departure_rate for c in config.classes] == [4.0, 0.5]
        assert config.weights() == (2, 4)
        assert [c.revenue for c in config.classes] == [100.0, 20.0]
        assert [c.federation_cost for c in config.classes] == [30.0, 5.0]

    def test_needs_a_class(self):
        with pytest.raises(ConfigError):
            SystemConfig(1, 1, ())

    def test_scales_apply_lazily(self, config):
        scaled = config.with_load_scale(2.0).with_cost_scale(0.5)
        assert scaled.arrival_rates() == (20.0, 10.0)
        assert scaled.federation_costs() == (15.0, 2.5)
        assert scaled.classes == config.classes

    def test_roundtrip_dict(self, config):
        assert config_from_dict(config_to_dict(config)) == config

    def test_digest_changes_with_scale(self, config):
        assert config_digest(config) != config_digest(config.with_cost_scale(2.0))

    def test_malformed_dict(self):
        with pytest.raises(ConfigError):
            config_from_dict({"lc": 1, "pc": 1, "classes": [{"lambda": 1}]})


class TestUsedCapacity:
    def test_empty(self, config):
        assert used_capacity((0, 0), config) == 0

    def test_hand_sum(self, config):
        assert used_capacity((1, 1), config) == 6

    def test_fills_local_capacity_exactly(self, config):
        assert used_capacity((13, 1), config) == 30

    def test_length_mismatch(self, config):
        with pytest.raises(ConfigError):
            used_capacity((1,), config)


class TestStateInvariants:
    def test_capacity_violation(self, config):
        with pytest.raises(InvalidStateError):
            check_state(State((14, 1), (0, 0), ARR0), config)

    def test_departure_needs_demand(self, config):
        with pytest.raises(InvalidStateError):
            check_state(State((0, 0), (0, 0), DEP0), config)
        assert is_valid_state(State((1, 0), (0, 0), DEP0), config)

    def test_negative_counts(self, config):
        assert not is_valid_state(State((-1, 0), (0, 0), ARR0), config)


class TestValidActions:
    def test_empty_system_all_three(self, config):
        acts = valid_actions(State((0, 0), (0, 0), ARR0), config)
        assert set(acts) == {Action.ACCEPT, Action.FEDERATE, Action.REJECT}

    def test_local_full_blocks_accept(self, config):
        acts = valid_actions(State((13, 1), (0, 0), ARR0), config)
        assert set(acts) == {Action.REJECT, Action.FEDERATE}

    def test_departure_forces_no_action(self, config):
        assert valid_actions(State((1, 0), (0, 0), DEP0), config) == (Action.NO_ACTION,)

    def test_priority_order(self, config):
        acts = valid_actions(State((0, 0), (0, 0), ARR1), config)
        assert acts == (Action.ACCEPT, Action.FEDERATE, Action.REJECT)

    @given(small_configs())
    @settings(max_examples=50)
    def test_never_empty(self, cfg):
        from fedadm.mdp import enumerate_states

        for state in enumerate_states(cfg).states:
            assert valid_actions(state, cfg)


class TestApplyAction:
    def test_accept_earns_revenue(self, config):
        s = State((0, 0), (0, 0), ARR0)
        local, federated, reward = apply_action(s, Action.ACCEPT, config)
        assert reward == 100.0
        assert local == (1, 0) and federated == (0, 0)

    def test_federate_pays_cost(self, config):
        s = State((0, 0), (0, 0), ARR0)
        _, federated, reward = apply_action(s, Action.FEDERATE, config)
        assert reward == 70.0
        assert federated == (1, 0)

    def test_reject_is_free_and_inert(self, config):
        s = State((3, 2), (1, 1), ARR1)
        local, federated, reward = apply_action(s, Action.REJECT, config)
        assert reward == 0.0
        assert (local, federated) == (s.local, s.federated)

    def test_no_action_defers_removal(self, config):
        s = State((1, 0), (0, 0), DEP0)
        local, federated, reward = apply_action(s, Action.NO_ACTION, config)
        assert (local, federated, reward) == ((1, 0), (0, 0), 0.0)

    def test_illegal_action_raises(self, config):
        with pytest.raises(InvalidActionError):
            apply_action(State((13, 1), (0, 0), ARR0), Action.ACCEPT, config)
        with pytest.raises(InvalidActionError):
            apply_action(State((1, 0), (0, 0), DEP0), Action.ACCEPT, config)

    def test_cost_scale_hits_federate_only(self, config):
        s = State((0, 0), (0, 0), ARR1)
        _, _, base = apply_action(s, Action.FEDERATE, config)
        _, _, scaled = apply_action(s, Action.FEDERATE, config.with_cost_scale(2.0), )
        assert base == 15.0 and scaled == 10.0
        assert apply_action(s, Action.ACCEPT, config.with_cost_scale(2.0))[2] == 20.0

    def test_accept_minus_federate_is_scaled_cost(self, config):
        for scale in (0.5, 1.0, 2.0, 3.0):
            cfg = config.with_cost_scale(scale)
            for i, mark in enumerate((ARR0, ARR1)):
                s = State((0, 0), (0, 0), mark)
                accept = apply_action(s, Action.ACCEPT, cfg)[2]
                federate = apply_action(s, Action.FEDERATE, cfg)[2]
                assert accept - federate == scale * cfg.classes[i].federation_cost

    @given(st.floats(0.1, 10.0))
    @settings(max_examples=30)
    def test_rewards_scale_linearly(self, c):
        base = default_config()
        scaled = SystemConfig(
            base.local_capacity, base.provider_capacity,
            tuple(
                TrafficClass(k.index, k.arrival_rate, k.departure_rate,
                             k.resource_demand, k.revenue * c, k.federation_cost * c)
                for k in base.classes
            ),
        )
        for mark in (ARR0, ARR1):
            s = State((0, 0), (0, 0), mark)
            for action in (Action.ACCEPT, Action.FEDERATE, Action.REJECT):
                r0 = apply_action(s, action, base)[2]
                r1 = apply_action(s, action, scaled)[2]
                assert r1 == pytest.approx(c * r0, rel=1e-12, abs=1e-12)

    @given(small_configs())
    @settings(max_examples=40)
    def test_capacity_invariants_hold_after_any_legal_action(self, cfg):
        from fedadm.mdp import enumerate_states

        for state in enumerate_states(cfg).states:
            for action in valid_actions(state, cfg):
                local, federated, _ = apply_action(state, action, cfg)
                assert used_capacity(local, cfg) <= cfg.local_capacity
                assert used_capacity(federated, cfg) <= cfg.provider_capacity
