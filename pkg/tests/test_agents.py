import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from vetokensim.agents import (
    AgentSpec,
    BaseVoteAction,
    BribeAction,
    DepositAction,
    LockAction,
    LockEntry,
    MetaVoteAction,
    Observation,
    decide,
    equilibrium_allocation,
)
from vetokensim.errors import AgentError
from vetokensim.gauges import BPS


from conftest import U


def obs(**overrides) -> Observation:
    defaults = dict(
        epoch=0,
        round_id=0,
        round_open_epoch=0,
        round_close_epoch=2,
        bribes_usd={},
        prev_round_weights={},
        own_gov_weight_at_close=0.0,
        own_base_weight=0.0,
        active_gauges=(0, 1, 2),
        token_prices={"BRIBE-USD": 1.0, "CRV": 1.0, "CVX": 1.0},
        gov_max_lock_weeks=16,
        base_max_lock_weeks=208,
        noise_seed=12345,
    )
    defaults.update(overrides)
    return Observation(**defaults)


def ballot_of(actions) -> dict:
    for action in actions:
        if isinstance(action, MetaVoteAction):
            return dict(action.allocation)
    return {}


class TestEquilibriumAllocation:
    def test_pure_proportionality(self):
        split = equilibrium_allocation({0: 75.0, 1: 25.0}, 100.0)
        total = sum(split.values())
        assert split[0] / total == pytest.approx(0.75, abs=1e-9)
        assert split[1] / total == pytest.approx(0.25, abs=1e-9)
        assert total == pytest.approx(100.0, rel=1e-8)

    def test_single_gauge(self):
        split = equilibrium_allocation({0: 100.0}, 40.0)
        assert split == pytest.approx({0: 40.0}, rel=1e-8)
        assert 100.0 / split[0] == pytest.approx(2.5, rel=1e-8)

    def test_water_filling_skips_congested_gauge(self):
        # bribes {g0: 90, g1: 10} with 50 exogenous weight already on g1:
        # level = 90/100 = 0.9 with everything on g0, since even an empty g1
        # pays only 10/50 = 0.2 per vote
        split = equilibrium_allocation({0: 90.0, 1: 10.0}, 100.0, {0: 0.0, 1: 50.0})
        assert split[0] == pytest.approx(100.0, rel=1e-8)
        assert split.get(1, 0.0) == 0.0

    def test_equalization_with_exogenous_weight(self):
        bribes = {0: 60.0, 1: 40.0}
        exo = {0: 10.0, 1: 30.0}
        split = equilibrium_allocation(bribes, 100.0, exo)
        rates = {g: bribes[g] / (exo[g] + split.get(g, 0.0)) for g in bribes if split.get(g, 0.0) > 0}
        values = list(rates.values())
        assert max(values) - min(values) <= 1e-9 * max(values)
        assert sum(split.values()) == pytest.approx(100.0, rel=1e-8)

    def test_no_positive_bribes(self):
        with pytest.raises(AgentError):
            equilibrium_allocation({0: 0.0}, 10.0)

    def test_bad_weight_and_tol(self):
        with pytest.raises(AgentError):
            equilibrium_allocation({0: 1.0}, 0.0)
        with pytest.raises(AgentError):
            equilibrium_allocation({0: 1.0}, 1.0, tol=0.0)

    @given(
        bribes=st.lists(st.floats(min_value=0.5, max_value=500.0), min_size=1, max_size=5),
        weight=st.floats(min_value=0.5, max_value=1000.0),
        scale=st.floats(min_value=0.01, max_value=100.0),
    )
    @settings(max_examples=50, deadline=None)
    def test_scale_invariance_of_shares(self, bribes, weight, scale):
        mapping = dict(enumerate(bribes))
        scaled = {g: b * scale for g, b in mapping.items()}
        one = equilibrium_allocation(mapping, weight)
        two = equilibrium_allocation(scaled, weight)
        total_one, total_two = sum(one.values()), sum(two.values())
        for g in one:
            assert one[g] / total_one == pytest.approx(two[g] / total_two, abs=1e-7)


class TestGreedy:
    def test_argmax_expected_dollars_per_vote(self):
        # oracle: enumerate both options
        # g0: 100/(10+1) = 9.09..., g1: 50/(1+1) = 25 -> g1 wins
        spec = AgentSpec(account="g", strategy="BribeFollowerGreedy")
        observation = obs(
            bribes_usd={0: 100.0, 1: 50.0},
            prev_round_weights={0: 10.0, 1: 1.0},
            own_gov_weight_at_close=1.0,
        )
        options = {
            g: observation.bribes_usd[g] / (observation.prev_round_weights.get(g, 0.0) + 1.0)
            for g in (0, 1)
        }
        best = max(sorted(options), key=lambda g: options[g])
        assert ballot_of(decide(spec, observation)) == {best: BPS} == {1: BPS}

    def test_tie_breaks_to_lowest_gauge(self):
        spec = AgentSpec(account="g", strategy="BribeFollowerGreedy")
        observation = obs(bribes_usd={0: 10.0, 2: 10.0}, own_gov_weight_at_close=5.0)
        assert ballot_of(decide(spec, observation)) == {0: BPS}

    def test_no_bribes_no_ballot(self):
        spec = AgentSpec(account="g", strategy="BribeFollowerGreedy")
        assert decide(spec, obs(own_gov_weight_at_close=5.0)) == []

    def test_zero_weight_no_ballot(self):
        spec = AgentSpec(account="g", strategy="BribeFollowerGreedy")
        assert decide(spec, obs(bribes_usd={0: 10.0})) == []


class TestEquilibriumStrategy:
    def test_population_splits_like_bribes(self):
        spec = AgentSpec(account="e", strategy="BribeFollowerEquilibrium")
        observation = obs(bribes_usd={0: 75.0, 1: 25.0}, own_gov_weight_at_close=100.0)
        assert ballot_of(decide(spec, observation)) == {0: 7500, 1: 2500}


class TestSelfPromoter:
    def test_zero_budget_still_votes_own_gauge(self):
        spec = AgentSpec(account="s", strategy="SelfPromoter", own_gauges=(1,))
        actions = decide(spec, obs(own_gov_weight_at_close=10.0))
        assert not any(isinstance(a, BribeAction) for a in actions)
        assert ballot_of(actions) == {1: BPS}

    def test_budget_split_evenly_across_own_gauges(self):
        spec = AgentSpec(
            account="s", strategy="SelfPromoter", own_gauges=(0, 1), budget_per_round=1000.0
        )
        actions = decide(spec, obs(own_gov_weight_at_close=1.0))
        bribes = [a for a in actions if isinstance(a, BribeAction)]
        assert [(b.gauge_id, b.amount) for b in bribes] == [(0, U(500)), (1, U(500))]

    def test_votes_highest_bribed_own_gauge_even_if_outbid_elsewhere(self):
        spec = AgentSpec(
            account="s", strategy="SelfPromoter", own_gauges=(0, 1), budget_per_round=100.0
        )
        observation = obs(
            bribes_usd={1: 30.0, 2: 10_000.0},  # external money on g2 is ignored
            own_gov_weight_at_close=5.0,
        )
        actions = decide(spec, observation)
        # own posts add 50 to each own gauge: g1 carries 80, g0 carries 50
        assert ballot_of(actions) == {1: BPS}

    def test_posts_only_on_round_open_epoch(self):
        spec = AgentSpec(
            account="s", strategy="SelfPromoter", own_gauges=(0,), budget_per_round=100.0
        )
        late = obs(epoch=1, own_gov_weight_at_close=5.0)
        assert not any(isinstance(a, BribeAction) for a in decide(spec, late))

    def test_base_vote_with_base_weight(self):
        spec = AgentSpec(account="s", strategy="SelfPromoter", own_gauges=(0,))
        actions = decide(spec, obs(own_base_weight=3.0))
        base_votes = [a for a in actions if isinstance(a, BaseVoteAction)]
        assert base_votes == [BaseVoteAction(((0, BPS),))]


class TestSchedulesAndNoise:
    def test_schedule_emits_lock_and_deposit_actions(self):
        spec = AgentSpec(
            account="p",
            strategy="PassiveLocker",
            lock_schedule=(
                LockEntry(epoch=0, kind="base", amount=U(5), weeks=208),
                LockEntry(epoch=0, kind="deposit", amount=U(7)),
                LockEntry(epoch=3, kind="gov", amount=U(1), weeks=16),
            ),
        )
        actions = decide(spec, obs())
        assert LockAction("base", U(5), 208) in actions
        assert DepositAction(U(7)) in actions
        assert len(actions) == 2  # the epoch-3 entry stays dormant

    def test_same_epoch_gov_lock_enables_ballot(self):
        spec = AgentSpec(
            account="e",
            strategy="BribeFollowerEquilibrium",
            lock_schedule=(LockEntry(epoch=0, kind="gov", amount=U(100), weeks=16),),
        )
        observation = obs(bribes_usd={0: 50.0, 1: 50.0})
        assert ballot_of(decide(spec, observation)) == {0: 5000, 1: 5000}

    def test_noise_diverts_exact_fraction(self):
        spec = AgentSpec(account="g", strategy="BribeFollowerGreedy", noise=0.15)
        observation = obs(bribes_usd={0: 10.0}, own_gov_weight_at_close=5.0)
        ballot = ballot_of(decide(spec, observation))
        assert sum(ballot.values()) == BPS
        import random as _random

        target = _random.Random(observation.noise_seed).choice([0, 1, 2])
        if target == 0:
            assert ballot == {0: BPS}
        else:
            assert ballot == {0: 8500, target: 1500}

    def test_determinism(self):
        spec = AgentSpec(account="g", strategy="BribeFollowerGreedy", noise=0.4)
        observation = obs(bribes_usd={0: 9.0, 1: 3.0}, own_gov_weight_at_close=2.0)
        assert decide(spec, observation) == decide(spec, observation)


class TestSpecValidation:
    def test_unknown_strategy(self):
        with pytest.raises(AgentError):
            AgentSpec(account="x", strategy="Nonsense")

    def test_self_promoter_needs_own_gauges(self):
        with pytest.raises(AgentError):
            AgentSpec(account="x", strategy="SelfPromoter")

    def test_noise_bounds(self):
        with pytest.raises(AgentError):
            AgentSpec(account="x", strategy="PassiveLocker", noise=1.5)
