import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from src.demand.models import LogisticDemand, LogisticDemandParams
from src.market.multi_product import CrossPriceDemand, multi_product_step, multi_reset
from src.market.simulator import (
    TRAJECTORY_COLUMNS,
    Action,
    MarketState,
    apply_demand,
    context_for,
    encode_state,
    period_reward,
    reset,
    run_episode,
    step,
    trajectory_frame,
)
from src.utils.errors import ConfigError, DomainError
from tests.factories import make_scenario


def _state(inventory, pipeline=(), competitor=10.0, reference=10.0):
    return MarketState(inventory=inventory, pipeline=tuple(pipeline), last_demand=0, last_price=10.0,
                       competitor_price=competitor, reference_price=reference, last_lost=0, period=0)


def test_reset_defaults(scenario_factory):
    config = scenario_factory(z=3)
    state = reset(config)
    assert state.inventory == 0
    assert state.pipeline == (0, 0, 0)
    assert state.period == 0
    assert state.last_price == state.competitor_price == state.reference_price == 10.0
    assert reset(config) == state


def test_step_lost_sales_arithmetic(scenario_factory):
    config = scenario_factory(z=1, h=1.0, b=2.0, c=1.0)
    out = apply_demand(_state(3, (2,)), Action(10.0, 3), 4, config)
    assert (out.sales, out.ending_inventory, out.lost) == (4, 1, 0)
    assert out.reward == pytest.approx(40 - 1 - 0 - 3)
    assert out.next_state.pipeline == (3,)
    assert out.arrived == 2


def test_step_lost_sales_stockout(scenario_factory):
    config = scenario_factory(z=1)
    out = apply_demand(_state(3, (2,)), Action(10.0, 0), 10, config)
    assert (out.sales, out.ending_inventory, out.lost) == (5, 0, 5)


def test_fixed_cost_charged_only_on_orders(scenario_factory):
    config = scenario_factory(fixed_cost=True, f=20.0, c=0.0, h=0.0, b=0.0)
    no_order = apply_demand(_state(0), Action(10.0, 0), 0, config)
    one_order = apply_demand(_state(0), Action(10.0, 1), 0, config)
    assert no_order.reward == 0.0
    assert one_order.reward == -20.0


def test_backlog_carries_and_serves_later(scenario_factory):
    config = scenario_factory(mode='backlog', h=1.0, b=2.0, c=1.0)
    first = apply_demand(_state(0), Action(10.0, 0), 3, config)
    assert (first.sales, first.ending_inventory, first.lost) == (0, -3, 3)
    assert first.next_state.last_lost == 3
    second = apply_demand(first.next_state, Action(10.0, 4), 0, config)
    assert (second.sales, second.ending_inventory, second.lost) == (3, 1, 0)
    assert second.reward == pytest.approx(30 - 1 - 4)


def test_step_rejects_off_domain_actions(scenario_factory, rng):
    config = scenario_factory()
    with pytest.raises(DomainError):
        step(reset(config), Action(100.0, 0), config, rng)
    with pytest.raises(DomainError):
        step(reset(config), Action(10.0, 9), config, rng)


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 10_000), z=st.integers(0, 3))
def test_lost_sales_invariants(seed, z):
    config = make_scenario(z=z, horizon=12)
    rng = np.random.default_rng(seed)
    policy_rng = np.random.default_rng(seed + 1)
    state = reset(config)
    ordered = arrived = 0
    for _ in range(config.horizon):
        action = Action(float(policy_rng.choice(config.price_grid)), int(policy_rng.choice(config.quantity_grid)))
        out = step(state, action, config, rng)
        assert out.sales + out.lost == out.demand
        assert out.ending_inventory * out.lost == 0
        assert out.ending_inventory >= 0
        if out.lost == 0:
            assert out.ending_inventory - state.inventory == out.arrived - out.sales
        recomputed = period_reward(action.price, out.sales, out.ending_inventory, out.lost, action.quantity,
                                   config.costs, config.fixed_cost)
        assert recomputed == out.reward
        assert len(out.next_state.pipeline) == z
        ordered += action.quantity
        arrived += out.arrived
        state = out.next_state
        assert ordered == arrived + sum(state.pipeline)


def test_backlog_without_costs_serves_all_demand(scenario_factory):
    config = scenario_factory(mode='backlog', b=0.0, horizon=30, quantity_grid=(0, 1, 2, 3, 4, 5, 6, 7, 8))
    rng = np.random.default_rng(4)
    state = reset(config)
    demand_total = sales_total = 0
    for _ in range(config.horizon):
        out = step(state, Action(10.0, 8), config, rng)
        demand_total += out.demand
        sales_total += out.sales
        state = out.next_state
    assert state.inventory >= 0
    assert sales_total == demand_total


def test_run_episode_zero_order(scenario_factory):
    config = scenario_factory(horizon=6, b=2.0)
    episode = run_episode(config, lambda s: Action(config.price_mid, 0), np.random.default_rng(11))
    assert len(episode.steps) == 6
    for _, _, out in episode.steps:
        assert out.sales == 0
        assert out.reward == -2.0 * out.demand
    assert episode.discounted_return == pytest.approx(episode.total_reward)


def test_run_episode_is_deterministic(logistic_factory):
    config = logistic_factory()
    policy = lambda s: Action(10.0, 2)
    a = trajectory_frame(run_episode(config, policy, np.random.default_rng(5)))
    b = trajectory_frame(run_episode(config, policy, np.random.default_rng(5)))
    assert a.equals(b)
    assert list(a.columns) == TRAJECTORY_COLUMNS


def test_run_episode_discounting(scenario_factory):
    config = scenario_factory(horizon=4, gamma=0.5)
    episode = run_episode(config, lambda s: Action(10.0, 1), np.random.default_rng(2))
    rewards = [out.reward for _, _, out in episode.steps]
    assert episode.discounted_return == pytest.approx(sum(r * 0.5 ** t for t, r in enumerate(rewards)))


def test_encode_state_shape_and_scaling(scenario_factory):
    config = scenario_factory(z=3)
    vector = encode_state(reset(config), config)
    assert vector.shape == (10,)
    assert vector[0] == 0.0
    assert np.all((vector >= 0.0) & (vector <= 1.0))


def test_scenario_validation(scenario_factory):
    with pytest.raises(ConfigError):
        scenario_factory(horizon=0)
    with pytest.raises(ConfigError):
        scenario_factory(gamma=-0.1)
    with pytest.raises(ConfigError):
        scenario_factory(mode='consignment')
    with pytest.raises(ConfigError):
        scenario_factory(price_grid=(10.0, 5.0))


def _two_products(scenario_factory, cross):
    params = LogisticDemandParams.single_regressor(eta=20.0, delta=0.5, a=1.0, l=-0.1)
    configs = [scenario_factory(z=1), scenario_factory(z=1)]
    return configs, CrossPriceDemand(products=(params, params), cross=cross), params


def test_multi_product_decouples_without_cross_terms(scenario_factory):
    configs, model, params = _two_products(scenario_factory, ((0.0, 0.0), (0.0, 0.0)))
    states = multi_reset(configs)
    actions = [Action(5.0, 2), Action(15.0, 1)]
    joint = multi_product_step(states, actions, configs, model, np.random.default_rng(9))
    assert joint.joint_reward == pytest.approx(sum(o.reward for o in joint.outcomes))
    assert len(joint.next_states) == 2
    rates = model.rates([context_for(s, a) for s, a in zip(states, actions)])
    assert rates[0] > rates[1]


def test_multi_product_single_product_matches_step(scenario_factory):
    params = LogisticDemandParams.single_regressor(eta=20.0, delta=0.5, a=1.0, l=-0.1)
    config = scenario_factory(z=1, demand=LogisticDemand(params))
    model = CrossPriceDemand.uncoupled([params])
    state = reset(config)
    action = Action(10.0, 2)
    single = step(state, action, config, np.random.default_rng(21))
    multi = multi_product_step([state], [action], [config], model, np.random.default_rng(21))
    assert multi.outcomes[0] == single
    assert multi.joint_reward == single.reward


def test_multi_product_symmetric_products(scenario_factory):
    configs, model, _ = _two_products(scenario_factory, ((0.0, 0.02), (0.02, 0.0)))
    rng = np.random.default_rng(31)
    n = 20_000
    states = multi_reset(configs)
    actions = [Action(10.0, 0), Action(10.0, 0)]
    demands = np.array([[o.demand for o in multi_product_step(states, actions, configs, model, rng).outcomes]
                        for _ in range(n)])
    diff = demands[:, 0] - demands[:, 1]
    assert abs(diff.mean()) < 4.0 * diff.std() / np.sqrt(n)


def test_multi_product_cross_terms_shift_rates(scenario_factory):
    configs, model, _ = _two_products(scenario_factory, ((0.0, 0.05), (0.05, 0.0)))
    states = multi_reset(configs)
    cheap = model.rates([context_for(states[0], Action(10.0, 0)), context_for(states[1], Action(5.0, 0))])
    dear = model.rates([context_for(states[0], Action(10.0, 0)), context_for(states[1], Action(15.0, 0))])
    # substitutes: a dearer rival product raises own demand
    assert dear[0] > cheap[0]


def test_multi_product_rejects_mismatched_counts(scenario_factory):
    configs, model, _ = _two_products(scenario_factory, ((0.0, 0.0), (0.0, 0.0)))
    with pytest.raises(ConfigError):
        multi_product_step(multi_reset(configs), [Action(10.0, 0)], configs, model, np.random.default_rng(0))
    with pytest.raises(ConfigError):
        CrossPriceDemand(products=(model.products[0],), cross=((0.0, 0.0),))


def test_zero_discount_is_a_valid_scenario(scenario_factory):
    config = scenario_factory(horizon=3, gamma=0.0)
    assert config.gamma == 0.0


@pytest.mark.parametrize('fixed_cost', [False, True])
def test_joint_reward_recomputed_from_outcomes(scenario_factory, fixed_cost):
    params = LogisticDemandParams.single_regressor(eta=20.0, delta=0.5, a=1.0, l=-0.1)
    configs = [scenario_factory(z=0, fixed_cost=fixed_cost, f=3.0, h=0.5, b=2.0, c=1.5) for _ in range(2)]
    model = CrossPriceDemand(products=(params, params), cross=((0.0, 0.01), (0.01, 0.0)))
    actions = [Action(10.0, 3), Action(15.0, 0)]
    joint = multi_product_step(multi_reset(configs), actions, configs, model, np.random.default_rng(4))
    expected = sum(
        a.price * o.sales - 0.5 * o.ending_inventory - 2.0 * o.lost - 1.5 * a.quantity
        for a, o in zip(actions, joint.outcomes)
    )
    # only the first product orders, so at most one fixed charge
    assert joint.joint_reward == pytest.approx(expected - (3.0 if fixed_cost else 0.0))
    assert joint.joint_reward == pytest.approx(sum(o.reward for o in joint.outcomes))
