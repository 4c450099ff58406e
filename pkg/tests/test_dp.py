import itertools

import numpy as np
import pytest

from src.analytic.single_period import SinglePeriodModel
from src.baselines.policies import BSLPParams, StationaryPolicy
from src.cli.config import build_experiment, resolve_config, single_period_params
from src.dp.backward_induction import (
    DPInstance,
    backward_induction,
    cost_estimate,
    evaluate_policy,
    instance_from_scenario,
    policy_frame,
    policy_tables_from,
    tree_search_value,
    truncated_pmf,
    value_frame,
)
from src.market.simulator import CostParams, with_overrides
from src.utils.errors import BudgetExceededError, ConfigError


def _tiny(horizon=2, gamma=1.0, z=0, fixed_cost=False, quantity_grid=(0, 2, 4)):
    return DPInstance(
        horizon=horizon,
        price_grid=(10.0, 20.0, 30.0),
        quantity_grid=quantity_grid,
        rates=(3.0, 2.2, 1.4),
        costs=CostParams(h=1.0, b=4.0, c=5.0, f=6.0, z=z),
        gamma=gamma,
        fixed_cost=fixed_cost,
        support_cap=8
    )


def test_truncated_pmf_sums_to_one():
    pmf = truncated_pmf(3.3)
    assert pmf.sum() == pytest.approx(1.0, abs=1e-15)
    capped = truncated_pmf(3.3, support_cap=4)
    assert len(capped) == 5
    assert capped.sum() == pytest.approx(1.0, abs=1e-15)
    assert truncated_pmf(0.0).tolist() == [1.0]


def test_cost_estimate():
    assert cost_estimate(3, 3, 9, 2) == 81 + 81 ** 2
    assert cost_estimate(2, 1, 1, 3) == 2 + 4 + 8


def test_single_period_dp_matches_enumeration():
    experiment = build_experiment(resolve_config('appendix-c'))
    instance = instance_from_scenario(experiment.scenario)
    result = backward_induction(instance)
    p_star, x_star, f_star = SinglePeriodModel(single_period_params(experiment.scenario)).enumerate_optimum()

    assert instance.price_grid[result.price_idx[0, 0, 0]] == pytest.approx(p_star)
    assert instance.quantity_grid[result.qty_idx[0, 0, 0]] == x_star
    assert result.initial_value == pytest.approx(f_star, abs=1e-8)


@pytest.mark.parametrize('z, fixed_cost', [(0, False), (0, True), (1, False)])
def test_two_period_dp_matches_tree_search(z, fixed_cost):
    instance = _tiny(z=z, fixed_cost=fixed_cost)
    result = backward_induction(instance)
    tree_value, updates = tree_search_value(instance)
    assert result.initial_value == pytest.approx(tree_value, abs=1e-10)
    assert updates == cost_estimate(3, 3, 9, 2)


def test_tiny_preset_matches_tree_search():
    experiment = build_experiment(resolve_config('tiny-dp'))
    instance = instance_from_scenario(experiment.scenario, support_cap=experiment.dp.support_cap)
    assert instance.demand_pmfs().shape == (3, 9)
    result = backward_induction(instance)
    tree_value, _ = tree_search_value(instance)
    assert result.initial_value == pytest.approx(tree_value, abs=1e-10)


def test_optimal_tables_reproduce_their_value():
    instance = _tiny(horizon=3, z=1)
    result = backward_induction(instance)
    assert evaluate_policy(instance, result.price_idx, result.qty_idx) == pytest.approx(result.initial_value,
                                                                                      abs=1e-10)


def test_zero_discount_decouples_periods():
    instance = _tiny(horizon=3, gamma=0.0)
    result = backward_induction(instance)
    for t in range(instance.horizon):
        assert np.array_equal(result.price_idx[t], result.price_idx[-1])
        assert np.array_equal(result.qty_idx[t], result.qty_idx[-1])


def test_budget_exceeded_reports_cost_estimate():
    instance = DPInstance(horizon=2, price_grid=(10.0, 20.0, 30.0), quantity_grid=(0, 2, 4),
                          rates=(3.0, 2.2, 1.4), costs=CostParams(h=1.0, b=4.0, c=5.0), support_cap=8, budget=10)
    with pytest.raises(BudgetExceededError) as info:
        backward_induction(instance)
    assert info.value.cost_estimate == cost_estimate(3, 3, 9, 2)
    assert info.value.to_dict()['error'] == 'size'


def test_instance_validation():
    with pytest.raises(ConfigError):
        _tiny(z=3)
    with pytest.raises(ConfigError):
        _tiny(z=1, quantity_grid=(1, 2, 3))
    with pytest.raises(ConfigError):
        DPInstance(horizon=1, price_grid=(10.0,), quantity_grid=(0,), rates=(1.0, 2.0), costs=CostParams())


def test_instance_from_scenario_rejects_dynamic_scenarios(scenario_factory, logistic_factory):
    with pytest.raises(ConfigError):
        instance_from_scenario(scenario_factory(mode='backlog'))
    with pytest.raises(ConfigError):
        instance_from_scenario(logistic_factory())


def test_stationary_policy_is_never_better_than_optimum(scenario_factory):
    scenario = scenario_factory(horizon=3, quantity_grid=(0, 2, 4))
    instance = instance_from_scenario(scenario, support_cap=10)
    result = backward_induction(instance)
    policy = StationaryPolicy('bslp', BSLPParams(base_stock=4, list_price=10.0), scenario)
    value = evaluate_policy(instance, *policy_tables_from(instance, policy))
    assert value <= result.initial_value + 1e-10


def test_value_and_policy_frames():
    instance = _tiny(z=1)
    result = backward_induction(instance)
    values = value_frame(instance, result)
    assert list(values.columns) == ['t', 'inventory', 'pipeline', 'value', 'price', 'qty']
    assert len(values) == instance.horizon * (instance.inventory_cap + 1) * len(instance.pipelines)
    assert set(values['pipeline']) == {'0', '2', '4'}
    assert list(policy_frame(instance, result).columns) == ['t', 'inventory', 'pipeline', 'price', 'qty']


def test_scenario_overrides_change_instance(scenario_factory):
    scenario = scenario_factory(horizon=2)
    longer = instance_from_scenario(with_overrides(scenario, horizon=4), support_cap=6)
    assert longer.horizon == 4


def test_random_policy_tables_never_beat_optimum():
    instance = _tiny(horizon=3, z=1, quantity_grid=(0, 2))
    optimum = backward_induction(instance).initial_value
    rng = np.random.default_rng(2024)
    shape = (instance.horizon, instance.inventory_cap + 1, len(instance.pipelines))
    for _ in range(100):
        price_idx = rng.integers(instance.n_prices, size=shape)
        qty_idx = rng.integers(instance.n_quantities, size=shape)
        assert evaluate_policy(instance, price_idx, qty_idx) <= optimum + 1e-10


def test_optimum_equals_best_of_all_policy_functions():
    instance = DPInstance(
        horizon=2,
        price_grid=(10.0, 20.0),
        quantity_grid=(0, 1),
        rates=(1.5, 0.8),
        costs=CostParams(h=1.0, b=4.0, c=5.0),
        support_cap=4
    )
    n_inv = instance.inventory_cap + 1
    actions = [(i, j) for i in range(instance.n_prices) for j in range(instance.n_quantities)]
    best = -np.inf
    # every deterministic map (t, inventory) -> (price, quantity)
    for choice in itertools.product(actions, repeat=instance.horizon * n_inv):
        table = np.array(choice).reshape(instance.horizon, n_inv, 1, 2)
        best = max(best, evaluate_policy(instance, table[..., 0], table[..., 1]))
    assert backward_induction(instance).initial_value == pytest.approx(best, abs=1e-10)
