import itertools
from dataclasses import dataclass
from typing import Callable, List, Optional, Tuple

import numpy as np
import pandas as pd
from scipy.stats import poisson

from src.analytic.single_period import poisson_pmf_upto
from src.demand.models import MarketContext
from src.market.simulator import LOST_SALES, Action, CostParams, MarketState, ScenarioConfig
from src.utils.errors import BudgetExceededError, ConfigError

DEFAULT_BUDGET = 10 ** 8
MAX_PIPELINE_LEAD_TIME = 2
MAX_PIPELINE_QUANTITIES = 5


def cost_estimate(n_prices: int, n_quantities: int, n_demands: int, horizon: int) -> int:
    branching = n_prices * n_quantities * n_demands
    return sum(branching ** t for t in range(1, horizon + 1))


def truncated_pmf(lam: float, tail_tolerance: float = 1e-12, support_cap: Optional[int] = None) -> np.ndarray:
    if support_cap is None:
        support_cap = int(poisson.isf(tail_tolerance, lam)) if lam > 0 else 0
    pmf = poisson_pmf_upto(lam, support_cap)
    # tail mass goes to the last support point so the pmf sums to one
    pmf[-1] += max(0.0, 1.0 - pmf.sum())
    return pmf


@dataclass(frozen=True)
class DPInstance:
    horizon: int
    price_grid: Tuple[float, ...]
    quantity_grid: Tuple[int, ...]
    rates: Tuple[float, ...]
    costs: CostParams
    gamma: float = 1.0
    x0: int = 0
    fixed_cost: bool = False
    tail_tolerance: float = 1e-12
    support_cap: Optional[int] = None
    budget: int = DEFAULT_BUDGET

    def __post_init__(self):
        object.__setattr__(self, 'price_grid', tuple(float(p) for p in self.price_grid))
        object.__setattr__(self, 'quantity_grid', tuple(int(q) for q in self.quantity_grid))
        object.__setattr__(self, 'rates', tuple(float(r) for r in self.rates))
        if self.horizon < 1:
            raise ConfigError("Horizonte do DP deve ser >= 1")
        if len(self.rates) != len(self.price_grid):
            raise ConfigError("É preciso uma taxa de demanda por preço da grade")
        if any(r < 0 for r in self.rates):
            raise ConfigError("Taxas de demanda devem ser não negativas")
        if not 0 <= self.gamma <= 1:
            raise ConfigError(f"gamma deve estar em [0, 1], recebido {self.gamma}")
        if self.x0 < 0 or self.quantity_grid[0] < 0:
            raise ConfigError("Estoque inicial e quantidades devem ser não negativos")
        z = self.costs.z
        if z > MAX_PIPELINE_LEAD_TIME:
            raise ConfigError(f"DP exato suporta lead time <= {MAX_PIPELINE_LEAD_TIME}, recebido {z}")
        if z > 0 and len(self.quantity_grid) > MAX_PIPELINE_QUANTITIES:
            raise ConfigError(f"Com lead time > 0 a grade de quantidades deve ter <= {MAX_PIPELINE_QUANTITIES} valores")
        if z > 0 and self.quantity_grid[0] != 0:
            raise ConfigError("Com lead time > 0 a grade de quantidades deve começar em 0")

    @property
    def n_prices(self) -> int:
        return len(self.price_grid)

    @property
    def n_quantities(self) -> int:
        return len(self.quantity_grid)

    @property
    def inventory_cap(self) -> int:
        return self.x0 + self.horizon * max(self.quantity_grid)

    @property
    def pipelines(self) -> List[Tuple[int, ...]]:
        return list(itertools.product(range(self.n_quantities), repeat=self.costs.z))

    def demand_pmfs(self) -> np.ndarray:
        pmfs = [truncated_pmf(lam, self.tail_tolerance, self.support_cap) for lam in self.rates]
        width = max(len(p) for p in pmfs)
        table = np.zeros((self.n_prices, width))
        for i, pmf in enumerate(pmfs):
            table[i, :len(pmf)] = pmf
        return table

    def planned_updates(self) -> int:
        n_states = (self.inventory_cap + 1) * len(self.pipelines)
        return self.horizon * n_states * self.n_prices * self.n_quantities * self.demand_pmfs().shape[1]


@dataclass
class DPResult:
    values: np.ndarray
    price_idx: np.ndarray
    qty_idx: np.ndarray
    value_updates: int
    pipelines: List[Tuple[int, ...]]
    x0: int = 0

    @property
    def initial_value(self) -> float:
        return float(self.values[0, self.x0, 0])


class _Tables:
    """Per-price expected immediate reward and next-inventory transition matrices."""

    def __init__(self, instance: DPInstance):
        self.instance = instance
        self.pmfs = instance.demand_pmfs()
        self.n_demands = self.pmfs.shape[1]
        cap = instance.inventory_cap
        self.max_on_hand = cap + max(instance.quantity_grid)
        h, b = instance.costs.h, instance.costs.b
        on_hand = np.arange(self.max_on_hand + 1)
        demand = np.arange(self.n_demands)

        sold = np.minimum(demand[None, :], on_hand[:, None])
        leftover = np.maximum(on_hand[:, None] - demand[None, :], 0)
        short = np.maximum(demand[None, :] - on_hand[:, None], 0)

        self.reward = np.empty((instance.n_prices, self.max_on_hand + 1))
        self.transition = np.zeros((instance.n_prices, self.max_on_hand + 1, cap + 1))
        nxt = np.minimum(leftover, cap)
        for i, (price, pmf) in enumerate(zip(instance.price_grid, self.pmfs)):
            self.reward[i] = (price * sold - h * leftover - b * short) @ pmf
            for o in range(self.max_on_hand + 1):
                np.add.at(self.transition[i, o], nxt[o], pmf)

        q = np.asarray(instance.quantity_grid, dtype=float)
        self.order_cost = instance.costs.c * q
        if instance.fixed_cost:
            self.order_cost = self.order_cost + instance.costs.f * (q > 0)


def _pipeline_index(pipelines: List[Tuple[int, ...]]) -> dict:
    return {pipe: k for k, pipe in enumerate(pipelines)}


def _shift(pipe: Tuple[int, ...], q_idx: int) -> Tuple[int, ...]:
    return pipe[1:] + (q_idx,) if pipe else ()


def backward_induction(instance: DPInstance) -> DPResult:
    planned = instance.planned_updates()
    if planned > instance.budget:
        n_demands = instance.demand_pmfs().shape[1]
        estimate = cost_estimate(instance.n_prices, instance.n_quantities, n_demands, instance.horizon)
        raise BudgetExceededError(
            f"Instância excede o orçamento: {planned} atualizações > {instance.budget}; "
            f"estimativa de custo sum_t (PQD)^t = {estimate}",
            cost_estimate=estimate
        )

    tables = _Tables(instance)
    pipelines = instance.pipelines
    index = _pipeline_index(pipelines)
    T = instance.horizon
    n_inv = instance.inventory_cap + 1
    n_pipe = len(pipelines)
    P, Q = instance.n_prices, instance.n_quantities
    quantities = instance.quantity_grid
    inventory = np.arange(n_inv)

    values = np.zeros((T + 1, n_inv, n_pipe))
    price_idx = np.zeros((T, n_inv, n_pipe), dtype=int)
    qty_idx = np.zeros((T, n_inv, n_pipe), dtype=int)

    for t in range(T - 1, -1, -1):
        # E[V_{t+1}(next inventory, pipe)] for every price and on-hand level
        continuation = np.einsum('pon,nk->pok', tables.transition, values[t + 1])
        for k, pipe in enumerate(pipelines):
            q_values = np.empty((P, Q, n_inv))
            for j in range(Q):
                arriving = quantities[pipe[0]] if pipe else quantities[j]
                on_hand = inventory + arriving
                nk = index[_shift(pipe, j)]
                q_values[:, j, :] = (tables.reward[:, on_hand] - tables.order_cost[j]
                                     + instance.gamma * continuation[:, on_hand, nk])
            flat = q_values.reshape(P * Q, n_inv)
            best = np.argmax(flat, axis=0)
            values[t, :, k] = flat[best, inventory]
            price_idx[t, :, k] = best // Q
            qty_idx[t, :, k] = best % Q

    result = DPResult(values=values, price_idx=price_idx, qty_idx=qty_idx,
                      value_updates=planned, pipelines=pipelines, x0=instance.x0)
    return result


def evaluate_policy(instance: DPInstance, price_idx: np.ndarray, qty_idx: np.ndarray) -> float:
    tables = _Tables(instance)
    pipelines = instance.pipelines
    index = _pipeline_index(pipelines)
    n_inv = instance.inventory_cap + 1
    quantities = instance.quantity_grid

    prob = np.zeros((n_inv, len(pipelines)))
    prob[instance.x0, 0] = 1.0
    total = 0.0
    discount = 1.0
    for t in range(instance.horizon):
        nxt = np.zeros_like(prob)
        for inv, k in zip(*np.nonzero(prob)):
            mass = prob[inv, k]
            i = int(price_idx[t, inv, k])
            j = int(qty_idx[t, inv, k])
            pipe = pipelines[k]
            arriving = quantities[pipe[0]] if pipe else quantities[j]
            on_hand = inv + arriving
            total += discount * mass * (tables.reward[i, on_hand] - tables.order_cost[j])
            nxt[:, index[_shift(pipe, j)]] += mass * tables.transition[i, on_hand]
        prob = nxt
        discount *= instance.gamma
    return float(total)


def tree_search_value(instance: DPInstance) -> Tuple[float, int]:
    """Bellman recursion on the full scenario tree, without state merging.

    Returns the optimal value and the number of value updates, which equals
    sum_t (P*Q*D)^t.
    """
    pmfs = instance.demand_pmfs()
    n_demands = pmfs.shape[1]
    h, b, c, f = instance.costs.h, instance.costs.b, instance.costs.c, instance.costs.f
    quantities = instance.quantity_grid
    counter = [0]

    def node(t: int, inventory: int, pipe: Tuple[int, ...]) -> float:
        if t == instance.horizon:
            return 0.0
        best = -np.inf
        for i, price in enumerate(instance.price_grid):
            for j, q in enumerate(quantities):
                arriving = quantities[pipe[0]] if pipe else q
                on_hand = inventory + arriving
                order = c * q + (f if instance.fixed_cost and q > 0 else 0.0)
                child_pipe = _shift(pipe, j)
                total = 0.0
                for d in range(n_demands):
                    counter[0] += 1
                    reward = price * min(d, on_hand) - h * max(on_hand - d, 0) - b * max(d - on_hand, 0) - order
                    total += pmfs[i, d] * (reward + instance.gamma * node(t + 1, max(on_hand - d, 0), child_pipe))
                best = max(best, total)
        return best

    value = node(0, instance.x0, tuple([0] * instance.costs.z))
    return float(value), counter[0]


def instance_from_scenario(scenario: ScenarioConfig, budget: int = DEFAULT_BUDGET,
                           support_cap: Optional[int] = None) -> DPInstance:
    if scenario.mode != LOST_SALES:
        raise ConfigError("O oráculo DP suporta apenas o modo lost-sales")
    if scenario.competitor.kind != 'fixed' or scenario.reference_smoothing != 0:
        raise ConfigError("O oráculo DP exige concorrente fixo e preço de referência estático")
    mid = scenario.price_mid
    rates = tuple(scenario.demand.rate(MarketContext(p, mid, mid)) for p in scenario.price_grid)
    return DPInstance(
        horizon=scenario.horizon,
        price_grid=scenario.price_grid,
        quantity_grid=scenario.quantity_grid,
        rates=rates,
        costs=scenario.costs,
        gamma=scenario.gamma,
        x0=scenario.x0,
        fixed_cost=scenario.fixed_cost,
        support_cap=support_cap,
        budget=budget
    )


def _nearest_index(grid: Tuple[float, ...], value: float) -> int:
    return int(np.argmin(np.abs(np.asarray(grid, dtype=float) - value)))


def policy_tables_from(instance: DPInstance, policy: Callable[[MarketState], Action]) -> Tuple[np.ndarray, np.ndarray]:
    pipelines = instance.pipelines
    n_inv = instance.inventory_cap + 1
    mid = instance.price_grid[(instance.n_prices - 1) // 2]
    price_idx = np.zeros((instance.horizon, n_inv, len(pipelines)), dtype=int)
    qty_idx = np.zeros_like(price_idx)
    for t in range(instance.horizon):
        for inv in range(n_inv):
            for k, pipe in enumerate(pipelines):
                state = MarketState(
                    inventory=inv,
                    pipeline=tuple(instance.quantity_grid[j] for j in pipe),
                    last_demand=0,
                    last_price=mid,
                    competitor_price=mid,
                    reference_price=mid,
                    last_lost=0,
                    period=t
                )
                action = policy(state)
                price_idx[t, inv, k] = _nearest_index(instance.price_grid, action.price)
                qty_idx[t, inv, k] = _nearest_index(instance.quantity_grid, action.quantity)
    return price_idx, qty_idx


def value_frame(instance: DPInstance, result: DPResult) -> pd.DataFrame:
    rows = []
    for t in range(instance.horizon):
        for inv in range(instance.inventory_cap + 1):
            for k, pipe in enumerate(result.pipelines):
                rows.append({
                    't': t + 1,
                    'inventory': inv,
                    'pipeline': '|'.join(str(instance.quantity_grid[j]) for j in pipe),
                    'value': float(result.values[t, inv, k]),
                    'price': instance.price_grid[result.price_idx[t, inv, k]],
                    'qty': instance.quantity_grid[result.qty_idx[t, inv, k]]
                })
    return pd.DataFrame(rows, columns=['t', 'inventory', 'pipeline', 'value', 'price', 'qty'])


def policy_frame(instance: DPInstance, result: DPResult) -> pd.DataFrame:
    return value_frame(instance, result)[['t', 'inventory', 'pipeline', 'price', 'qty']]
