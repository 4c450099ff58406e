from dataclasses import dataclass
from typing import List, Sequence, Tuple

import numpy as np

from src.demand.models import LogisticDemandParams, MarketContext, demand_rate_logistic, sample_demand
from src.market.simulator import (
    Action,
    MarketState,
    ScenarioConfig,
    StepOutcome,
    check_action,
    apply_demand,
    context_for,
    period_reward,
    reset,
)
from src.utils.errors import ConfigError


@dataclass(frozen=True)
class CrossPriceDemand:
    """Logistic demand per product with linear cross-price terms in the logit.

    cross[i][j] is the logit shift of product i per unit of product j's
    price; the diagonal is ignored.
    """

    products: Tuple[LogisticDemandParams, ...]
    cross: Tuple[Tuple[float, ...], ...]

    def __post_init__(self):
        n = len(self.products)
        if n < 1:
            raise ConfigError("Demanda multiproduto precisa de ao menos um produto")
        if len(self.cross) != n or any(len(row) != n for row in self.cross):
            raise ConfigError(f"Matriz de elasticidade cruzada deve ser {n}x{n}")
        object.__setattr__(self, 'products', tuple(self.products))
        object.__setattr__(self, 'cross', tuple(tuple(float(v) for v in row) for row in self.cross))

    @property
    def n_products(self) -> int:
        return len(self.products)

    @classmethod
    def uncoupled(cls, products: Sequence[LogisticDemandParams]) -> 'CrossPriceDemand':
        n = len(products)
        return cls(products=tuple(products), cross=tuple(tuple(0.0 for _ in range(n)) for _ in range(n)))

    def rates(self, contexts: Sequence[MarketContext]) -> List[float]:
        if len(contexts) != self.n_products:
            raise ConfigError(f"Esperados {self.n_products} contextos, recebidos {len(contexts)}")
        prices = [ctx.own_price for ctx in contexts]
        rates = []
        for i, (params, ctx) in enumerate(zip(self.products, contexts)):
            shift = 0.0
            for j, p_j in enumerate(prices):
                if j != i:
                    shift += self.cross[i][j] * p_j
            rates.append(demand_rate_logistic(params, ctx, shift))
        return rates


@dataclass(frozen=True)
class MultiStepOutcome:
    outcomes: Tuple[StepOutcome, ...]
    joint_reward: float

    @property
    def next_states(self) -> Tuple[MarketState, ...]:
        return tuple(o.next_state for o in self.outcomes)


def multi_reset(configs: Sequence[ScenarioConfig]) -> Tuple[MarketState, ...]:
    return tuple(reset(c) for c in configs)


def multi_product_step(states: Sequence[MarketState], actions: Sequence[Action],
                       configs: Sequence[ScenarioConfig], cross_model: CrossPriceDemand,
                       rng: np.random.Generator) -> MultiStepOutcome:
    n = cross_model.n_products
    if not len(states) == len(actions) == len(configs) == n:
        raise ConfigError(
            f"Número de produtos inconsistente: estados={len(states)}, ações={len(actions)}, "
            f"configs={len(configs)}, demanda={n}"
        )

    for action, config in zip(actions, configs):
        check_action(action, config)

    rates = cross_model.rates([context_for(s, a) for s, a in zip(states, actions)])

    outcomes = []
    for state, action, config, rate in zip(states, actions, configs, rates):
        demand = sample_demand(rate, rng)
        outcomes.append(apply_demand(state, action, demand, config, rng))

    # sum of per-product period rewards; with the fixed-cost switch on each ordering product also pays f
    joint = 0.0
    for outcome, action, config in zip(outcomes, actions, configs):
        joint += period_reward(action.price, outcome.sales, outcome.ending_inventory, outcome.lost,
                               int(action.quantity), config.costs, config.fixed_cost)
    return MultiStepOutcome(outcomes=tuple(outcomes), joint_reward=joint)
