from dataclasses import dataclass, field, replace
from typing import Callable, List, Optional, Tuple

import numpy as np
import pandas as pd

from src.demand.competition import CompetitorStrategy, competitor_next_price, update_reference_price
from src.demand.models import DemandModel, MarketContext, sample_demand
from src.utils.errors import ConfigError, DomainError

LOST_SALES = 'lost-sales'
BACKLOG = 'backlog'
TRAJECTORY_COLUMNS = ['t', 'price', 'qty', 'demand', 'sales', 'lost', 'inventory', 'reward']


@dataclass(frozen=True)
class CostParams:
    h: float = 4.0
    b: float = 10.0
    c: float = 5.0
    f: float = 0.0
    z: int = 0

    def __post_init__(self):
        for name in ('h', 'b', 'c', 'f'):
            if getattr(self, name) < 0:
                raise ConfigError(f"Custo {name} não pode ser negativo")
        if int(self.z) != self.z or self.z < 0:
            raise ConfigError(f"Lead time z deve ser inteiro não negativo, recebido {self.z}")
        object.__setattr__(self, 'z', int(self.z))


@dataclass(frozen=True)
class Action:
    price: float
    quantity: int


@dataclass(frozen=True)
class MarketState:
    inventory: int
    pipeline: Tuple[int, ...]
    last_demand: int
    last_price: float
    competitor_price: float
    reference_price: float
    last_lost: int
    period: int

    @property
    def position(self) -> int:
        return self.inventory + sum(self.pipeline)


@dataclass(frozen=True)
class StepOutcome:
    demand: int
    sales: int
    lost: int
    ending_inventory: int
    reward: float
    next_state: MarketState
    arrived: int = 0


@dataclass(frozen=True)
class ScenarioConfig:
    costs: CostParams
    demand: DemandModel
    competitor: CompetitorStrategy
    price_grid: Tuple[float, ...]
    quantity_grid: Tuple[int, ...]
    mode: str = LOST_SALES
    fixed_cost: bool = False
    horizon: int = 20
    gamma: float = 1.0
    x0: int = 0
    reference_smoothing: float = 0.5
    seed: int = 0
    inventory_scale: Optional[float] = None
    demand_scale: Optional[float] = None
    name: str = 'scenario'

    def __post_init__(self):
        object.__setattr__(self, 'price_grid', tuple(float(p) for p in self.price_grid))
        object.__setattr__(self, 'quantity_grid', tuple(int(q) for q in self.quantity_grid))
        if len(self.price_grid) < 1 or len(self.quantity_grid) < 1:
            raise ConfigError("Grades de preço e quantidade não podem ser vazias")
        if any(np.diff(self.price_grid) <= 0) or any(np.diff(self.quantity_grid) <= 0):
            raise ConfigError("Grades devem ser estritamente crescentes")
        if self.quantity_grid[0] < 0:
            raise ConfigError("Quantidades devem ser não negativas")
        if self.mode not in (LOST_SALES, BACKLOG):
            raise ConfigError(f"Modo desconhecido: {self.mode}")
        if self.horizon < 1:
            raise ConfigError(f"Horizonte T deve ser >= 1, recebido {self.horizon}")
        if not 0 <= self.gamma <= 1:
            raise ConfigError(f"gamma deve estar em [0, 1], recebido {self.gamma}")
        if self.x0 < 0 and self.mode == LOST_SALES:
            raise ConfigError("Estoque inicial negativo só é permitido em modo backlog")
        if not 0 <= self.reference_smoothing <= 1:
            raise ConfigError("reference_smoothing deve estar em [0, 1]")

    @property
    def lead_time(self) -> int:
        return self.costs.z

    @property
    def price_min(self) -> float:
        return self.price_grid[0]

    @property
    def price_max(self) -> float:
        return self.price_grid[-1]

    @property
    def q_max(self) -> int:
        return self.quantity_grid[-1]

    @property
    def price_mid(self) -> float:
        return self.price_grid[(len(self.price_grid) - 1) // 2]

    @property
    def inventory_bound(self) -> float:
        if self.inventory_scale is not None:
            return float(self.inventory_scale)
        return float(max(1, self.x0 + (self.lead_time + 1) * self.q_max))

    @property
    def demand_bound(self) -> float:
        if self.demand_scale is not None:
            return float(self.demand_scale)
        return float(max(1, 2 * self.q_max))

    @property
    def state_dim(self) -> int:
        return 7 + self.lead_time


@dataclass
class Episode:
    steps: List[Tuple[MarketState, Action, StepOutcome]] = field(default_factory=list)
    total_reward: float = 0.0
    discounted_return: float = 0.0


def reset(config: ScenarioConfig) -> MarketState:
    mid = config.price_mid
    return MarketState(
        inventory=int(config.x0),
        pipeline=tuple([0] * config.lead_time),
        last_demand=0,
        last_price=mid,
        competitor_price=mid,
        reference_price=mid,
        last_lost=0,
        period=0
    )


def context_for(state: MarketState, action: Action) -> MarketContext:
    return MarketContext(
        own_price=action.price,
        competitor_price=state.competitor_price,
        reference_price=state.reference_price
    )


def check_action(action: Action, config: ScenarioConfig):
    if not config.price_min - 1e-9 <= action.price <= config.price_max + 1e-9:
        raise DomainError(f"Preço {action.price} fora do domínio [{config.price_min}, {config.price_max}]")
    if int(action.quantity) != action.quantity or not 0 <= action.quantity <= config.q_max:
        raise DomainError(f"Quantidade {action.quantity} fora do domínio [0, {config.q_max}]")


def period_reward(price: float, sales: int, inventory: int, lost: int, quantity: int,
                  costs: CostParams, fixed_cost: bool) -> float:
    reward = price * sales - costs.h * max(inventory, 0) - costs.b * lost - costs.c * quantity
    if fixed_cost and quantity > 0:
        reward -= costs.f
    return reward


def apply_demand(state: MarketState, action: Action, demand: int, config: ScenarioConfig,
                 rng: Optional[np.random.Generator] = None) -> StepOutcome:
    q = int(action.quantity)
    if config.lead_time > 0:
        arriving = state.pipeline[0]
        pipeline = state.pipeline[1:] + (q,)
    else:
        arriving = q
        pipeline = ()

    previous = state.inventory
    if config.mode == LOST_SALES:
        on_hand = previous + arriving
        sales = min(demand, on_hand)
        ending = max(on_hand - demand, 0)
        lost = max(demand - on_hand, 0)
    else:
        # backlog is served first; revenue is booked when units ship
        physical = max(previous, 0) + arriving
        owed = max(-previous, 0) + demand
        sales = min(physical, owed)
        ending = previous + arriving - demand
        lost = max(0, -ending)

    reward = period_reward(action.price, sales, ending, lost, q, config.costs, config.fixed_cost)

    next_state = MarketState(
        inventory=int(ending),
        pipeline=tuple(int(v) for v in pipeline),
        last_demand=int(demand),
        last_price=float(action.price),
        competitor_price=competitor_next_price(config.competitor, action.price, state.competitor_price, rng),
        reference_price=update_reference_price(state.reference_price, action.price, state.competitor_price,
                                               config.reference_smoothing),
        last_lost=int(lost),
        period=state.period + 1
    )

    return StepOutcome(
        demand=int(demand),
        sales=int(sales),
        lost=int(lost),
        ending_inventory=int(ending),
        reward=float(reward),
        next_state=next_state,
        arrived=int(arriving)
    )


def step(state: MarketState, action: Action, config: ScenarioConfig, rng: np.random.Generator) -> StepOutcome:
    check_action(action, config)
    rate = config.demand.rate(context_for(state, action))
    demand = sample_demand(rate, rng)
    return apply_demand(state, action, demand, config, rng)


def run_episode(config: ScenarioConfig, policy: Callable[[MarketState], Action],
                rng: np.random.Generator) -> Episode:
    if hasattr(policy, 'reset'):
        policy.reset()

    state = reset(config)
    episode = Episode()
    discount = 1.0
    for _ in range(config.horizon):
        action = policy(state)
        outcome = step(state, action, config, rng)
        episode.steps.append((state, action, outcome))
        episode.total_reward += outcome.reward
        episode.discounted_return += discount * outcome.reward
        discount *= config.gamma
        state = outcome.next_state

    return episode


def encode_state(state: MarketState, config: ScenarioConfig) -> np.ndarray:
    inv_bound = config.inventory_bound
    dem_bound = config.demand_bound
    p_max = config.price_max if config.price_max > 0 else 1.0
    q_bound = float(max(config.q_max, 1))

    features = [
        state.inventory / inv_bound,
        state.last_lost / dem_bound,
        state.last_demand / dem_bound,
        state.last_price / p_max,
        state.competitor_price / p_max,
        state.reference_price / p_max,
    ]
    features.extend(q / q_bound for q in state.pipeline)
    features.append(state.period / config.horizon)

    # negative inventory is carried by the lost-sales feature in backlog mode
    return np.clip(np.asarray(features, dtype=float), 0.0, 1.0)


def trajectory_frame(episode: Episode) -> pd.DataFrame:
    rows = []
    for state, action, outcome in episode.steps:
        rows.append({
            't': state.period + 1,
            'price': action.price,
            'qty': action.quantity,
            'demand': outcome.demand,
            'sales': outcome.sales,
            'lost': outcome.lost,
            'inventory': outcome.ending_inventory,
            'reward': outcome.reward
        })
    return pd.DataFrame(rows, columns=TRAJECTORY_COLUMNS)


def with_overrides(config: ScenarioConfig, **changes) -> ScenarioConfig:
    return replace(config, **changes)
