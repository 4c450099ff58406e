from dataclasses import asdict, dataclass
from typing import Callable

import numpy as np

from src.market.simulator import Action, MarketState, ScenarioConfig
from src.utils.errors import ConfigError

Policy = Callable[[MarketState], Action]

BSLP = 'bslp'
SSP = 'ssp'
MYOPIC = 'myopic'
POLICY_KINDS = (BSLP, SSP, MYOPIC)


def snap_price(price: float, config: ScenarioConfig) -> float:
    grid = np.asarray(config.price_grid)
    price = float(np.clip(price, config.price_min, config.price_max))
    return float(grid[int(np.argmin(np.abs(grid - price)))])


def snap_quantity(quantity: float, config: ScenarioConfig) -> int:
    grid = np.asarray(config.quantity_grid)
    quantity = float(np.clip(quantity, 0, config.q_max))
    return int(grid[int(np.argmin(np.abs(grid - quantity)))])


@dataclass(frozen=True)
class BSLPParams:
    base_stock: int
    list_price: float
    markdown_slope: float = 0.0

    def __post_init__(self):
        if self.markdown_slope > 0:
            raise ConfigError("markdown_slope deve ser <= 0 (preço não crescente no estoque)")

    def price_at(self, position: float) -> float:
        return self.list_price + self.markdown_slope * max(0.0, position - self.base_stock)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class SSPParams:
    s: int
    S: int
    list_price: float
    markdown_slope: float = 0.0

    def __post_init__(self):
        if not self.s < self.S:
            raise ConfigError(f"Exige s < S, recebido s={self.s}, S={self.S}")
        if self.markdown_slope > 0:
            raise ConfigError("markdown_slope deve ser <= 0 (preço não crescente no estoque)")

    def price_at(self, inventory: float) -> float:
        return self.list_price + self.markdown_slope * max(0.0, inventory - self.S)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class MyopicParams:
    base_stock: int
    pipeline_weight: float
    intercept: float
    slope: float = 0.0

    def __post_init__(self):
        if not 0 <= self.pipeline_weight <= 1:
            raise ConfigError("pipeline_weight deve estar em [0, 1]")
        if self.slope > 0:
            raise ConfigError("slope deve ser <= 0")

    def to_dict(self) -> dict:
        return asdict(self)


def act_bslp(params: BSLPParams, state: MarketState, config: ScenarioConfig) -> Action:
    x = state.position
    if x < params.base_stock:
        return Action(price=snap_price(params.list_price, config),
                      quantity=snap_quantity(params.base_stock - x, config))
    return Action(price=snap_price(params.price_at(x), config), quantity=0)


def act_ssp(params: SSPParams, state: MarketState, config: ScenarioConfig) -> Action:
    x = state.inventory
    quantity = snap_quantity(params.S - x, config) if x < params.s else 0
    return Action(price=snap_price(params.price_at(x), config), quantity=quantity)


def act_myopic(params: MyopicParams, state: MarketState, config: ScenarioConfig) -> Action:
    position = state.inventory + params.pipeline_weight * sum(state.pipeline)
    quantity = snap_quantity(max(0.0, params.base_stock - position), config)
    return Action(price=snap_price(params.intercept + params.slope * position, config), quantity=quantity)


class StationaryPolicy:
    """Binds a parameterised rule to a scenario so it plugs into run_episode."""

    def __init__(self, kind: str, params, config: ScenarioConfig):
        if kind not in POLICY_KINDS:
            raise ConfigError(f"Política desconhecida: {kind}. Opções: {POLICY_KINDS}")
        self.kind = kind
        self.params = params
        self.config = config
        self._act = {BSLP: act_bslp, SSP: act_ssp, MYOPIC: act_myopic}[kind]

    def __call__(self, state: MarketState) -> Action:
        return self._act(self.params, state, self.config)


def build_params(kind: str, values: dict):
    if kind == BSLP:
        return BSLPParams(**values)
    if kind == SSP:
        return SSPParams(**values)
    if kind == MYOPIC:
        return MyopicParams(**values)
    raise ConfigError(f"Política desconhecida: {kind}. Opções: {POLICY_KINDS}")


def random_policy(config: ScenarioConfig, rng: np.random.Generator) -> Policy:
    def act(state: MarketState) -> Action:
        price = config.price_grid[int(rng.integers(len(config.price_grid)))]
        quantity = config.quantity_grid[int(rng.integers(len(config.quantity_grid)))]
        return Action(price=price, quantity=quantity)
    return act


def zero_order_policy(config: ScenarioConfig) -> Policy:
    def act(state: MarketState) -> Action:
        return Action(price=config.price_mid, quantity=0)
    return act
