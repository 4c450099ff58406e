from typing import List, Sequence, Tuple

import numpy as np

from src.market.multi_product import CrossPriceDemand, multi_product_step
from src.market.simulator import Action, MarketState, ScenarioConfig, StepOutcome, encode_state, reset, step
from src.utils.errors import ConfigError

PRICE_ROLE = 'price'
QUANTITY_ROLE = 'quantity'


class MarketEnv:
    """Joint environment of N products, each driven by a pricing and a replenishment agent.

    Agents are ordered price_1, quantity_1, ..., price_N, quantity_N. Every
    agent observes the encoded state of its own product; the critic sees the
    concatenation of all products' encodings.
    """

    def __init__(self, configs: Sequence[ScenarioConfig]):
        self.configs = tuple(configs)
        if not self.configs:
            raise ConfigError("Ambiente precisa de ao menos um produto")
        horizons = {c.horizon for c in self.configs}
        gammas = {c.gamma for c in self.configs}
        if len(horizons) != 1 or len(gammas) != 1:
            raise ConfigError("Todos os produtos devem compartilhar horizonte e gamma")
        self.horizon = self.configs[0].horizon
        self.gamma = self.configs[0].gamma

    @property
    def n_products(self) -> int:
        return len(self.configs)

    @property
    def n_agents(self) -> int:
        return 2 * self.n_products

    def agent_role(self, agent: int) -> str:
        return PRICE_ROLE if agent % 2 == 0 else QUANTITY_ROLE

    def agent_product(self, agent: int) -> int:
        return agent // 2

    def action_dim(self, agent: int) -> int:
        config = self.configs[self.agent_product(agent)]
        if self.agent_role(agent) == PRICE_ROLE:
            return len(config.price_grid)
        return len(config.quantity_grid)

    def observation_dim(self, agent: int) -> int:
        return self.configs[self.agent_product(agent)].state_dim

    @property
    def global_dim(self) -> int:
        return sum(c.state_dim for c in self.configs)

    def reset(self) -> Tuple[MarketState, ...]:
        return tuple(reset(c) for c in self.configs)

    def observation(self, states: Sequence[MarketState], agent: int) -> np.ndarray:
        product = self.agent_product(agent)
        return encode_state(states[product], self.configs[product])

    def global_observation(self, states: Sequence[MarketState]) -> np.ndarray:
        return np.concatenate([encode_state(s, c) for s, c in zip(states, self.configs)])

    def decode_actions(self, indices: Sequence[int]) -> List[Action]:
        actions = []
        for product, config in enumerate(self.configs):
            price = config.price_grid[int(indices[2 * product])]
            quantity = config.quantity_grid[int(indices[2 * product + 1])]
            actions.append(Action(price=price, quantity=quantity))
        return actions

    def step(self, states: Sequence[MarketState], actions: Sequence[Action],
             rng: np.random.Generator) -> Tuple[Tuple[MarketState, ...], float, Tuple[StepOutcome, ...]]:
        raise NotImplementedError


class SingleProductEnv(MarketEnv):
    def __init__(self, config: ScenarioConfig):
        super().__init__([config])
        self.config = config

    def step(self, states, actions, rng):
        outcome = step(states[0], actions[0], self.config, rng)
        return (outcome.next_state,), outcome.reward, (outcome,)


class MultiProductEnv(MarketEnv):
    def __init__(self, configs: Sequence[ScenarioConfig], cross_model: CrossPriceDemand):
        super().__init__(configs)
        if cross_model.n_products != self.n_products:
            raise ConfigError(
                f"Modelo de demanda cruzada tem {cross_model.n_products} produtos, "
                f"ambiente tem {self.n_products}"
            )
        self.cross_model = cross_model

    def step(self, states, actions, rng):
        result = multi_product_step(states, actions, self.configs, self.cross_model, rng)
        return result.next_states, result.joint_reward, result.outcomes
