from dataclasses import dataclass
from typing import Optional

import numpy as np

from src.utils.errors import ConfigError

COMPETITOR_KINDS = ('undercut-cycle', 'uniform-random', 'fixed')


@dataclass(frozen=True)
class CompetitorStrategy:
    kind: str = 'undercut-cycle'
    decrement: float = 1.0
    p_min: float = 0.0
    p_max: float = 80.0

    def __post_init__(self):
        if self.kind not in COMPETITOR_KINDS:
            raise ConfigError(f"Estratégia de concorrente desconhecida: {self.kind}")
        if not self.p_min < self.p_max:
            raise ConfigError(f"Limites de preço do concorrente inválidos: [{self.p_min}, {self.p_max}]")
        if self.kind == 'undercut-cycle' and not self.decrement > 0:
            raise ConfigError("decrement deve ser positivo na estratégia undercut-cycle")

    @property
    def midpoint(self) -> float:
        return (self.p_min + self.p_max) / 2.0


def competitor_next_price(strategy: CompetitorStrategy, our_price: float, current: float,
                          rng: Optional[np.random.Generator] = None) -> float:
    if strategy.kind == 'fixed':
        return current
    if strategy.kind == 'uniform-random':
        if rng is None:
            raise ConfigError("Estratégia uniform-random exige um gerador aleatório")
        return float(rng.uniform(strategy.p_min, strategy.p_max))

    candidate = min(our_price, current) - strategy.decrement
    if candidate < strategy.p_min:
        return strategy.p_max
    return candidate


def update_reference_price(j: float, p: float, o: float, smoothing: float = 0.5) -> float:
    if not 0.0 <= smoothing <= 1.0:
        raise ConfigError(f"smoothing deve estar em [0, 1], recebido {smoothing}")
    return (1.0 - smoothing) * j + smoothing * (p + o) / 2.0
