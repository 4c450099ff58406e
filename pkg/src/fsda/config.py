from dataclasses import asdict, dataclass
from typing import List

from src.utils.errors import ConfigError

SLOW_REPLENISHMENT = 'replenishment'
SLOW_PRICING = 'pricing'
TARGET_GAE = 'gae'
TARGET_REWARD = 'reward'
SCHEDULE_HALF = 'half'
SCHEDULE_CONSTANT = 'constant'


@dataclass(frozen=True)
class FSDAConfig:
    episodes: int = 2000
    gamma: float = 1.0
    clip: float = 0.2
    entropy_coef: float = 1e-3
    gae_lambda: float = 0.95
    lr: float = 3e-4
    critic_lr: float = 3e-4
    rollouts_per_episode: int = 4
    update_epochs: int = 4
    max_grad_norm: float = 0.5
    reward_scaling: bool = True
    critic_target: str = TARGET_GAE
    slow_agent: str = SLOW_REPLENISHMENT
    timescale: str = SCHEDULE_HALF
    k_constant: int = 1
    k_cap: int = 64
    hidden1: int = 64
    hidden2: int = 64
    eval_every: int = 10
    eval_rollouts: int = 8
    greedy_eval: bool = True
    log_every: int = 100
    seed: int = 0

    def __post_init__(self):
        if self.episodes < 0:
            raise ConfigError("episodes não pode ser negativo")
        if not 0 <= self.gamma <= 1:
            raise ConfigError(f"gamma deve estar em [0, 1], recebido {self.gamma}")
        if not 0 < self.clip < 1:
            raise ConfigError(f"clip deve estar em (0, 1), recebido {self.clip}")
        if self.entropy_coef < 0:
            raise ConfigError("entropy_coef não pode ser negativo")
        if not 0 <= self.gae_lambda <= 1:
            raise ConfigError("gae_lambda deve estar em [0, 1]")
        if self.lr <= 0 or self.critic_lr <= 0:
            raise ConfigError("Taxas de aprendizado devem ser positivas")
        if self.rollouts_per_episode < 1 or self.update_epochs < 1:
            raise ConfigError("rollouts_per_episode e update_epochs devem ser >= 1")
        if self.critic_target not in (TARGET_GAE, TARGET_REWARD):
            raise ConfigError(f"critic_target deve ser 'gae' ou 'reward', recebido {self.critic_target}")
        if self.slow_agent not in (SLOW_REPLENISHMENT, SLOW_PRICING):
            raise ConfigError(f"slow_agent deve ser 'replenishment' ou 'pricing', recebido {self.slow_agent}")
        if self.timescale not in (SCHEDULE_HALF, SCHEDULE_CONSTANT):
            raise ConfigError(f"timescale deve ser 'half' ou 'constant', recebido {self.timescale}")
        if self.k_constant < 1 or self.k_cap < 1:
            raise ConfigError("k deve ser >= 1")
        if self.eval_every < 1 or self.eval_rollouts < 1 or self.log_every < 1:
            raise ConfigError("eval_every, eval_rollouts e log_every devem ser >= 1")

    def k(self, m: int) -> int:
        """Timescale ratio: episodes between two slow-actor updates."""
        if self.timescale == SCHEDULE_CONSTANT:
            return self.k_constant
        return min(self.k_cap, max(1, m // 2))

    def to_dict(self) -> dict:
        return asdict(self)


def slow_update_episodes(config: FSDAConfig, episodes: int = None) -> List[int]:
    # fires at m = 0 and then whenever k(m) episodes have elapsed since the last slow update
    episodes = config.episodes if episodes is None else episodes
    fired = []
    last = None
    for m in range(episodes):
        if last is None or m - last >= config.k(m):
            fired.append(m)
            last = m
    return fired
