import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from src.fsda.config import SLOW_PRICING, TARGET_GAE, FSDAConfig
from src.fsda.envs import PRICE_ROLE, QUANTITY_ROLE, MarketEnv, MultiProductEnv
from src.fsda.losses import (
    GAEBuffer,
    compute_gae,
    critic_loss,
    entropy_loss,
    policy_loss,
    sequential_factor_update,
    taken_log_probs,
)
from src.market.simulator import Action, MarketState, ScenarioConfig, encode_state
from src.neural.network import (
    ACTOR,
    CRITIC,
    HiddenState,
    NetworkSpec,
    ParamSet,
    backward_sequence,
    forward,
    forward_sequence,
    orthogonal_init,
)
from src.neural.optim import adam_step, clip_grad_norm
from src.neural.persistence import load_params, save_params
from src.utils.errors import ConfigError, TrainingDivergedError
from src.utils.seeds import SeedStreams

CURVE_COLUMNS = ['episode', 'mean_return', 'std_return']


@dataclass
class AgentBundle:
    actor_specs: List[NetworkSpec]
    actors: List[ParamSet]
    critic_spec: NetworkSpec
    critic: ParamSet
    roles: List[str]
    slow_agents: Tuple[int, ...]

    @property
    def n_agents(self) -> int:
        return len(self.actors)

    @property
    def fast_agents(self) -> Tuple[int, ...]:
        return tuple(i for i in range(self.n_agents) if i not in self.slow_agents)

    def copy(self) -> 'AgentBundle':
        return AgentBundle(
            actor_specs=list(self.actor_specs),
            actors=[a.copy() for a in self.actors],
            critic_spec=self.critic_spec,
            critic=self.critic.copy(),
            roles=list(self.roles),
            slow_agents=tuple(self.slow_agents)
        )


def init_bundle(env: MarketEnv, config: FSDAConfig, rng: np.random.Generator) -> AgentBundle:
    specs = [
        NetworkSpec(input_dim=env.observation_dim(i), output_dim=env.action_dim(i),
                    hidden1=config.hidden1, hidden2=config.hidden2, head=ACTOR)
        for i in range(env.n_agents)
    ]
    critic_spec = NetworkSpec(input_dim=env.global_dim, output_dim=1,
                              hidden1=config.hidden1, hidden2=config.hidden2, head=CRITIC)
    roles = [env.agent_role(i) for i in range(env.n_agents)]
    slow_role = PRICE_ROLE if config.slow_agent == SLOW_PRICING else QUANTITY_ROLE
    return AgentBundle(
        actor_specs=specs,
        actors=[orthogonal_init(spec, rng) for spec in specs],
        critic_spec=critic_spec,
        critic=orthogonal_init(critic_spec, rng),
        roles=roles,
        slow_agents=tuple(i for i, role in enumerate(roles) if role == slow_role)
    )


class RewardScaler:
    """Divides rewards by the running std of the discounted return."""

    def __init__(self, gamma: float, epsilon: float = 1e-8):
        self.gamma = gamma
        self.epsilon = epsilon
        self.ret = 0.0
        self.count = 0
        self.mean = 0.0
        self.m2 = 0.0

    def reset(self):
        self.ret = 0.0

    @property
    def std(self) -> float:
        if self.count < 2:
            return 1.0
        return float(np.sqrt(self.m2 / self.count))

    def __call__(self, reward: float) -> float:
        self.ret = self.gamma * self.ret + reward
        self.count += 1
        delta = self.ret - self.mean
        self.mean += delta / self.count
        self.m2 += delta * (self.ret - self.mean)
        std = self.std
        if std <= 0:
            return reward
        return reward / (std + self.epsilon)


@dataclass
class TransitionBatch:
    """Episodes of joint transitions, stored per agent as (episode, period) arrays."""

    observations: List[np.ndarray]
    actions: np.ndarray
    log_probs: np.ndarray
    global_observations: np.ndarray
    rewards: np.ndarray
    raw_rewards: np.ndarray

    @property
    def n_episodes(self) -> int:
        return self.rewards.shape[0]

    @property
    def horizon(self) -> int:
        return self.rewards.shape[1]

    @property
    def returns(self) -> np.ndarray:
        return self.raw_rewards.sum(axis=1)


def sample_action(probs: np.ndarray, rng: np.random.Generator, greedy: bool = False) -> int:
    if greedy:
        return int(np.argmax(probs))
    return int(rng.choice(len(probs), p=probs))


def collect_trajectories(env: MarketEnv, bundle: AgentBundle, count: int, rng: np.random.Generator,
                         scaler: Optional[RewardScaler] = None, greedy: bool = False) -> TransitionBatch:
    T = env.horizon
    n_agents = bundle.n_agents
    observations = [np.zeros((count, T, env.observation_dim(i))) for i in range(n_agents)]
    actions = np.zeros((n_agents, count, T), dtype=int)
    log_probs = np.zeros((n_agents, count, T))
    global_obs = np.zeros((count, T, env.global_dim))
    rewards = np.zeros((count, T))
    raw_rewards = np.zeros((count, T))

    for e in range(count):
        states = env.reset()
        hidden: List[Optional[HiddenState]] = [None] * n_agents
        if scaler is not None:
            scaler.reset()
        for t in range(T):
            global_obs[e, t] = env.global_observation(states)
            indices = []
            for i in range(n_agents):
                obs = env.observation(states, i)
                probs, hidden[i], _ = forward(bundle.actor_specs[i], bundle.actors[i], obs, hidden[i])
                a = sample_action(probs, rng, greedy)
                observations[i][e, t] = obs
                actions[i, e, t] = a
                log_probs[i, e, t] = np.log(probs[a])
                indices.append(a)
            states, reward, _ = env.step(states, env.decode_actions(indices), rng)
            raw_rewards[e, t] = reward
            rewards[e, t] = scaler(reward) if scaler is not None else reward

    return TransitionBatch(
        observations=observations,
        actions=actions,
        log_probs=log_probs,
        global_observations=global_obs,
        rewards=rewards,
        raw_rewards=raw_rewards
    )


def actor_probabilities(spec: NetworkSpec, params: ParamSet, observations: np.ndarray):
    probs = []
    caches = []
    for episode in observations:
        out, episode_caches, _ = forward_sequence(spec, params, episode)
        probs.append(out)
        caches.append(episode_caches)
    return np.array(probs), caches


def critic_values(spec: NetworkSpec, params: ParamSet, global_observations: np.ndarray):
    values = []
    caches = []
    for episode in global_observations:
        out, episode_caches, _ = forward_sequence(spec, params, episode)
        values.append(out[:, 0])
        caches.append(episode_caches)
    return np.array(values), caches


def actor_loss_and_grad(spec: NetworkSpec, params: ParamSet, observations: np.ndarray, actions: np.ndarray,
                        old_log_probs: np.ndarray, factors: np.ndarray, advantages: np.ndarray,
                        clip: float, entropy_coef: float) -> Tuple[float, float]:
    params.zero_grad()
    probs, caches = actor_probabilities(spec, params, observations)
    lp, d_policy = policy_loss(probs, actions, old_log_probs, factors, advantages, clip)
    le, d_entropy = entropy_loss(probs, entropy_coef)
    d_logits = d_policy + d_entropy
    for episode_caches, d in zip(caches, d_logits):
        backward_sequence(params, episode_caches, d)
    return lp, le


def critic_loss_and_grad(spec: NetworkSpec, params: ParamSet, global_observations: np.ndarray,
                         targets: np.ndarray) -> float:
    params.zero_grad()
    values, caches = critic_values(spec, params, global_observations)
    loss, d_values = critic_loss(values, targets)
    for episode_caches, d in zip(caches, d_values):
        backward_sequence(params, episode_caches, d[:, None])
    return loss


def _check_finite(stats: Dict[str, float], bundle: AgentBundle, episode: int):
    bad_losses = {k: v for k, v in stats.items() if not np.isfinite(v)}
    bad_params = [i for i, a in enumerate(bundle.actors) if not np.all(np.isfinite(a.theta))]
    critic_ok = bool(np.all(np.isfinite(bundle.critic.theta)))
    if bad_losses or bad_params or not critic_ok:
        raise TrainingDivergedError(
            f"Treinamento divergiu no episódio {episode}",
            diagnostics={
                'episode': episode,
                'losses': {k: float(v) for k, v in stats.items()},
                'non_finite_actors': bad_params,
                'critic_finite': critic_ok
            }
        )


def update_bundle(bundle: AgentBundle, batch: TransitionBatch, gae: GAEBuffer, order: Sequence[int],
                  config: FSDAConfig, slow_lr: float) -> Dict[str, float]:
    stats: Dict[str, float] = {}
    targets = gae.targets if config.critic_target == TARGET_GAE else batch.rewards
    for _ in range(config.update_epochs):
        factors = np.ones_like(gae.advantages)
        for i in order:
            spec, params = bundle.actor_specs[i], bundle.actors[i]
            old_log_probs = batch.log_probs[i]
            lp, le = actor_loss_and_grad(spec, params, batch.observations[i], batch.actions[i],
                                         old_log_probs, factors, gae.advantages, config.clip, config.entropy_coef)
            clip_grad_norm(params, config.max_grad_norm)
            adam_step(params, lr=slow_lr if i in bundle.slow_agents else config.lr)
            stats[f'policy_loss_{i}'] = lp
            stats[f'entropy_loss_{i}'] = le

            probs, _ = actor_probabilities(spec, params, batch.observations[i])
            new_log_probs = taken_log_probs(probs, batch.actions[i])
            factors = sequential_factor_update(factors, np.exp(old_log_probs), np.exp(new_log_probs))

        loss = critic_loss_and_grad(bundle.critic_spec, bundle.critic, batch.global_observations, targets)
        clip_grad_norm(bundle.critic, config.max_grad_norm)
        adam_step(bundle.critic, lr=config.critic_lr)
        stats['critic_loss'] = loss
    return stats


def evaluate_bundle(env: MarketEnv, bundle: AgentBundle, rollouts: int, rng: np.random.Generator,
                    greedy: bool = True) -> np.ndarray:
    batch = collect_trajectories(env, bundle, rollouts, rng, scaler=None, greedy=greedy)
    return batch.returns


@dataclass
class TrainingResult:
    bundle: AgentBundle
    learning_curve: pd.DataFrame
    slow_episodes: List[int] = field(default_factory=list)
    fast_updates: int = 0

    @property
    def slow_updates(self) -> int:
        return len(self.slow_episodes)


def train(config: FSDAConfig, env: MarketEnv, bundle: Optional[AgentBundle] = None) -> TrainingResult:
    streams = SeedStreams(config.seed)
    if bundle is None:
        bundle = init_bundle(env, config, streams.generator('fsda/init'))
    rollout_rng = streams.generator('fsda/rollout')
    eval_rng = streams.generator('fsda/evaluation')
    scaler = RewardScaler(env.gamma) if config.reward_scaling else None

    print("Iniciando treinamento FSDA...")
    print(f"  - agentes: {bundle.n_agents} (lentos: {list(bundle.slow_agents)})")

    rows = []
    slow_episodes: List[int] = []
    fast_updates = 0
    last_slow = None
    for m in range(config.episodes):
        batch = collect_trajectories(env, bundle, config.rollouts_per_episode, rollout_rng, scaler)
        values, _ = critic_values(bundle.critic_spec, bundle.critic, batch.global_observations)
        gae = compute_gae(batch.rewards, values, env.gamma, config.gae_lambda)

        k = config.k(m)
        slow_turn = last_slow is None or m - last_slow >= k
        if slow_turn:
            last_slow = m
            slow_episodes.append(m)
            order = tuple(bundle.slow_agents) + bundle.fast_agents
        else:
            order = bundle.fast_agents

        stats = update_bundle(bundle, batch, gae, order, config, slow_lr=config.lr / k)
        _check_finite(stats, bundle, m)
        fast_updates += 1

        if (m + 1) % config.eval_every == 0 or m == config.episodes - 1:
            returns = evaluate_bundle(env, bundle, config.eval_rollouts, eval_rng, config.greedy_eval)
            rows.append({
                'episode': m + 1,
                'mean_return': float(returns.mean()),
                'std_return': float(returns.std(ddof=1)) if returns.size > 1 else 0.0
            })

        if (m + 1) % config.log_every == 0:
            print(f"  - episódio {m + 1}/{config.episodes}: retorno de treino {batch.returns.mean():.2f}, "
                  f"crítico {stats['critic_loss']:.4f}")

    print("Treinamento concluído")
    print(f"  - atualizações rápidas: {fast_updates}")
    print(f"  - atualizações lentas: {len(slow_episodes)}")

    return TrainingResult(
        bundle=bundle,
        learning_curve=pd.DataFrame(rows, columns=CURVE_COLUMNS),
        slow_episodes=slow_episodes,
        fast_updates=fast_updates
    )


def train_multi_product(config: FSDAConfig, env: MultiProductEnv,
                        bundle: Optional[AgentBundle] = None) -> TrainingResult:
    if not isinstance(env, MultiProductEnv):
        raise ConfigError("train_multi_product exige um MultiProductEnv")
    return train(config, env, bundle)


class RecurrentPolicy:
    """Plugs the actors of a single-product bundle into run_episode."""

    def __init__(self, bundle: AgentBundle, config: ScenarioConfig, greedy: bool = True,
                 rng: Optional[np.random.Generator] = None):
        if bundle.n_agents != 2:
            raise ConfigError("RecurrentPolicy exige um bundle de produto único")
        if not greedy and rng is None:
            raise ConfigError("Política estocástica exige um gerador aleatório")
        self.bundle = bundle
        self.config = config
        self.greedy = greedy
        self.rng = rng
        self.hidden: List[Optional[HiddenState]] = [None, None]

    def reset(self):
        self.hidden = [None, None]

    def __call__(self, state: MarketState) -> Action:
        if state.period == 0:
            self.reset()
        obs = encode_state(state, self.config)
        indices = []
        for i in range(2):
            probs, self.hidden[i], _ = forward(self.bundle.actor_specs[i], self.bundle.actors[i], obs, self.hidden[i])
            indices.append(sample_action(probs, self.rng, self.greedy))
        return Action(price=self.config.price_grid[indices[0]], quantity=self.config.quantity_grid[indices[1]])


def estimate_episode_flops(spec: NetworkSpec, horizon: int) -> int:
    """Multiply-adds for one episode's forward and backward pass (backward ~ 2x forward)."""
    W1, W2 = spec.hidden1, spec.hidden2
    per_step = spec.input_dim * W1 + W1 * W1
    per_step += 3 * (W1 * W2 + W2 * W2)
    per_step += 3 * (W2 * W2 + W2 * W2)
    per_step += W2 * spec.output_dim
    return int(3 * 2 * per_step * horizon)


def save_bundle(bundle: AgentBundle, directory) -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for i, params in enumerate(bundle.actors):
        save_params(params, directory / f'actor_{i}.bin')
    save_params(bundle.critic, directory / 'critic.bin')
    with open(directory / 'bundle.json', 'w', encoding='utf-8') as f:
        json.dump({'roles': bundle.roles, 'slow_agents': list(bundle.slow_agents)}, f, sort_keys=True, indent=2)
    return directory


def load_bundle(directory) -> AgentBundle:
    directory = Path(directory)
    with open(directory / 'bundle.json', 'r', encoding='utf-8') as f:
        meta = json.load(f)
    actors = [load_params(directory / f'actor_{i}.bin') for i in range(len(meta['roles']))]
    critic = load_params(directory / 'critic.bin')
    return AgentBundle(
        actor_specs=[a.spec for a in actors],
        actors=actors,
        critic_spec=critic.spec,
        critic=critic,
        roles=list(meta['roles']),
        slow_agents=tuple(meta['slow_agents'])
    )
