from dataclasses import dataclass
from typing import Tuple

import numpy as np
from scipy.special import xlogy

from src.utils.errors import ContractError, ShapeError


@dataclass
class GAEBuffer:
    advantages: np.ndarray
    raw_advantages: np.ndarray
    values: np.ndarray
    targets: np.ndarray
    factors: np.ndarray


def normalize_advantages(advantages: np.ndarray) -> np.ndarray:
    centered = advantages - advantages.mean()
    std = centered.std()
    if std > 1e-12:
        return centered / std
    return centered


def compute_gae(rewards: np.ndarray, values: np.ndarray, gamma: float, lam: float,
                normalize: bool = True) -> GAEBuffer:
    """Generalized advantage estimation over fixed-length episodes (rows)."""
    rewards = np.atleast_2d(np.asarray(rewards, dtype=float))
    values = np.atleast_2d(np.asarray(values, dtype=float))
    if rewards.shape != values.shape:
        raise ShapeError(f"Recompensas {rewards.shape} e valores {values.shape} com formatos diferentes")

    E, T = rewards.shape
    # the value after the last period is zero; episodes never bootstrap across rows
    next_values = np.zeros_like(values)
    next_values[:, :-1] = values[:, 1:]
    deltas = rewards + gamma * next_values - values

    advantages = np.zeros_like(rewards)
    running = np.zeros(E)
    for t in range(T - 1, -1, -1):
        running = deltas[:, t] + gamma * lam * running
        advantages[:, t] = running

    return GAEBuffer(
        advantages=normalize_advantages(advantages) if normalize else advantages.copy(),
        raw_advantages=advantages,
        values=values,
        targets=advantages + values,
        factors=np.ones_like(rewards)
    )


def taken_log_probs(probs: np.ndarray, actions: np.ndarray) -> np.ndarray:
    taken = np.take_along_axis(probs, actions[..., None].astype(int), axis=-1)[..., 0]
    with np.errstate(divide='ignore'):
        return np.log(taken)


def policy_loss(probs: np.ndarray, actions: np.ndarray, old_log_probs: np.ndarray,
                factors: np.ndarray, advantages: np.ndarray, clip: float) -> Tuple[float, np.ndarray]:
    """Clipped surrogate -(1/BT) sum min(r F A, clip(r) F A) and its gradient wrt the logits."""
    if not np.all(np.isfinite(old_log_probs)):
        raise ContractError("Probabilidade antiga nula: razão de importância indefinida")

    n = actions.size
    log_probs = taken_log_probs(probs, actions)
    ratio = np.exp(log_probs - old_log_probs)
    weighted = factors * advantages
    surr1 = ratio * weighted
    surr2 = np.clip(ratio, 1.0 - clip, 1.0 + clip) * weighted
    loss = -float(np.minimum(surr1, surr2).sum()) / n

    d_log_prob = np.where(surr1 <= surr2, -ratio * weighted / n, 0.0)
    onehot = np.zeros_like(probs)
    np.put_along_axis(onehot, actions[..., None].astype(int), 1.0, axis=-1)
    d_logits = d_log_prob[..., None] * (onehot - probs)
    return loss, d_logits


def entropy_loss(probs: np.ndarray, coef: float) -> Tuple[float, np.ndarray]:
    """coef * sum_t sum_a pi log pi, averaged over the episodes of the batch."""
    n_episodes = probs.shape[0] if probs.ndim == 3 else 1
    plogp = xlogy(probs, probs)
    neg_entropy = plogp.sum(axis=-1, keepdims=True)
    loss = coef * float(neg_entropy.sum()) / n_episodes
    d_logits = coef * (plogp - probs * neg_entropy) / n_episodes
    return loss, d_logits


def critic_loss(values: np.ndarray, targets: np.ndarray) -> Tuple[float, np.ndarray]:
    values = np.asarray(values, dtype=float)
    targets = np.asarray(targets, dtype=float)
    diff = values - targets
    n = diff.size
    return float(np.sum(diff ** 2)) / n, 2.0 * diff / n


def sequential_factor_update(factors: np.ndarray, old_probs: np.ndarray, new_probs: np.ndarray) -> np.ndarray:
    return factors * (np.asarray(new_probs, dtype=float) / np.asarray(old_probs, dtype=float))
