import numpy as np

from src.neural.network import ParamSet
from src.utils.errors import TrainingDivergedError


def clip_grad_norm(params: ParamSet, max_norm: float = 0.5) -> float:
    norm = float(np.linalg.norm(params.grad))
    if max_norm > 0 and norm > max_norm:
        params.grad *= max_norm / (norm + 1e-12)
    return norm


def adam_step(params: ParamSet, lr: float = 3e-4, beta1: float = 0.9, beta2: float = 0.999,
              eps: float = 1e-8) -> ParamSet:
    g = params.grad
    if not np.all(np.isfinite(g)):
        raise TrainingDivergedError(
            "Gradiente não finito; atualização rejeitada",
            diagnostics={'nan': int(np.isnan(g).sum()), 'inf': int(np.isinf(g).sum()), 'step': params.step}
        )

    params.step += 1
    params.m = beta1 * params.m + (1.0 - beta1) * g
    params.v = beta2 * params.v + (1.0 - beta2) * g * g
    m_hat = params.m / (1.0 - beta1 ** params.step)
    v_hat = params.v / (1.0 - beta2 ** params.step)
    params.assign(params.theta - lr * m_hat / (np.sqrt(v_hat) + eps))
    return params
