from dataclasses import dataclass, field
from typing import Dict, List, Optional

import numpy as np
import pandas as pd
from scipy.special import zeta

from src.analytic.single_period import SinglePeriodModel
from src.utils.errors import ConfigError, DomainError

FAST_PRICE = 'price'
FAST_STOCK = 'stock'


@dataclass(frozen=True)
class StepSchedule:
    a0: float = 2.0
    u: float = 0.6
    b0: float = 1.0
    v: float = 0.9
    offset: float = 10.0

    def alpha(self, k) -> np.ndarray:
        return self.a0 / np.power(np.asarray(k, dtype=float) + self.offset, self.u)

    def beta(self, k) -> np.ndarray:
        return self.b0 / np.power(np.asarray(k, dtype=float) + self.offset, self.v)

    def validate(self):
        if not 0.5 < self.u < self.v <= 1.0:
            raise ConfigError(f"Expoentes inválidos: exige 0.5 < u < v <= 1, recebido u={self.u}, v={self.v}")
        if self.a0 < 0 or self.b0 < 0 or self.offset <= 0:
            raise ConfigError("Escalas dos passos devem ser não negativas e offset positivo")
        # sum_k c^2/(k+offset)^{2e} is a Hurwitz zeta value
        alpha_sq = self.a0 ** 2 * zeta(2 * self.u, self.offset)
        beta_sq = self.b0 ** 2 * zeta(2 * self.v, self.offset)
        if self.a0 > 0 and not beta_sq < alpha_sq:
            raise ConfigError(f"Condição sum(beta^2) < sum(alpha^2) violada: {beta_sq:.4g} >= {alpha_sq:.4g}")
        return self


@dataclass(frozen=True)
class SAConfig:
    schedule: StepSchedule = field(default_factory=StepSchedule)
    fast_variable: str = FAST_PRICE
    p0: float = 40.0
    x0: float = 0.0
    iterations: int = 200_000
    samples_per_step: int = 1
    seed: int = 0
    diagnostic_every: int = 100

    def __post_init__(self):
        if self.fast_variable not in (FAST_PRICE, FAST_STOCK):
            raise ConfigError(f"fast_variable deve ser 'price' ou 'stock', recebido {self.fast_variable}")
        if self.iterations < 0:
            raise ConfigError("iterations não pode ser negativo")
        if self.samples_per_step < 1:
            raise ConfigError("samples_per_step deve ser >= 1")
        if self.diagnostic_every < 1:
            raise ConfigError("diagnostic_every deve ser >= 1")


@dataclass
class SATrace:
    p: np.ndarray
    x: np.ndarray
    g_hat: np.ndarray
    h_hat: np.ndarray
    alpha: np.ndarray
    beta: np.ndarray
    tracking_iters: np.ndarray
    tracking_error: np.ndarray
    seed: int = 0

    @property
    def final(self) -> tuple:
        return float(self.p[-1]), float(self.x[-1])


def estimate_grad_p(model: SinglePeriodModel, p: float, x: float, d) -> float:
    lam = model.rate(p)
    if lam <= 0:
        raise DomainError(f"Taxa de demanda não positiva em p={p}")
    slope = model.rate_slope
    h, b = model.costs.h, model.costs.b
    d = np.asarray(d, dtype=float)
    score = (d / lam - 1.0) * slope
    sold = np.minimum(d, x)
    leftover = np.maximum(x - d, 0.0)
    g = sold + p * score * sold - (h + b) * score * leftover - b * slope
    return float(np.mean(g))


def estimate_grad_x(model: SinglePeriodModel, p: float, x: float, d) -> float:
    h, b, c = model.costs.h, model.costs.b, model.costs.c
    covered = np.asarray(d, dtype=float) <= x
    return float(np.mean(b - c + p - (h + b + p) * covered))


class _PriceTracker:
    def __init__(self, model: SinglePeriodModel, resolution: float = 1e-3):
        self.model = model
        self.resolution = resolution
        self.cache: Dict[int, float] = {}

    def __call__(self, x: float) -> float:
        key = int(round(x / self.resolution))
        if key not in self.cache:
            self.cache[key] = self.model.optimal_price_given_x(key * self.resolution)
        return self.cache[key]


def run_two_timescale(model: SinglePeriodModel, config: SAConfig, tracker: Optional[_PriceTracker] = None) -> SATrace:
    config.schedule.validate()
    rng = np.random.default_rng(config.seed)
    K = config.iterations
    n = config.samples_per_step
    p_lo, p_hi = model.params.price_domain
    x_lo = float(max(model.params.x0, model.params.stock_domain[0]))
    x_hi = float(model.params.stock_domain[1])
    h, b, c = model.costs.h, model.costs.b, model.costs.c
    scale = model.params.demand.scale
    l = model.params.demand.l
    slope = model.rate_slope

    ks = np.arange(K)
    alpha = config.schedule.alpha(ks)
    beta = config.schedule.beta(ks)
    if config.fast_variable == FAST_PRICE:
        step_p, step_x = alpha, beta
    else:
        step_p, step_x = beta, alpha

    p_hist = np.empty(K + 1)
    x_hist = np.empty(K + 1)
    g_hist = np.empty(K)
    h_hist = np.empty(K)
    p = float(np.clip(config.p0, p_lo, p_hi))
    x = float(np.clip(config.x0, x_lo, x_hi))
    p_hist[0], x_hist[0] = p, x

    for k in range(K):
        lam = scale * (1.0 + l * p)
        if n == 1:
            d = float(rng.poisson(lam))
            score = (d / lam - 1.0) * slope
            sold = d if d < x else x
            leftover = x - d if x > d else 0.0
            g = sold + p * score * sold - (h + b) * score * leftover - b * slope
            hx = b - c + p - (h + b + p) * (d <= x)
        else:
            d = rng.poisson(lam, size=n)
            g = estimate_grad_p(model, p, x, d)
            hx = estimate_grad_x(model, p, x, d)

        p = min(max(p + step_p[k] * g, p_lo), p_hi)
        x = min(max(x + step_x[k] * hx, x_lo), x_hi)
        g_hist[k] = g
        h_hist[k] = hx
        p_hist[k + 1] = p
        x_hist[k + 1] = x

    tracker = tracker or _PriceTracker(model)
    every = config.diagnostic_every
    tracking_iters = np.arange(0, K + 1, every)
    tracking_error = np.array([p_hist[i] - tracker(x_hist[i]) for i in tracking_iters])

    return SATrace(
        p=p_hist, x=x_hist, g_hat=g_hist, h_hat=h_hist, alpha=alpha, beta=beta,
        tracking_iters=tracking_iters, tracking_error=tracking_error, seed=config.seed
    )


def run_seeds(model: SinglePeriodModel, config: SAConfig, seeds: List[int]) -> List[SATrace]:
    tracker = _PriceTracker(model)
    traces = []
    for seed in seeds:
        seeded = SAConfig(
            schedule=config.schedule, fast_variable=config.fast_variable, p0=config.p0, x0=config.x0,
            iterations=config.iterations, samples_per_step=config.samples_per_step, seed=int(seed),
            diagnostic_every=config.diagnostic_every
        )
        traces.append(run_two_timescale(model, seeded, tracker))
    return traces


@dataclass(frozen=True)
class TrackingReport:
    mean_abs_error: np.ndarray
    first_quarter_mean: float
    final_quarter_mean: float
    decays: bool
    loglog_slope: float


def tracking_diagnostics(traces: List[SATrace], schedule: StepSchedule,
                         fast_variable: str = FAST_PRICE) -> TrackingReport:
    if not traces:
        raise ConfigError("tracking_diagnostics exige ao menos um traço")
    errors = np.vstack([np.abs(t.tracking_error) for t in traces])
    mean_abs = errors.mean(axis=0)
    m = mean_abs.size
    quarter = max(1, m // 4)
    first = float(mean_abs[:quarter].mean())
    final = float(mean_abs[-quarter:].mean())

    iters = traces[0].tracking_iters.astype(float)
    fast = schedule.alpha(iters) if fast_variable == FAST_PRICE else schedule.beta(iters)
    slow = schedule.beta(iters) if fast_variable == FAST_PRICE else schedule.alpha(iters)
    envelope = slow / fast + np.sqrt(fast)

    usable = (mean_abs > 0) & (envelope > 0)
    slope = float('nan')
    if usable.sum() >= 2:
        slope = float(np.polyfit(np.log(envelope[usable]), np.log(mean_abs[usable]), 1)[0])

    return TrackingReport(
        mean_abs_error=mean_abs,
        first_quarter_mean=first,
        final_quarter_mean=final,
        decays=final < first,
        loglog_slope=slope
    )


def trace_frame(trace: SATrace, every: int = 1) -> pd.DataFrame:
    K = trace.g_hat.size
    idx = np.arange(0, K, max(1, every))
    return pd.DataFrame({
        'k': idx,
        'p': trace.p[idx],
        'x': trace.x[idx],
        'g_hat': trace.g_hat[idx],
        'h_hat': trace.h_hat[idx]
    }, columns=['k', 'p', 'x', 'g_hat', 'h_hat'])


def convergence_frame(traces: List[SATrace], every: int = 100) -> pd.DataFrame:
    K = traces[0].p.size - 1
    idx = np.arange(0, K + 1, max(1, every))
    if idx[-1] != K:
        idx = np.append(idx, K)
    prices = np.vstack([t.p[idx] for t in traces])
    stocks = np.vstack([t.x[idx] for t in traces])
    return pd.DataFrame({
        'k': idx,
        'p_median': np.median(prices, axis=0),
        'x_median': np.median(stocks, axis=0),
        'p_q25': np.quantile(prices, 0.25, axis=0),
        'p_q75': np.quantile(prices, 0.75, axis=0),
        'x_q25': np.quantile(stocks, 0.25, axis=0),
        'x_q75': np.quantile(stocks, 0.75, axis=0)
    })


def median_final(traces: List[SATrace]) -> tuple:
    finals = np.array([t.final for t in traces])
    return float(np.median(finals[:, 0])), float(np.median(finals[:, 1]))
