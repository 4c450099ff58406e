import math
from dataclasses import dataclass, field
from typing import Protocol, Sequence, Tuple

import numpy as np

from src.utils.errors import ConfigError, DomainError

N_REGRESSORS = 6


@dataclass(frozen=True)
class MarketContext:
    own_price: float
    competitor_price: float
    reference_price: float


@dataclass(frozen=True)
class RegressorVector:
    k1: float
    k2: float
    k3: float
    k4: float
    k5: float
    k6: float

    def as_array(self) -> np.ndarray:
        return np.array([self.k1, self.k2, self.k3, self.k4, self.k5, self.k6], dtype=float)


def regressors(ctx: MarketContext) -> RegressorVector:
    p = ctx.own_price
    o = ctx.competitor_price
    j = ctx.reference_price
    # exact float equality is the tie rule; prices on a grid tie deterministically
    rank = 1.0 + (float(o < p) + float(o == p)) / 2.0
    return RegressorVector(
        k1=1.0,
        k2=rank,
        k3=o - p,
        k4=1.0,
        k5=(p + o) / 2.0,
        k6=p - j
    )


def stable_sigmoid(z: float) -> float:
    if z >= 0:
        return 1.0 / (1.0 + math.exp(-z))
    ez = math.exp(z)
    return ez / (1.0 + ez)


@dataclass(frozen=True)
class LogisticDemandParams:
    eta: float
    delta: float
    beta: Tuple[float, ...]

    def __post_init__(self):
        if not self.eta > 0:
            raise ConfigError(f"eta deve ser positivo, recebido {self.eta}")
        if not 0 < self.delta <= 1:
            raise ConfigError(f"delta deve estar em (0, 1], recebido {self.delta}")
        if len(self.beta) != N_REGRESSORS:
            raise ConfigError(f"beta precisa de {N_REGRESSORS} coeficientes, recebidos {len(self.beta)}")
        object.__setattr__(self, 'beta', tuple(float(b) for b in self.beta))

    @classmethod
    def single_regressor(cls, eta: float, delta: float, a: float, l: float) -> 'LogisticDemandParams':
        # p = k5 - k3/2, so this beta gives a logit of a + l*p
        return cls(eta=eta, delta=delta, beta=(a, 0.0, -l / 2.0, 0.0, l, 0.0))

    @property
    def capacity(self) -> float:
        return self.eta * self.delta


def logit_value(params: LogisticDemandParams, ctx: MarketContext) -> float:
    k = regressors(ctx)
    b = params.beta
    return b[0] * k.k1 + b[1] * k.k2 + b[2] * k.k3 + b[3] * k.k4 + b[4] * k.k5 + b[5] * k.k6


def demand_rate_logistic(params: LogisticDemandParams, ctx: MarketContext, logit_shift: float = 0.0) -> float:
    z = logit_value(params, ctx) + logit_shift
    return params.capacity * stable_sigmoid(z)


@dataclass(frozen=True)
class LinearizedDemandParams:
    eta: float
    delta: float
    a: float
    l: float
    price_domain: Tuple[float, float] = (0.0, 80.0)

    def __post_init__(self):
        if not self.eta > 0:
            raise ConfigError(f"eta deve ser positivo, recebido {self.eta}")
        if not 0 < self.delta <= 1:
            raise ConfigError(f"delta deve estar em (0, 1], recebido {self.delta}")
        if not self.l < 0:
            raise ConfigError(f"l deve ser negativo, recebido {self.l}")
        p_lo, p_hi = self.price_domain
        if not p_lo < p_hi:
            raise ConfigError(f"Domínio de preço inválido: {self.price_domain}")
        # l < 0, so the binding end is the upper price
        if 1.0 + self.l * p_hi <= 0:
            raise ConfigError(
                f"1 + l*p deve ser positivo em todo o domínio; falha em p={p_hi}"
            )

    @property
    def scale(self) -> float:
        return self.eta * self.delta * math.exp(self.a)

    @property
    def slope(self) -> float:
        return self.scale * self.l


def lambda_linearized(params: LinearizedDemandParams, p: float) -> float:
    factor = 1.0 + params.l * p
    if factor <= 0:
        raise DomainError(f"Demanda linearizada indefinida: 1 + l*p = {factor} em p={p}")
    return params.scale * factor


def dlambda_dp(params: LinearizedDemandParams) -> float:
    return params.slope


def sample_demand(rate: float, rng: np.random.Generator) -> int:
    if not math.isfinite(rate) or rate < 0:
        raise DomainError(f"Taxa de demanda inválida: {rate}")
    return int(rng.poisson(rate))


class DemandModel(Protocol):
    def rate(self, ctx: MarketContext) -> float:
        ...


@dataclass(frozen=True)
class LogisticDemand:
    params: LogisticDemandParams

    def rate(self, ctx: MarketContext) -> float:
        return demand_rate_logistic(self.params, ctx)


@dataclass(frozen=True)
class LinearizedDemand:
    params: LinearizedDemandParams

    def rate(self, ctx: MarketContext) -> float:
        return lambda_linearized(self.params, ctx.own_price)

    @classmethod
    def from_logistic_tangent(cls, params: LogisticDemandParams,
                              price_domain: Tuple[float, float]) -> 'LinearizedDemand':
        """First-order expansion e^a(1 + l*p) of a single-regressor logistic model.

        Only a logit of the form a + l*p can be linearized; any weight on rank,
        competitor count or reference price raises ConfigError.
        """
        b = params.beta
        a, l = b[0], b[4]
        if b[1] != 0 or b[3] != 0 or b[5] != 0 or not math.isclose(b[2], -l / 2.0, abs_tol=1e-12):
            raise ConfigError(f"Só é possível linearizar um logit da forma a + l*p, recebido beta={b}")
        # e^{lp+a}/(1+e^{lp+a}) ~ e^{a}(1+lp) when lp+a is very negative
        return cls(LinearizedDemandParams(eta=params.eta, delta=params.delta, a=a, l=l, price_domain=price_domain))


@dataclass(frozen=True)
class EmpiricalDemand:
    prices: Tuple[float, ...]
    rates: Tuple[float, ...] = field(default=())

    def __post_init__(self):
        if len(self.prices) != len(self.rates) or len(self.prices) < 1:
            raise ConfigError("Tabela de demanda empírica precisa de preços e taxas com o mesmo tamanho")
        if any(np.diff(self.prices) <= 0):
            raise ConfigError("Preços da tabela empírica devem ser estritamente crescentes")
        if any(r < 0 for r in self.rates):
            raise ConfigError("Taxas da tabela empírica devem ser não negativas")

    def rate(self, ctx: MarketContext) -> float:
        return float(np.interp(ctx.own_price, self.prices, self.rates))


def build_demand_model(spec: dict, price_domain: Sequence[float]) -> DemandModel:
    kind = spec.get('kind', 'logistic')
    if kind == 'logistic':
        if 'beta' in spec:
            params = LogisticDemandParams(eta=spec['eta'], delta=spec['delta'], beta=tuple(spec['beta']))
        else:
            params = LogisticDemandParams.single_regressor(spec['eta'], spec['delta'], spec['a'], spec['l'])
        return LogisticDemand(params)
    if kind == 'linearized':
        return LinearizedDemand(LinearizedDemandParams(
            eta=spec['eta'], delta=spec['delta'], a=spec['a'], l=spec['l'],
            price_domain=(float(price_domain[0]), float(price_domain[1]))
        ))
    if kind == 'tangent':
        logistic = LogisticDemandParams.single_regressor(spec['eta'], spec['delta'], spec['a'], spec['l'])
        return LinearizedDemand.from_logistic_tangent(logistic, (float(price_domain[0]), float(price_domain[1])))
    if kind == 'empirical':
        table = spec.get('table', {})
        return EmpiricalDemand(prices=tuple(table.get('prices', ())), rates=tuple(table.get('rates', ())))
    raise ConfigError(f"Modelo de demanda desconhecido: {kind}")
