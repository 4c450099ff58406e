import math
from dataclasses import dataclass, replace
from typing import Optional, Tuple

import numpy as np
import pandas as pd
from scipy.optimize import brentq, minimize_scalar
from scipy.special import gammaln

from src.demand.models import LinearizedDemandParams, dlambda_dp, lambda_linearized
from src.market.simulator import CostParams
from src.utils.errors import ConfigError, DomainError

GRAD_TOLERANCE = 1e-4


def poisson_pmf_upto(lam: float, n: int) -> np.ndarray:
    if n < 0:
        return np.zeros(0)
    k = np.arange(n + 1, dtype=float)
    if lam <= 0:
        pmf = np.zeros(n + 1)
        pmf[0] = 1.0
        return pmf
    return np.exp(k * math.log(lam) - lam - gammaln(k + 1.0))


def poisson_cdf(lam: float, n: int) -> float:
    if n < 0:
        return 0.0
    return float(min(1.0, poisson_pmf_upto(lam, n).sum()))


@dataclass(frozen=True)
class SinglePeriodParams:
    costs: CostParams
    demand: LinearizedDemandParams
    x0: int = 0
    price_domain: Tuple[float, float] = (0.0, 80.0)
    stock_domain: Tuple[int, int] = (0, 20)
    price_points: int = 33

    def __post_init__(self):
        if self.costs.z != 0:
            object.__setattr__(self, 'costs', replace(self.costs, z=0))
        p_lo, p_hi = self.price_domain
        x_lo, x_hi = self.stock_domain
        if not p_lo < p_hi or not x_lo <= x_hi:
            raise ConfigError("Domínios de preço/estoque inválidos")
        if self.price_points < 2:
            raise ConfigError("A grade de preços precisa de ao menos 2 pontos")
        if 1.0 + self.demand.l * p_hi <= 0:
            raise ConfigError(f"Demanda linearizada inválida no domínio: 1 + l*{p_hi} <= 0")

    @property
    def price_grid(self) -> np.ndarray:
        return np.linspace(self.price_domain[0], self.price_domain[1], self.price_points)

    @property
    def price_step(self) -> float:
        return (self.price_domain[1] - self.price_domain[0]) / (self.price_points - 1)

    @property
    def stock_grid(self) -> np.ndarray:
        return np.arange(max(self.x0, self.stock_domain[0]), self.stock_domain[1] + 1)


@dataclass(frozen=True)
class OptimalityReport:
    p: float
    x: int
    g_value: float
    tolerance: float
    slope_below: float
    slope_above: float
    satisfied: bool
    boundary: bool

    def to_dict(self) -> dict:
        return {
            'p': self.p,
            'x': self.x,
            'g_value': self.g_value,
            'tolerance': self.tolerance,
            'slope_below': self.slope_below,
            'slope_above': self.slope_above,
            'satisfied': self.satisfied,
            'boundary': self.boundary
        }


@dataclass(frozen=True)
class ConcavityViolation:
    a: Tuple[float, float]
    b: Tuple[float, float]
    midpoint_value: float
    chord_value: float


class SinglePeriodModel:
    def __init__(self, params: SinglePeriodParams):
        self.params = params
        self.costs = params.costs

    def rate(self, p: float) -> float:
        return lambda_linearized(self.params.demand, p)

    @property
    def rate_slope(self) -> float:
        return dlambda_dp(self.params.demand)

    def expected_inventory(self, p: float, x: float) -> float:
        if x <= 0:
            return 0.0
        n = int(math.floor(x))
        pmf = poisson_pmf_upto(self.rate(p), n)
        return float(np.dot(pmf, x - np.arange(n + 1)))

    def expected_sales(self, p: float, x: float) -> float:
        if x <= 0:
            return 0.0
        n = int(math.floor(x))
        pmf = poisson_pmf_upto(self.rate(p), n)
        cdf = min(1.0, float(pmf.sum()))
        return (1.0 - cdf) * x + float(np.dot(np.arange(n + 1), pmf))

    def expected_revenue(self, p: float, x: float) -> float:
        return p * self.expected_sales(p, x)

    def expected_lost(self, p: float, x: float) -> float:
        return self.expected_inventory(p, x) + self.rate(p) - x

    def profit(self, p: float, x: float) -> float:
        h, b, c = self.costs.h, self.costs.b, self.costs.c
        inventory = self.expected_inventory(p, x)
        return p * (x - inventory) - (h + b) * inventory - b * self.rate(p) + b * x - c * (x - self.params.x0)

    def grad_p(self, p: float, x: float) -> float:
        h, b = self.costs.h, self.costs.b
        lam = self.rate(p)
        slope = self.rate_slope
        if x <= 0:
            return -b * slope
        n = int(math.floor(x))
        pmf = poisson_pmf_upto(lam, n)
        # dE[(x-d)^+]/dlambda = -(CDF(n-1) + pmf(n)(x-n))
        d_inventory = -(float(pmf[:n].sum()) + float(pmf[n]) * (x - n))
        sales = x - float(np.dot(pmf, x - np.arange(n + 1)))
        return sales - slope * (p + h + b) * d_inventory - b * slope

    def _slope(self, p: float, cdf: float) -> float:
        h, b, c = self.costs.h, self.costs.b, self.costs.c
        return b - c + p - (h + b + p) * cdf

    def grad_x(self, p: float, x: float) -> float:
        return self._slope(p, poisson_cdf(self.rate(p), int(math.floor(x))))

    def price_curvature(self, p: float, x: float, eps: float = 1e-4) -> float:
        p_lo, p_hi = self.params.price_domain
        lo = max(p_lo, p - eps)
        hi = min(p_hi, p + eps)
        return (self.grad_p(hi, x) - self.grad_p(lo, x)) / (hi - lo)

    def check_optimality(self, p: float, x: float, grad_tol: float = GRAD_TOLERANCE,
                         price_tol: Optional[float] = None) -> OptimalityReport:
        if abs(x - round(x)) > 1e-9:
            raise DomainError(f"check_optimality exige estoque inteiro, recebido {x}")
        x = int(round(x))
        p_lo, p_hi = self.params.price_domain
        x_lo = max(self.params.x0, self.params.stock_domain[0])
        x_hi = self.params.stock_domain[1]
        if price_tol is None:
            price_tol = self.params.price_step / 2.0

        lam = self.rate(p)
        g = self.grad_p(p, x)
        slope_below = self._slope(p, poisson_cdf(lam, x - 1))
        slope_above = self._slope(p, poisson_cdf(lam, x))
        tolerance = max(grad_tol, abs(self.price_curvature(p, x)) * price_tol)

        at_p_hi = p >= p_hi - 1e-9
        at_p_lo = p <= p_lo + 1e-9
        if at_p_hi:
            price_ok = g >= -tolerance
        elif at_p_lo:
            price_ok = g <= tolerance
        else:
            price_ok = abs(g) <= tolerance

        at_x_lo = x <= x_lo
        at_x_hi = x >= x_hi
        below_ok = slope_below >= 0 or at_x_lo
        above_ok = slope_above < 0 or at_x_hi

        return OptimalityReport(
            p=float(p),
            x=x,
            g_value=float(g),
            tolerance=float(tolerance),
            slope_below=float(slope_below),
            slope_above=float(slope_above),
            satisfied=bool(price_ok and below_ok and above_ok),
            boundary=bool(at_p_hi or at_p_lo or at_x_lo or at_x_hi)
        )

    def optimal_price_given_x(self, x: float) -> float:
        p_lo, p_hi = self.params.price_domain
        if self.grad_p(p_hi, x) >= 0:
            return float(p_hi)
        if self.grad_p(p_lo, x) <= 0:
            return float(p_lo)

        search = minimize_scalar(lambda p: -self.profit(p, x), bounds=(p_lo, p_hi), method='bounded',
                                 options={'xatol': 1e-10})
        p_star = float(search.x)
        # polish on the derivative; F is concave in p so grad_p changes sign once
        lo = max(p_lo, p_star - 1e-3)
        hi = min(p_hi, p_star + 1e-3)
        if self.grad_p(lo, x) > 0 > self.grad_p(hi, x):
            p_star = brentq(lambda p: self.grad_p(p, x), lo, hi, xtol=1e-13)
        return float(p_star)

    def profit_surface(self) -> pd.DataFrame:
        rows = []
        for p in self.params.price_grid:
            for x in self.params.stock_grid:
                rows.append({'p': float(p), 'x': int(x), 'F': self.profit(float(p), int(x))})
        return pd.DataFrame(rows, columns=['p', 'x', 'F'])

    def enumerate_optimum(self) -> Tuple[float, int, float]:
        prices = self.params.price_grid
        stocks = self.params.stock_grid
        surface = np.array([[self.profit(float(p), int(x)) for x in stocks] for p in prices])
        # argmax of the price-major flattening: lowest price, then lowest stock wins ties
        i, k = np.unravel_index(int(np.argmax(surface)), surface.shape)
        return float(prices[i]), int(stocks[k]), float(surface[i, k])

    def find_concavity_violation(self, max_price_offset: int = 6, max_stock_offset: int = 2,
                                 tol: float = 1e-9) -> Optional[ConcavityViolation]:
        prices = self.params.price_grid
        stocks = self.params.stock_grid
        for dx in range(1, max_stock_offset + 1):
            for dp in range(-max_price_offset, max_price_offset + 1):
                for i in range(len(prices)):
                    j = i + dp
                    if j < 0 or j >= len(prices):
                        continue
                    for k in range(len(stocks) - dx):
                        a = (float(prices[i]), float(stocks[k]))
                        b = (float(prices[j]), float(stocks[k + dx]))
                        chord = (self.profit(*a) + self.profit(*b)) / 2.0
                        mid = self.profit((a[0] + b[0]) / 2.0, (a[1] + b[1]) / 2.0)
                        if mid < chord - tol:
                            return ConcavityViolation(a=a, b=b, midpoint_value=mid, chord_value=chord)
        return None


def reference_params() -> SinglePeriodParams:
    return SinglePeriodParams(
        costs=CostParams(h=4.0, b=10.0, c=5.0, f=0.0, z=0),
        demand=LinearizedDemandParams(eta=800.0, delta=0.5, a=-4.0, l=-0.01, price_domain=(0.0, 80.0)),
        x0=0,
        price_domain=(0.0, 80.0),
        stock_domain=(0, 20),
        price_points=33
    )
