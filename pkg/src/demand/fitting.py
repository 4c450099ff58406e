from dataclasses import dataclass
from typing import Dict, List, Sequence, Tuple

import numpy as np
from scipy.optimize import curve_fit, minimize_scalar
from scipy.special import expit, logit
from sklearn.linear_model import LinearRegression
from sklearn.metrics import r2_score

from src.utils.errors import ConfigError, DomainError, SingularDesignError

FIT_KINDS = ('linear', 'exponential', 'iso-elasticity', 'logit')


@dataclass(frozen=True)
class FitResult:
    kind: str
    coefficients: Tuple[float, ...]
    r_squared: float
    n: int

    def predict(self, prices: Sequence[float]) -> np.ndarray:
        p = np.asarray(prices, dtype=float)
        c = self.coefficients
        if self.kind == 'linear':
            return c[0] + c[1] * p
        if self.kind == 'exponential':
            return np.exp(c[0] + c[1] * p)
        if self.kind == 'iso-elasticity':
            return np.exp(c[0]) * np.power(p, c[1])
        return c[0] * expit(c[1] + c[2] * p)

    def to_dict(self) -> Dict[str, object]:
        return {
            'kind': self.kind,
            'coef': list(self.coefficients),
            'r2': self.r_squared,
            'n': self.n
        }


def _r_squared(y: np.ndarray, y_pred: np.ndarray) -> float:
    # r2_score reports 1.0 for a constant response matched exactly; a flat
    # response carries no explained variance here
    if np.ptp(y) == 0:
        return 0.0
    return float(r2_score(y, y_pred))


def _logit_curve(p, K, a, b):
    return K * expit(a + b * p)


class DemandFitter:
    def __init__(self, kind: str):
        if kind not in FIT_KINDS:
            raise ConfigError(f"Tipo de ajuste desconhecido: {kind}. Opções: {FIT_KINDS}")
        self.kind = kind
        self.model = LinearRegression()
        self.result = None

    def fit(self, prices: Sequence[float], demands: Sequence[float]) -> FitResult:
        p = np.asarray(prices, dtype=float)
        d = np.asarray(demands, dtype=float)
        self._validate(p, d)

        if self.kind == 'logit':
            coefficients, r2 = self._fit_logit(p, d)
        else:
            x, y = self._transform(p, d)
            self.model.fit(x.reshape(-1, 1), y)
            y_pred = self.model.predict(x.reshape(-1, 1))
            coefficients = (float(self.model.intercept_), float(self.model.coef_[0]))
            r2 = _r_squared(y, y_pred)

        self.result = FitResult(kind=self.kind, coefficients=tuple(coefficients), r_squared=r2, n=int(p.size))
        return self.result

    def _validate(self, p: np.ndarray, d: np.ndarray):
        if p.shape != d.shape or p.ndim != 1:
            raise ConfigError("Preços e demandas devem ser vetores do mesmo tamanho")
        if p.size < 3:
            raise ConfigError(f"São necessários ao menos 3 pontos, recebidos {p.size}")
        if not (np.all(np.isfinite(p)) and np.all(np.isfinite(d))):
            raise DomainError("Dados de preço/demanda contêm valores não finitos")
        if np.ptp(p) == 0:
            raise SingularDesignError("Matriz de projeto singular: todos os preços são iguais")
        if self.kind in ('exponential', 'iso-elasticity') and np.any(d <= 0):
            raise DomainError(f"Ajuste {self.kind} exige demandas estritamente positivas")
        if self.kind == 'iso-elasticity' and np.any(p <= 0):
            raise DomainError("Ajuste iso-elasticity exige preços estritamente positivos")

    def _transform(self, p: np.ndarray, d: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        if self.kind == 'linear':
            return p, d
        if self.kind == 'exponential':
            return p, np.log(d)
        return np.log(p), np.log(d)

    def _inner_ols(self, p: np.ndarray, d: np.ndarray, K: float) -> Tuple[float, float]:
        share = np.clip(d / K, 1e-6, 1.0 - 1e-6)
        reg = LinearRegression().fit(p.reshape(-1, 1), logit(share))
        return float(reg.intercept_), float(reg.coef_[0])

    def _fit_logit(self, p: np.ndarray, d: np.ndarray) -> Tuple[Tuple[float, float, float], float]:
        d_max = float(np.max(d))
        if d_max <= 0:
            raise DomainError("Ajuste logit exige ao menos uma demanda positiva")

        def sse(K):
            a, b = self._inner_ols(p, d, K)
            return float(np.sum((d - _logit_curve(p, K, a, b)) ** 2))

        search = minimize_scalar(sse, bounds=(d_max * (1.0 + 1e-6), d_max * 20.0), method='bounded',
                                 options={'xatol': 1e-8 * d_max})
        K0 = float(search.x)
        a0, b0 = self._inner_ols(p, d, K0)
        params = (K0, a0, b0)

        try:
            refined, _ = curve_fit(_logit_curve, p, d, p0=params, maxfev=20000)
            if np.all(np.isfinite(refined)) and sse_of(p, d, refined) <= sse_of(p, d, params):
                params = tuple(float(v) for v in refined)
        except (RuntimeError, ValueError):
            print("  - Refinamento NLS não convergiu; mantendo busca por seção áurea")

        return params, _r_squared(d, _logit_curve(p, *params))


def sse_of(p: np.ndarray, d: np.ndarray, params: Sequence[float]) -> float:
    return float(np.sum((d - _logit_curve(p, *params)) ** 2))


def fit_demand_model(kind: str, data: Sequence[Tuple[float, float]]) -> FitResult:
    pairs = np.asarray(list(data), dtype=float)
    if pairs.ndim != 2 or pairs.shape[1] != 2:
        raise ConfigError("Dados devem ser pares (preço, demanda)")
    return DemandFitter(kind).fit(pairs[:, 0], pairs[:, 1])


def fit_all_models(data: Sequence[Tuple[float, float]]) -> List[FitResult]:
    results = []
    for kind in FIT_KINDS:
        try:
            results.append(fit_demand_model(kind, data))
        except DomainError as e:
            print(f"  - Ajuste {kind} ignorado: {e}")
    return results


def best_fit(results: List[FitResult]) -> FitResult:
    if not results:
        raise ConfigError("Nenhum modelo de demanda pôde ser ajustado")
    # first in FIT_KINDS order wins ties
    return max(results, key=lambda r: r.r_squared)
