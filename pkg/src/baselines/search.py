import itertools
import math
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from src.baselines.policies import BSLP, MYOPIC, POLICY_KINDS, SSP, StationaryPolicy, build_params
from src.demand.fitting import FitResult, best_fit, fit_all_models
from src.dp.backward_induction import evaluate_policy, instance_from_scenario, policy_tables_from
from src.ingestion.loader import DEFAULT_SAMPLE_SIZE, DataLoader
from src.market.simulator import ScenarioConfig, run_episode
from src.utils.errors import ConfigError
from src.utils.helpers import calculate_statistics
from src.utils.seeds import SeedStreams, rng_for

SIMULATION = 'simulation'
EXACT = 'exact'

Grid = Dict[str, List[float]]


@dataclass
class SearchResult:
    kind: str
    params: object
    mean_return: float
    std_return: float
    candidates: pd.DataFrame
    fit: Optional[FitResult]
    evaluations: int

    def policy(self, config: ScenarioConfig) -> StationaryPolicy:
        return StationaryPolicy(self.kind, self.params, config)


def fit_stationary_demand(scenario: ScenarioConfig, rng: np.random.Generator,
                          n: int = DEFAULT_SAMPLE_SIZE) -> FitResult:
    samples = DataLoader().generate_samples(scenario.demand, scenario.price_grid, rng, n=n)
    fit = best_fit(fit_all_models(list(zip(samples['price'], samples['demand']))))
    print(f"  - Padrão de demanda: {fit.kind} (R² = {fit.r_squared:.3f})")
    return fit


def _stock_range(scenario: ScenarioConfig, fit: Optional[FitResult]) -> int:
    cap = scenario.q_max * (scenario.lead_time + 1)
    if fit is None:
        return max(1, cap)
    lead_demand = float(fit.predict([scenario.price_mid])[0]) * (scenario.lead_time + 1)
    if not math.isfinite(lead_demand) or lead_demand <= 0:
        return max(1, cap)
    return int(max(1, min(cap, math.ceil(lead_demand + 3.0 * math.sqrt(lead_demand)))))


def default_grid(kind: str, scenario: ScenarioConfig, fit: Optional[FitResult] = None) -> Grid:
    hi = _stock_range(scenario, fit)
    stocks = sorted({int(round(v)) for v in np.linspace(0, hi, 6)})
    prices = list(scenario.price_grid)
    if len(prices) > 9:
        prices = [prices[i] for i in sorted({int(round(v)) for v in np.linspace(0, len(prices) - 1, 9)})]
    span = scenario.price_max - scenario.price_min
    slopes = [-span / max(hi, 1) * f for f in (0.0, 0.05, 0.1, 0.2, 0.4)]

    if kind == BSLP:
        return {'base_stock': stocks, 'list_price': prices, 'markdown_slope': slopes}
    if kind == SSP:
        return {'s': stocks[:-1], 'S': stocks[1:], 'list_price': prices, 'markdown_slope': slopes}
    if kind == MYOPIC:
        return {'base_stock': stocks, 'pipeline_weight': [0.0, 0.5, 1.0],
                'intercept': prices, 'slope': slopes}
    raise ConfigError(f"Política desconhecida: {kind}. Opções: {POLICY_KINDS}")


def _valid(kind: str, values: dict) -> bool:
    return not (kind == SSP and values['s'] >= values['S'])


def _coarse_axes(axes: List[list], limit: int) -> List[list]:
    axes = [list(a) for a in axes]
    while math.prod(len(a) for a in axes) > limit:
        longest = max(range(len(axes)), key=lambda i: len(axes[i]))
        if len(axes[longest]) <= 1:
            break
        thinned = axes[longest][::2]
        if axes[longest][-1] not in thinned and len(thinned) < len(axes[longest]) - 1:
            thinned.append(axes[longest][-1])
        axes[longest] = thinned
    return axes


class CandidateEvaluator:
    def __init__(self, kind: str, scenario: ScenarioConfig, seeds: Sequence[int], evaluator: str = SIMULATION):
        if evaluator not in (SIMULATION, EXACT):
            raise ConfigError(f"Avaliador desconhecido: {evaluator}")
        if evaluator == SIMULATION and not seeds:
            raise ConfigError("Lista de seeds não pode ser vazia")
        self.kind = kind
        self.scenario = scenario
        self.seeds = [int(s) for s in seeds]
        self.evaluator = evaluator
        self.instance = instance_from_scenario(scenario) if evaluator == EXACT else None

    def __call__(self, values: dict) -> Tuple[float, float]:
        policy = StationaryPolicy(self.kind, build_params(self.kind, values), self.scenario)
        if self.instance is not None:
            value = evaluate_policy(self.instance, *policy_tables_from(self.instance, policy))
            return value, 0.0
        # common random numbers: every candidate sees the same demand streams
        totals = [run_episode(self.scenario, policy, rng_for(seed)).total_reward for seed in self.seeds]
        stats = calculate_statistics(totals)
        return stats['mean'], stats['std']


def search_parameters(kind: str, scenario: ScenarioConfig, budget: int, seeds: Sequence[int],
                      grid: Optional[Grid] = None, evaluator: str = SIMULATION,
                      fit_samples: int = DEFAULT_SAMPLE_SIZE, root_seed: int = 0) -> SearchResult:
    if kind not in POLICY_KINDS:
        raise ConfigError(f"Política desconhecida: {kind}. Opções: {POLICY_KINDS}")
    if budget < 1:
        raise ConfigError("Orçamento de busca deve ser >= 1 avaliação")

    print(f"Iniciando busca de parâmetros ({kind})...")
    fit = None
    if grid is None:
        fit = fit_stationary_demand(scenario, SeedStreams(root_seed).generator(f'search/{kind}/fit'), fit_samples)
        grid = default_grid(kind, scenario, fit)
    if not grid or any(len(v) == 0 for v in grid.values()):
        raise ConfigError("Grade de parâmetros vazia")

    names = list(grid)
    axes = [list(grid[n]) for n in names]
    evaluate = CandidateEvaluator(kind, scenario, seeds, evaluator)
    results: Dict[tuple, Tuple[float, float]] = {}

    def run(combos):
        for combo in combos:
            if len(results) >= budget:
                return
            values = dict(zip(names, combo))
            if combo not in results and _valid(kind, values):
                results[combo] = evaluate(values)

    full_size = math.prod(len(a) for a in axes)
    if full_size <= budget:
        run(itertools.product(*axes))
    else:
        coarse = _coarse_axes(axes, max(1, budget // 2))
        run(itertools.product(*coarse))
        if results:
            best = max(results, key=lambda c: results[c][0])
            window = []
            for axis, thin, value in zip(axes, coarse, best):
                stride = max(1, math.ceil(len(axis) / max(1, len(thin))))
                i = axis.index(value)
                window.append(axis[max(0, i - stride):i + stride + 1])
            run(itertools.product(*window))

    if not results:
        raise ConfigError("Nenhum candidato válido na grade")

    # ties go to the first candidate in full-grid order
    order = {combo: k for k, combo in enumerate(itertools.product(*axes))}
    ranked = sorted(results, key=lambda c: order[c])
    best = max(ranked, key=lambda c: results[c][0])
    mean, std = results[best]

    rows = []
    for combo in ranked:
        row = dict(zip(names, combo))
        row['mean_return'], row['std_return'] = results[combo]
        rows.append(row)
    candidates = pd.DataFrame(rows, columns=names + ['mean_return', 'std_return'])

    params = build_params(kind, dict(zip(names, best)))
    print(f"Busca concluída: {len(results)} candidatos avaliados")
    print(f"  - Melhor: {params.to_dict()}")
    print(f"  - Retorno médio: {mean:.2f}")

    return SearchResult(kind=kind, params=params, mean_return=mean, std_return=std,
                        candidates=candidates, fit=fit, evaluations=len(results))
