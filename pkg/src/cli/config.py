import copy
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

try:
    import tomllib
except ModuleNotFoundError:
    import tomli as tomllib

import numpy as np

from src.analytic.single_period import SinglePeriodParams
from src.demand.competition import CompetitorStrategy
from src.demand.models import LinearizedDemand, build_demand_model
from src.fsda.config import FSDAConfig
from src.market.simulator import CostParams, ScenarioConfig
from src.sa.two_timescale import SAConfig, StepSchedule
from src.utils.errors import ConfigError

# Synthetic logistic coefficients for the competitive scenarios: price rank is
# the strongest effect and a higher average price lowers sales.
DEFAULT_BETA = [2.0, -1.5, 0.05, 0.0, -0.08, -0.03]

_COMPETITIVE_SCENARIO = {
    'costs': {'h': 1.0, 'b': 4.0, 'c': 8.0, 'f': 0.0, 'z': 3},
    'demand': {'kind': 'logistic', 'eta': 40.0, 'delta': 1.0, 'beta': DEFAULT_BETA},
    'competitor': {'kind': 'undercut-cycle', 'decrement': 1.0, 'p_min': 10.0, 'p_max': 30.0},
    'price_grid': {'start': 10.0, 'stop': 30.0, 'num': 9},
    'quantity_grid': {'start': 0, 'stop': 12, 'step': 2},
    'mode': 'lost-sales',
    'fixed_cost': False,
    'horizon': 20,
    'gamma': 1.0,
    'x0': 0,
    'reference_smoothing': 0.5
}


def _scenario_preset(name: str, **overrides) -> dict:
    scenario = copy.deepcopy(_COMPETITIVE_SCENARIO)
    costs = overrides.pop('costs', {})
    scenario['costs'].update(costs)
    scenario.update(overrides)
    scenario['name'] = name
    return scenario


_DEFAULTS = {
    'name': 'default',
    'seeds': list(range(8)),
    'output_dir': 'results',
    'scenario': _scenario_preset('default'),
    'sa': {
        'a0': 2.0, 'u': 0.6, 'b0': 1.0, 'v': 0.9, 'offset': 10.0,
        'fast_variable': 'price', 'p0': 40.0, 'x0': 0.0,
        'iterations': 200_000, 'samples_per_step': 1,
        'diagnostic_every': 100, 'trace_every': 1000
    },
    'fsda': {},
    'search': {
        'kinds': ['bslp', 'ssp', 'myopic'],
        'budget': 120,
        'n_seeds': 8,
        'evaluator': 'simulation',
        'fit_samples': 10_000
    },
    'dp': {'budget': 100_000_000, 'support_cap': None},
    'simulate': {'policies': [{'kind': 'zero-order'}, {'kind': 'random'}]},
    'benchmark': {
        'scenarios': ['scenario-a', 'scenario-b', 'scenario-c', 'scenario-d'],
        'policies': ['bslp', 'ssp', 'myopic', 'fsda', 'random'],
        'eval_seeds': 20
    },
    'multi_product': None
}

PRESETS: Dict[str, dict] = {
    'appendix-c': {
        'name': 'appendix-c',
        'seeds': list(range(20)),
        'scenario': {
            'name': 'appendix-c',
            'costs': {'h': 4.0, 'b': 10.0, 'c': 5.0, 'f': 0.0, 'z': 0},
            'demand': {'kind': 'linearized', 'eta': 800.0, 'delta': 0.5, 'a': -4.0, 'l': -0.01},
            'competitor': {'kind': 'fixed', 'decrement': 1.0, 'p_min': 0.0, 'p_max': 80.0},
            'price_grid': {'start': 0.0, 'stop': 80.0, 'num': 33},
            'quantity_grid': {'start': 0, 'stop': 20, 'step': 1},
            'horizon': 1,
            'x0': 0,
            'reference_smoothing': 0.0
        }
    },
    'scenario-a': {'name': 'scenario-a', 'scenario': _scenario_preset('scenario-a')},
    'scenario-b': {'name': 'scenario-b',
                   'scenario': _scenario_preset('scenario-b', fixed_cost=True, costs={'f': 20.0})},
    'scenario-c': {'name': 'scenario-c', 'scenario': _scenario_preset('scenario-c', mode='backlog')},
    'scenario-d': {'name': 'scenario-d',
                   'scenario': _scenario_preset('scenario-d', mode='backlog', fixed_cost=True, costs={'f': 20.0})},
    'small': {
        'name': 'small',
        'scenario': _scenario_preset('small', costs={'z': 1}),
        'fsda': {'episodes': 3000, 'hidden1': 32, 'hidden2': 32, 'eval_every': 25, 'eval_rollouts': 16}
    },
    'tiny-dp': {
        'name': 'tiny-dp',
        'scenario': {
            'name': 'tiny-dp',
            'costs': {'h': 1.0, 'b': 4.0, 'c': 5.0, 'f': 0.0, 'z': 0},
            'demand': {'kind': 'linearized', 'eta': 20.0, 'delta': 0.5, 'a': -1.0, 'l': -0.02},
            'competitor': {'kind': 'fixed', 'decrement': 1.0, 'p_min': 10.0, 'p_max': 30.0},
            'price_grid': [10.0, 20.0, 30.0],
            'quantity_grid': [0, 2, 4],
            'horizon': 2,
            'x0': 0,
            'reference_smoothing': 0.0
        },
        'dp': {'support_cap': 8}
    }
}


PRESETS['single-period'] = PRESETS['appendix-c']


# a demand block or grid is always taken whole, never field by field
REPLACED_KEYS = ('demand', 'price_grid', 'quantity_grid')


def deep_merge(base: dict, override: dict) -> dict:
    merged = copy.deepcopy(base)
    for key, value in (override or {}).items():
        if key in REPLACED_KEYS:
            merged[key] = copy.deepcopy(value)
        elif isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = deep_merge(merged[key], value)
        else:
            merged[key] = copy.deepcopy(value)
    return merged


def load_config_file(path) -> dict:
    path = Path(path)
    if path.suffix == '.toml':
        with open(path, 'rb') as f:
            return tomllib.load(f)
    if path.suffix == '.json':
        with open(path, 'r', encoding='utf-8') as f:
            return json.load(f)
    raise ConfigError(f"Formato de configuração não suportado: {path.suffix} (use .toml ou .json)")


def resolve_config(preset: Optional[str] = None, file_config: Optional[dict] = None,
                   seed: Optional[int] = None, out: Optional[str] = None) -> dict:
    file_config = dict(file_config or {})
    preset = preset or file_config.pop('preset', None)
    file_config.pop('preset', None)

    raw = copy.deepcopy(_DEFAULTS)
    if preset is not None:
        if preset not in PRESETS:
            raise ConfigError(f"Preset desconhecido: {preset}. Opções: {sorted(PRESETS)}")
        raw = deep_merge(raw, PRESETS[preset])
    raw = deep_merge(raw, file_config)

    if seed is not None:
        raw['seeds'] = [int(seed) + i for i in range(len(raw['seeds']))]
        raw['fsda'] = deep_merge(raw['fsda'], {'seed': int(seed)})
    if out is not None:
        raw['output_dir'] = str(out)
    return raw


def canonical_json(raw: dict) -> str:
    return json.dumps(raw, sort_keys=True, indent=2, ensure_ascii=False)


def _grid(spec, integer: bool = False) -> Tuple:
    if isinstance(spec, (list, tuple)):
        values = list(spec)
    elif isinstance(spec, dict) and 'num' in spec:
        values = np.linspace(spec['start'], spec['stop'], int(spec['num'])).tolist()
    elif isinstance(spec, dict) and 'step' in spec:
        values = np.arange(spec['start'], spec['stop'] + spec['step'] / 2.0, spec['step']).tolist()
    else:
        raise ConfigError(f"Grade inválida: {spec!r}")
    if integer:
        return tuple(int(round(v)) for v in values)
    return tuple(float(v) for v in values)


def scenario_from_dict(raw: dict) -> ScenarioConfig:
    try:
        prices = _grid(raw['price_grid'])
        return ScenarioConfig(
            costs=CostParams(**raw.get('costs', {})),
            demand=build_demand_model(raw['demand'], (prices[0], prices[-1])),
            competitor=CompetitorStrategy(**raw.get('competitor', {})),
            price_grid=prices,
            quantity_grid=_grid(raw['quantity_grid'], integer=True),
            mode=raw.get('mode', 'lost-sales'),
            fixed_cost=bool(raw.get('fixed_cost', False)),
            horizon=int(raw.get('horizon', 20)),
            gamma=float(raw.get('gamma', 1.0)),
            x0=int(raw.get('x0', 0)),
            reference_smoothing=float(raw.get('reference_smoothing', 0.5)),
            seed=int(raw.get('seed', 0)),
            inventory_scale=raw.get('inventory_scale'),
            demand_scale=raw.get('demand_scale'),
            name=str(raw.get('name', 'scenario'))
        )
    except (KeyError, TypeError) as e:
        raise ConfigError(f"Cenário inválido: {e}")


def sa_config_from_dict(raw: dict, seed: int = 0) -> SAConfig:
    schedule = StepSchedule(a0=raw['a0'], u=raw['u'], b0=raw['b0'], v=raw['v'], offset=raw['offset'])
    return SAConfig(
        schedule=schedule,
        fast_variable=raw['fast_variable'],
        p0=float(raw['p0']),
        x0=float(raw['x0']),
        iterations=int(raw['iterations']),
        samples_per_step=int(raw['samples_per_step']),
        seed=int(seed),
        diagnostic_every=int(raw['diagnostic_every'])
    )


def preset_scenario(name: str, overrides: Optional[dict] = None) -> ScenarioConfig:
    """Scenario of a named preset with the user's scenario overrides applied on top."""
    return scenario_from_dict(deep_merge(resolve_config(preset=name)['scenario'], overrides or {}))


def single_period_params(scenario: ScenarioConfig) -> SinglePeriodParams:
    if not isinstance(scenario.demand, LinearizedDemand):
        raise ConfigError("O problema de período único exige demanda linearizada")
    return SinglePeriodParams(
        costs=scenario.costs,
        demand=scenario.demand.params,
        x0=scenario.x0,
        price_domain=(scenario.price_min, scenario.price_max),
        stock_domain=(0, scenario.q_max),
        price_points=len(scenario.price_grid)
    )


@dataclass(frozen=True)
class SearchConfig:
    kinds: Tuple[str, ...] = ('bslp', 'ssp', 'myopic')
    budget: int = 120
    n_seeds: int = 8
    evaluator: str = 'simulation'
    fit_samples: int = 10_000

    def __post_init__(self):
        if self.budget < 1 or self.n_seeds < 1:
            raise ConfigError("budget e n_seeds devem ser >= 1")


@dataclass(frozen=True)
class DPConfig:
    budget: int = 100_000_000
    support_cap: Optional[int] = None


@dataclass(frozen=True)
class ExperimentConfig:
    name: str
    scenario: ScenarioConfig
    seeds: Tuple[int, ...]
    output_dir: str
    sa: dict
    fsda: FSDAConfig
    search: SearchConfig
    dp: DPConfig
    simulate_policies: Tuple[dict, ...]
    benchmark: dict
    multi_product: Optional[dict]
    raw: Dict[str, Any] = field(default_factory=dict, compare=False)
    scenario_overrides: Dict[str, Any] = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if not self.seeds:
            raise ConfigError("Lista de seeds não pode ser vazia")

    def sa_config(self, seed: int) -> SAConfig:
        return sa_config_from_dict(self.sa, seed)

    def search_seeds(self) -> List[int]:
        return list(range(self.search.n_seeds))


def build_experiment(raw: dict, scenario_overrides: Optional[dict] = None) -> ExperimentConfig:
    scenario = scenario_from_dict(raw['scenario'])
    fsda_raw = dict(raw.get('fsda') or {})
    fsda_raw.setdefault('gamma', scenario.gamma)
    try:
        fsda = FSDAConfig(**fsda_raw)
        search = SearchConfig(**{**raw.get('search', {}), 'kinds': tuple(raw.get('search', {}).get('kinds', ()))})
        dp = DPConfig(**raw.get('dp', {}))
    except TypeError as e:
        raise ConfigError(f"Configuração inválida: {e}")

    # fail early on a bad schedule
    sa_config_from_dict(raw['sa']).schedule.validate()

    return ExperimentConfig(
        name=str(raw.get('name', 'default')),
        scenario=scenario,
        seeds=tuple(int(s) for s in raw.get('seeds', [])),
        output_dir=str(raw.get('output_dir', 'results')),
        sa=dict(raw['sa']),
        fsda=fsda,
        search=search,
        dp=dp,
        simulate_policies=tuple(raw.get('simulate', {}).get('policies', [])),
        benchmark=dict(raw.get('benchmark', {})),
        multi_product=raw.get('multi_product'),
        raw=raw,
        scenario_overrides=dict(scenario_overrides or {})
    )
