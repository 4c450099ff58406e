import argparse
import math
import sys
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np
import pandas as pd

from src.analytic.single_period import SinglePeriodModel
from src.baselines.policies import POLICY_KINDS, StationaryPolicy, build_params, random_policy, zero_order_policy
from src.baselines.search import search_parameters
from src.cli.config import (
    ExperimentConfig,
    build_experiment,
    canonical_json,
    load_config_file,
    preset_scenario,
    resolve_config,
    single_period_params,
)
from src.demand.fitting import FIT_KINDS, fit_all_models, fit_demand_model
from src.demand.models import LinearizedDemand, LogisticDemand
from src.dp.backward_induction import (
    backward_induction,
    cost_estimate,
    instance_from_scenario,
    policy_frame,
    tree_search_value,
    value_frame,
)
from src.fsda.envs import MultiProductEnv, SingleProductEnv
from src.fsda.trainer import RecurrentPolicy, load_bundle, save_bundle, train, train_multi_product
from src.ingestion.loader import DEFAULT_SAMPLE_SIZE, DataLoader
from src.market.multi_product import CrossPriceDemand
from src.market.simulator import ScenarioConfig, run_episode, trajectory_frame
from src.preprocessing.cleaning import PriceDemandCleaner
from src.sa.two_timescale import convergence_frame, median_final, run_seeds, trace_frame, tracking_diagnostics
from src.utils.errors import BudgetExceededError, ConfigError, PricingError
from src.utils.helpers import calculate_statistics, ensure_dir, save_frame, to_json, write_json
from src.utils.seeds import SeedStreams, evaluation_seeds, rng_for

SUMMARY_COLUMNS = ['policy', 'mean_reward', 'std_reward', 'n_seeds']
RESULT_COLUMNS = ['scenario', 'policy', 'mean_reward', 'std_reward', 'n_seeds']
TREE_SEARCH_LIMIT = 10 ** 7
EXIT_USAGE = 2
EXIT_INTERNAL = 1


def _policy_for(spec: dict, scenario: ScenarioConfig, seed: int):
    kind = spec['kind']
    if kind == 'zero-order':
        return zero_order_policy(scenario)
    if kind == 'random':
        return random_policy(scenario, SeedStreams(seed).generator('policy/random'))
    if kind in POLICY_KINDS:
        return StationaryPolicy(kind, build_params(kind, spec.get('params', {})), scenario)
    if kind == 'fsda':
        if 'checkpoint' not in spec:
            raise ConfigError("Política fsda na simulação exige o campo 'checkpoint'")
        return RecurrentPolicy(load_bundle(spec['checkpoint']), scenario)
    raise ConfigError(f"Política desconhecida para simulação: {kind}")


def _policy_label(spec: dict) -> str:
    return spec.get('label', spec['kind'])


def cmd_simulate(experiment: ExperimentConfig) -> Path:
    out = ensure_dir(experiment.output_dir)
    scenario = experiment.scenario
    if not experiment.simulate_policies:
        raise ConfigError("Nenhuma política configurada para simulação")

    print(f"Simulando {len(experiment.simulate_policies)} políticas em {len(experiment.seeds)} seeds...")
    rows = []
    for spec in experiment.simulate_policies:
        label = _policy_label(spec)
        totals = []
        for seed in experiment.seeds:
            episode = run_episode(scenario, _policy_for(spec, scenario, seed), rng_for(seed))
            save_frame(trajectory_frame(episode), out / f'trajectory_{label}_seed{seed}.csv')
            totals.append(episode.total_reward)
        stats = calculate_statistics(totals)
        rows.append({'policy': label, 'mean_reward': stats['mean'], 'std_reward': stats['std'], 'n_seeds': stats['n']})
        print(f"  - {label}: {stats['mean']:.2f} ± {stats['std']:.2f}")

    return save_frame(pd.DataFrame(rows, columns=SUMMARY_COLUMNS), out / 'summary.csv')


def cmd_sa_demo(experiment: ExperimentConfig) -> dict:
    out = ensure_dir(experiment.output_dir)
    params = single_period_params(experiment.scenario)
    model = SinglePeriodModel(params)
    base = experiment.sa_config(experiment.seeds[0])
    base.schedule.validate()

    print(f"Executando aproximação estocástica em duas escalas ({len(experiment.seeds)} seeds, K={base.iterations})...")
    traces = run_seeds(model, base, list(experiment.seeds))
    every = int(experiment.sa.get('trace_every', 1000))
    for trace in traces:
        save_frame(trace_frame(trace, every), out / f'trace_seed{trace.seed}.csv')
    save_frame(convergence_frame(traces, every), out / 'convergence.csv')

    p_med, x_med = median_final(traces)
    x_int = int(np.clip(round(x_med), params.stock_grid[0], params.stock_grid[-1]))
    report = model.check_optimality(p_med, x_int)
    p_star, x_star, f_star = model.enumerate_optimum()
    diagnostics = tracking_diagnostics(traces, base.schedule, base.fast_variable)

    payload = {
        'median_final': {'p': p_med, 'x': x_med},
        'optimality': report.to_dict(),
        'enumeration': {'p': p_star, 'x': x_star, 'F': f_star},
        'matches_enumeration': bool(x_int == x_star and abs(p_med - p_star) <= params.price_step),
        'tracking': {
            'first_quarter_mean': diagnostics.first_quarter_mean,
            'final_quarter_mean': diagnostics.final_quarter_mean,
            'decays': diagnostics.decays,
            'loglog_slope': diagnostics.loglog_slope
        },
        'seeds': list(experiment.seeds),
        'iterations': base.iterations
    }
    write_json(payload, out / 'report.json')
    print("Aproximação estocástica concluída")
    print(f"  - mediana final: p={p_med:.3f}, x={x_med:.3f}")
    print(f"  - condições de otimalidade: {'ok' if report.satisfied else 'falhou'}")
    return payload


def _dp_cross_check(experiment: ExperimentConfig, instance, result) -> Dict[str, object]:
    scenario = experiment.scenario
    if instance.horizon == 1 and isinstance(scenario.demand, LinearizedDemand):
        model = SinglePeriodModel(single_period_params(scenario))
        p_star, x_star, f_star = model.enumerate_optimum()
        p_dp = instance.price_grid[result.price_idx[0, instance.x0, 0]]
        x_dp = instance.x0 + instance.quantity_grid[result.qty_idx[0, instance.x0, 0]]
        match = bool(math.isclose(p_dp, p_star) and x_dp == x_star and abs(result.initial_value - f_star) < 1e-8)
        return {'method': 'single-period-enumeration', 'status': 'match' if match else 'mismatch',
                'reference': {'p': p_star, 'x': x_star, 'value': f_star},
                'dp': {'p': p_dp, 'x': x_dp, 'value': result.initial_value}}

    n_demands = instance.demand_pmfs().shape[1]
    if cost_estimate(instance.n_prices, instance.n_quantities, n_demands, instance.horizon) <= TREE_SEARCH_LIMIT:
        tree_value, updates = tree_search_value(instance)
        match = abs(tree_value - result.initial_value) < 1e-10
        return {'method': 'scenario-tree', 'status': 'match' if match else 'mismatch',
                'reference': {'value': tree_value, 'updates': updates},
                'dp': {'value': result.initial_value, 'updates': result.value_updates}}

    return {'method': 'none', 'status': 'skipped'}


def cmd_dp_oracle(experiment: ExperimentConfig) -> dict:
    out = ensure_dir(experiment.output_dir)
    instance = instance_from_scenario(experiment.scenario, budget=experiment.dp.budget,
                                      support_cap=experiment.dp.support_cap)
    print("Resolvendo indução retroativa...")
    try:
        result = backward_induction(instance)
    except BudgetExceededError as e:
        print(f"  - Estimativa de custo: {e.cost_estimate}")
        raise

    save_frame(value_frame(instance, result), out / 'values.csv')
    save_frame(policy_frame(instance, result), out / 'policy.csv')
    payload = {
        'initial_value': result.initial_value,
        'value_updates': result.value_updates,
        'cross_check': _dp_cross_check(experiment, instance, result)
    }
    write_json(payload, out / 'report.json')
    print("Indução retroativa concluída")
    print(f"  - valor inicial: {result.initial_value:.6f}")
    print(f"  - verificação cruzada: {payload['cross_check']['status']}")
    return payload


def _build_env(experiment: ExperimentConfig):
    scenario = experiment.scenario
    multi = experiment.multi_product
    if not multi:
        return SingleProductEnv(scenario)
    if not isinstance(scenario.demand, LogisticDemand):
        raise ConfigError("Multiproduto exige demanda logística")
    n = int(multi.get('n_products', 2))
    cross = multi.get('cross') or [[0.0] * n for _ in range(n)]
    model = CrossPriceDemand(products=tuple([scenario.demand.params] * n),
                             cross=tuple(tuple(row) for row in cross))
    return MultiProductEnv([scenario] * n, model)


def cmd_train_fsda(experiment: ExperimentConfig) -> dict:
    out = ensure_dir(experiment.output_dir)
    env = _build_env(experiment)
    if isinstance(env, MultiProductEnv):
        result = train_multi_product(experiment.fsda, env)
    else:
        result = train(experiment.fsda, env)

    save_frame(result.learning_curve, out / 'learning_curve.csv')
    save_bundle(result.bundle, out / 'checkpoint')
    curve = result.learning_curve
    payload = {
        'episodes': experiment.fsda.episodes,
        'fast_updates': result.fast_updates,
        'slow_updates': result.slow_updates,
        'final_mean_return': float(curve['mean_return'].iloc[-1]) if not curve.empty else None,
        'config': experiment.fsda.to_dict()
    }
    write_json(payload, out / 'report.json')
    return payload


def cmd_fit_demand(csv_path: str, kind: str, out_dir: Optional[str] = None) -> List[dict]:
    loader = DataLoader()
    df = loader.load_csv(csv_path)
    cleaner = PriceDemandCleaner()
    cleaned = cleaner.clean(df)
    pairs = cleaner.to_pairs(cleaned)

    info = {'limpeza': cleaner.get_cleaning_summary(df, cleaned), 'dados': loader.get_data_info(cleaned)}
    for section in info.values():
        for key, value in section.items():
            print(f"  - {key}: {value}")

    if kind == 'all':
        results = fit_all_models(pairs)
    elif kind in FIT_KINDS:
        results = [fit_demand_model(kind, pairs)]
    else:
        raise ConfigError(f"Tipo de ajuste desconhecido: {kind}. Opções: {FIT_KINDS + ('all',)}")

    payload = [r.to_dict() for r in results]
    print(to_json(payload))
    if out_dir is not None:
        write_json(payload, Path(out_dir) / 'fit.json')
        write_json(info, Path(out_dir) / 'data_info.json')
    return payload


def cmd_sample_demand(experiment: ExperimentConfig, n: int) -> Path:
    if n < 1:
        raise ConfigError(f"Número de amostras deve ser >= 1, recebido {n}")
    scenario = experiment.scenario
    loader = DataLoader(data_dir=experiment.output_dir)
    rng = SeedStreams(experiment.seeds[0]).generator('ingestion/samples')
    samples = loader.generate_samples(scenario.demand, scenario.price_grid, rng, n=n)
    return loader.save_sample_data(samples)


def cmd_search_baseline(experiment: ExperimentConfig, kind: str) -> dict:
    out = ensure_dir(experiment.output_dir)
    search = experiment.search
    result = search_parameters(kind, experiment.scenario, search.budget, experiment.search_seeds(),
                               evaluator=search.evaluator, fit_samples=search.fit_samples,
                               root_seed=experiment.seeds[0])
    save_frame(result.candidates, out / f'candidates_{kind}.csv')
    payload = {
        'kind': kind,
        'params': result.params.to_dict(),
        'mean_return': result.mean_return,
        'std_return': result.std_return,
        'evaluations': result.evaluations,
        'fit': result.fit.to_dict() if result.fit is not None else None
    }
    write_json(payload, out / f'best_{kind}.json')
    return payload


def _evaluate(scenario: ScenarioConfig, make_policy, seeds: List[int]) -> dict:
    totals = [run_episode(scenario, make_policy(seed), rng_for(seed)).total_reward for seed in seeds]
    return calculate_statistics(totals)


def cmd_benchmark(experiment: ExperimentConfig) -> Path:
    out = ensure_dir(experiment.output_dir)
    bench = experiment.benchmark
    policies = list(bench.get('policies', []))
    if len(policies) < 2:
        raise ConfigError("Benchmark exige ao menos duas políticas")
    eval_seeds = evaluation_seeds(range(int(bench.get('eval_seeds', 20))))

    rows = []
    for name in bench.get('scenarios', []):
        scenario = preset_scenario(name, experiment.scenario_overrides)
        print(f"Cenário {name}:")
        for kind in policies:
            if kind in POLICY_KINDS:
                search = experiment.search
                found = search_parameters(kind, scenario, search.budget, experiment.search_seeds(),
                                          fit_samples=search.fit_samples, root_seed=experiment.seeds[0])
                stats = _evaluate(scenario, lambda seed, f=found: f.policy(scenario), eval_seeds)
            elif kind == 'fsda':
                trained = train(experiment.fsda, SingleProductEnv(scenario))
                stats = _evaluate(scenario, lambda seed, b=trained.bundle: RecurrentPolicy(b, scenario), eval_seeds)
            elif kind == 'random':
                stats = _evaluate(scenario, lambda seed: random_policy(
                    scenario, SeedStreams(seed).generator('policy/random')), eval_seeds)
            elif kind == 'zero-order':
                stats = _evaluate(scenario, lambda seed: zero_order_policy(scenario), eval_seeds)
            else:
                raise ConfigError(f"Política desconhecida no benchmark: {kind}")
            rows.append({'scenario': name, 'policy': kind, 'mean_reward': stats['mean'],
                         'std_reward': stats['std'], 'n_seeds': stats['n']})
            print(f"  - {kind}: {stats['mean']:.2f} ± {stats['std']:.2f}")

    results = pd.DataFrame(rows, columns=RESULT_COLUMNS)
    save_frame(results, out / 'results.csv')
    save_frame(win_loss_matrix(results), out / 'win_loss.csv')
    return out / 'results.csv'


def win_loss_matrix(results: pd.DataFrame) -> pd.DataFrame:
    """Number of scenarios in which the row policy beats the column policy on mean reward."""
    policies = list(dict.fromkeys(results['policy']))
    table = results.pivot_table(index='scenario', columns='policy', values='mean_reward', aggfunc='first')
    rows = []
    for a in policies:
        row = {'policy': a}
        for b in policies:
            row[b] = int((table[a] > table[b]).sum())
        rows.append(row)
    return pd.DataFrame(rows, columns=['policy'] + policies)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog='app.py', description='Precificação dinâmica e reposição de estoque')
    sub = parser.add_subparsers(dest='command', required=True)

    def common(p):
        p.add_argument('--config', help='arquivo TOML ou JSON')
        p.add_argument('--preset', help='preset nomeado (ex.: appendix-c, scenario-a, tiny-dp)')
        p.add_argument('--seed', type=int, help='seed raiz')
        p.add_argument('--out', help='diretório de saída')

    for name in ('simulate', 'sa-demo', 'benchmark', 'dp-oracle', 'train-fsda'):
        common(sub.add_parser(name))

    search = sub.add_parser('search-baseline')
    common(search)
    search.add_argument('--kind', required=True, choices=POLICY_KINDS)

    sample = sub.add_parser('sample-demand')
    common(sample)
    sample.add_argument('--n', type=int, default=DEFAULT_SAMPLE_SIZE, help='número de pares preço-demanda')

    fit = sub.add_parser('fit-demand')
    fit.add_argument('csv', help='arquivo CSV com colunas price,demand')
    fit.add_argument('--kind', default='all', choices=FIT_KINDS + ('all',))
    fit.add_argument('--out', help='diretório de saída')
    return parser


def _experiment_from_args(args) -> ExperimentConfig:
    file_config = load_config_file(args.config) if args.config else None
    raw = resolve_config(args.preset, file_config, args.seed, args.out)
    experiment = build_experiment(raw, (file_config or {}).get('scenario'))
    out = ensure_dir(experiment.output_dir)
    (out / 'config.json').write_text(canonical_json(raw) + '\n', encoding='utf-8')
    return experiment


def run(argv: Optional[List[str]] = None):
    args = build_parser().parse_args(argv)
    if args.command == 'fit-demand':
        return cmd_fit_demand(args.csv, args.kind, args.out)

    experiment = _experiment_from_args(args)
    if args.command == 'simulate':
        return cmd_simulate(experiment)
    if args.command == 'sa-demo':
        return cmd_sa_demo(experiment)
    if args.command == 'benchmark':
        return cmd_benchmark(experiment)
    if args.command == 'dp-oracle':
        return cmd_dp_oracle(experiment)
    if args.command == 'sample-demand':
        return cmd_sample_demand(experiment, args.n)
    if args.command == 'train-fsda':
        return cmd_train_fsda(experiment)
    return cmd_search_baseline(experiment, args.kind)


def main(argv: Optional[List[str]] = None) -> int:
    try:
        run(argv)
    except PricingError as e:
        print(to_json(e.to_dict()), file=sys.stderr)
        return EXIT_USAGE
    except OSError as e:
        print(to_json({'error': 'io', 'message': str(e)}), file=sys.stderr)
        return EXIT_USAGE
    except Exception as e:
        print(to_json({'error': 'internal', 'message': f'{type(e).__name__}: {e}'}), file=sys.stderr)
        return EXIT_INTERNAL
    return 0
