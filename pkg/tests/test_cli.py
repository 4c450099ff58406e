import json

import pandas as pd
import pytest

from src.cli.commands import main, win_loss_matrix
from src.cli.config import build_experiment, canonical_json, load_config_file, resolve_config
from src.dp.backward_induction import cost_estimate
from src.utils.errors import ConfigError


def _error(capsys) -> dict:
    return json.loads(capsys.readouterr().err)


def _toml(tmp_path, text: str):
    path = tmp_path / 'experiment.toml'
    path.write_text(text, encoding='utf-8')
    return str(path)


def test_dp_oracle_tiny_preset_matches_tree_search(tmp_path):
    out = tmp_path / 'dp'
    assert main(['dp-oracle', '--preset', 'tiny-dp', '--out', str(out)]) == 0
    report = json.loads((out / 'report.json').read_text(encoding='utf-8'))
    assert report['cross_check']['method'] == 'scenario-tree'
    assert report['cross_check']['status'] == 'match'
    assert report['value_updates'] == cost_estimate(3, 3, 9, 2)
    assert {'values.csv', 'policy.csv', 'config.json'} <= {p.name for p in out.iterdir()}


def test_dp_oracle_outputs_are_byte_identical(tmp_path):
    first, second = tmp_path / 'a', tmp_path / 'b'
    main(['dp-oracle', '--preset', 'tiny-dp', '--out', str(first)])
    main(['dp-oracle', '--preset', 'tiny-dp', '--out', str(second)])
    for name in ('values.csv', 'policy.csv', 'report.json'):
        assert (first / name).read_bytes() == (second / name).read_bytes()


def test_dp_oracle_single_period_cross_check(tmp_path):
    out = tmp_path / 'single'
    assert main(['dp-oracle', '--preset', 'appendix-c', '--out', str(out)]) == 0
    check = json.loads((out / 'report.json').read_text(encoding='utf-8'))['cross_check']
    assert check['method'] == 'single-period-enumeration'
    assert check['status'] == 'match'
    assert check['dp']['x'] == 5


def test_dp_oracle_budget_error(tmp_path, capsys):
    config = _toml(tmp_path, '[dp]\nbudget = 10\n')
    code = main(['dp-oracle', '--preset', 'tiny-dp', '--config', config, '--out', str(tmp_path / 'dp')])
    assert code == 2
    error = _error(capsys)
    assert error['error'] == 'size'
    assert error['cost_estimate'] == cost_estimate(3, 3, 9, 2)


def test_simulate_writes_summary(tmp_path):
    out = tmp_path / 'sim'
    assert main(['simulate', '--preset', 'tiny-dp', '--seed', '3', '--out', str(out)]) == 0
    summary = pd.read_csv(out / 'summary.csv')
    assert summary['policy'].tolist() == ['zero-order', 'random']
    assert summary['n_seeds'].tolist() == [8, 8]
    assert (out / 'trajectory_random_seed3.csv').exists()
    assert not (out / 'trajectory_random_seed0.csv').exists()


def test_fit_demand_on_csv(tmp_path):
    csv = tmp_path / 'pairs.csv'
    rows = ['price,demand'] + [f'{p},{100 - 2 * p}' for p in range(5, 50, 5)]
    csv.write_text('\n'.join(rows) + '\n', encoding='utf-8')
    assert main(['fit-demand', str(csv), '--kind', 'linear', '--out', str(tmp_path)]) == 0
    fit = json.loads((tmp_path / 'fit.json').read_text(encoding='utf-8'))
    assert fit[0]['kind'] == 'linear'
    assert fit[0]['r2'] == pytest.approx(1.0)
    assert fit[0]['coef'][0] == pytest.approx(100.0)
    assert fit[0]['n'] == 9


def test_fit_demand_reports_bad_line(tmp_path, capsys):
    csv = tmp_path / 'bad.csv'
    csv.write_text('price,demand\n10,3\n12,abc\n', encoding='utf-8')
    assert main(['fit-demand', str(csv)]) == 2
    error = _error(capsys)
    assert error['error'] == 'parse'
    assert error['line'] == 3


def test_missing_file_is_an_io_error(tmp_path, capsys):
    assert main(['fit-demand', str(tmp_path / 'missing.csv')]) == 2
    assert _error(capsys)['error'] == 'io'


def test_unknown_preset_is_a_config_error(tmp_path, capsys):
    assert main(['simulate', '--preset', 'scenario-z', '--out', str(tmp_path)]) == 2
    assert _error(capsys)['error'] == 'config'


def test_unknown_command_exits_with_usage():
    with pytest.raises(SystemExit) as info:
        main(['forecast'])
    assert info.value.code == 2


def test_written_config_is_canonical(tmp_path):
    out = tmp_path / 'run'
    main(['dp-oracle', '--preset', 'tiny-dp', '--seed', '11', '--out', str(out)])
    text = (out / 'config.json').read_text(encoding='utf-8')
    raw = load_config_file(out / 'config.json')
    assert canonical_json(resolve_config(file_config=raw)) + '\n' == text
    assert build_experiment(raw).seeds[0] == 11


def test_unsupported_config_format(tmp_path):
    path = tmp_path / 'config.yaml'
    path.write_text('seeds: [1]\n', encoding='utf-8')
    with pytest.raises(ConfigError):
        load_config_file(path)


def test_search_baseline_writes_candidates(tmp_path):
    config = _toml(tmp_path, '[search]\nbudget = 6\nn_seeds = 2\nfit_samples = 500\n')
    out = tmp_path / 'search'
    assert main(['search-baseline', '--kind', 'bslp', '--preset', 'tiny-dp', '--config', config,
                 '--out', str(out)]) == 0
    best = json.loads((out / 'best_bslp.json').read_text(encoding='utf-8'))
    candidates = pd.read_csv(out / 'candidates_bslp.csv')
    assert best['evaluations'] == len(candidates) <= 6
    assert best['mean_return'] == pytest.approx(candidates['mean_return'].max())
    assert best['fit']['kind'] in ('linear', 'exponential', 'iso-elasticity', 'logit')


def test_train_fsda_writes_curve_and_checkpoint(tmp_path):
    config = _toml(tmp_path, '\n'.join([
        '[fsda]', 'episodes = 2', 'hidden1 = 4', 'hidden2 = 4', 'rollouts_per_episode = 1',
        'update_epochs = 1', 'eval_every = 1', 'eval_rollouts = 2', ''
    ]))
    out = tmp_path / 'fsda'
    assert main(['train-fsda', '--preset', 'tiny-dp', '--config', config, '--out', str(out)]) == 0
    curve = pd.read_csv(out / 'learning_curve.csv')
    assert list(curve.columns) == ['episode', 'mean_return', 'std_return']
    assert curve['episode'].tolist() == [1, 2]
    report = json.loads((out / 'report.json').read_text(encoding='utf-8'))
    assert report['fast_updates'] == 2
    assert (out / 'checkpoint' / 'critic.bin').exists()


def test_sa_demo_report(tmp_path):
    config = _toml(tmp_path, 'seeds = [0, 1]\n\n[sa]\niterations = 2000\ntrace_every = 500\n')
    out = tmp_path / 'sa'
    assert main(['sa-demo', '--preset', 'appendix-c', '--config', config, '--out', str(out)]) == 0
    report = json.loads((out / 'report.json').read_text(encoding='utf-8'))
    assert report['iterations'] == 2000
    assert report['seeds'] == [0, 1]
    assert report['enumeration']['x'] == 5
    assert set(report['optimality']) >= {'satisfied'}
    assert len(pd.read_csv(out / 'trace_seed1.csv')) == 4
    assert pd.read_csv(out / 'convergence.csv')['k'].tolist() == [0, 500, 1000, 1500, 2000]


def test_win_loss_matrix():
    results = pd.DataFrame({
        'scenario': ['a', 'a', 'b', 'b'],
        'policy': ['bslp', 'random', 'bslp', 'random'],
        'mean_reward': [10.0, 2.0, -1.0, 3.0],
    })
    table = win_loss_matrix(results).set_index('policy')
    assert table.loc['bslp', 'random'] == 1
    assert table.loc['random', 'bslp'] == 1
    assert table.loc['bslp', 'bslp'] == 0


def test_benchmark_writes_results_and_win_loss(tmp_path):
    config = _toml(tmp_path, '\n'.join([
        '[benchmark]', 'scenarios = ["tiny-dp"]', 'policies = ["zero-order", "random"]', 'eval_seeds = 3', ''
    ]))
    out = tmp_path / 'bench'
    assert main(['benchmark', '--config', config, '--out', str(out)]) == 0
    results = pd.read_csv(out / 'results.csv')
    assert results['policy'].tolist() == ['zero-order', 'random']
    assert results['n_seeds'].tolist() == [3, 3]
    assert list(pd.read_csv(out / 'win_loss.csv').columns) == ['policy', 'zero-order', 'random']


def test_benchmark_needs_two_policies(tmp_path, capsys):
    config = _toml(tmp_path, '[benchmark]\nscenarios = ["tiny-dp"]\npolicies = ["random"]\n')
    assert main(['benchmark', '--config', config, '--out', str(tmp_path / 'bench')]) == 2
    assert _error(capsys)['error'] == 'config'


def test_single_period_alias_resolves_to_the_reference_preset():
    reference = resolve_config('appendix-c')
    assert resolve_config('single-period') == reference
    assert reference['scenario']['horizon'] == 1
    assert reference['scenario']['demand'] == {'kind': 'linearized', 'eta': 800.0, 'delta': 0.5, 'a': -4.0, 'l': -0.01}


def test_dp_oracle_accepts_myopic_discount(tmp_path):
    config = _toml(tmp_path, '[scenario]\ngamma = 0.0\n')
    out = tmp_path / 'myopic'
    assert main(['dp-oracle', '--preset', 'tiny-dp', '--config', config, '--out', str(out)]) == 0
    report = json.loads((out / 'report.json').read_text(encoding='utf-8'))
    assert report['cross_check']['status'] == 'match'
    policy = pd.read_csv(out / 'policy.csv')
    first, last = policy[policy['t'] == 1], policy[policy['t'] == 2]
    assert first['price'].tolist() == last['price'].tolist()
    assert first['qty'].tolist() == last['qty'].tolist()


def test_benchmark_applies_scenario_overrides(tmp_path):
    bench = '[benchmark]\nscenarios = ["tiny-dp"]\npolicies = ["zero-order", "random"]\neval_seeds = 3\n'
    base, harsh = tmp_path / 'base', tmp_path / 'harsh'
    assert main(['benchmark', '--config', _toml(tmp_path, bench), '--out', str(base)]) == 0
    assert main(['benchmark', '--config', _toml(tmp_path, bench + '\n[scenario.costs]\nb = 40.0\n'),
                 '--out', str(harsh)]) == 0
    before = pd.read_csv(base / 'results.csv').set_index('policy')
    after = pd.read_csv(harsh / 'results.csv').set_index('policy')
    # the zero-order policy never orders, so its only cost is the lost-sales penalty
    assert before.loc['zero-order', 'mean_reward'] < 0
    assert after.loc['zero-order', 'mean_reward'] == pytest.approx(10 * before.loc['zero-order', 'mean_reward'])


def test_fit_demand_reports_cleaning_and_data_info(tmp_path):
    csv = tmp_path / 'pairs.csv'
    csv.write_text('price,demand\n10,4\n20,-1\n5,6\n20,3\n', encoding='utf-8')
    assert main(['fit-demand', str(csv), '--kind', 'linear', '--out', str(tmp_path)]) == 0
    info = json.loads((tmp_path / 'data_info.json').read_text(encoding='utf-8'))
    assert info['limpeza']['registros_iniciais'] == 4
    assert info['limpeza']['registros_removidos'] == 1
    assert info['dados']['precos_distintos'] == 3
    assert info['dados']['demanda_total'] == pytest.approx(13.0)


def test_sample_demand_writes_reproducible_pairs(tmp_path):
    first, second = tmp_path / 'a', tmp_path / 'b'
    assert main(['sample-demand', '--preset', 'tiny-dp', '--n', '300', '--out', str(first)]) == 0
    assert main(['sample-demand', '--preset', 'tiny-dp', '--n', '300', '--out', str(second)]) == 0
    name = 'price_demand_sample.csv'
    assert (first / name).read_bytes() == (second / name).read_bytes()
    samples = pd.read_csv(first / name)
    assert list(samples.columns) == ['price', 'demand']
    assert len(samples) == 300
    assert set(samples['price']) <= {10.0, 20.0, 30.0}
    assert main(['fit-demand', str(first / name), '--kind', 'linear']) == 0


def test_sample_demand_rejects_empty_request(tmp_path, capsys):
    assert main(['sample-demand', '--preset', 'tiny-dp', '--n', '0', '--out', str(tmp_path)]) == 2
    assert _error(capsys)['error'] == 'config'


def test_simulate_replays_trained_checkpoint(tmp_path):
    train_config = _toml(tmp_path, '\n'.join([
        '[fsda]', 'episodes = 1', 'hidden1 = 4', 'hidden2 = 4', 'rollouts_per_episode = 1',
        'update_epochs = 1', 'eval_every = 1', 'eval_rollouts = 1', ''
    ]))
    trained = tmp_path / 'fsda'
    assert main(['train-fsda', '--preset', 'tiny-dp', '--config', train_config, '--out', str(trained)]) == 0

    checkpoint = json.dumps(str(trained / 'checkpoint'))
    sim_config = _toml(tmp_path, f'[[simulate.policies]]\nkind = "fsda"\ncheckpoint = {checkpoint}\n\n'
                                 '[[simulate.policies]]\nkind = "zero-order"\n')
    out = tmp_path / 'sim'
    assert main(['simulate', '--preset', 'tiny-dp', '--config', sim_config, '--out', str(out)]) == 0
    summary = pd.read_csv(out / 'summary.csv')
    assert summary['policy'].tolist() == ['fsda', 'zero-order']
    assert (out / 'trajectory_fsda_seed0.csv').exists()


def test_simulate_fsda_needs_checkpoint(tmp_path, capsys):
    config = _toml(tmp_path, '[[simulate.policies]]\nkind = "fsda"\n')
    assert main(['simulate', '--preset', 'tiny-dp', '--config', config, '--out', str(tmp_path / 'sim')]) == 2
    assert _error(capsys)['error'] == 'config'
