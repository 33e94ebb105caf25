#!/usr/bin/env python3
"""
Tests for the experiment runner: configuration handling, exit codes and exports
"""

import filecmp
import json
import os
import tempfile
from types import SimpleNamespace

import numpy as np
import pandas as pd
import pytest

import gf_cli
from config import DEFAULT_SEED, GRID, SEED_ENV_VAR
from examples import load_config, model_path
from growth_fragmentation_model import ConfigError, build_model


def write_config(config):
    directory = tempfile.mkdtemp()
    path = os.path.join(directory, 'experiment.json')
    with open(path, 'w') as f:
        json.dump(config, f)
    return path


def read_result(directory, filename):
    with open(os.path.join(directory, filename)) as f:
        return json.load(f)


def test_unknown_section_key_is_a_config_error():
    config = load_config('hump')
    config['solver'] = {'tolerance': 0.1}
    assert gf_cli.run('validate', write_config(config), verbose=False,
                      output_dir=tempfile.mkdtemp()) == gf_cli.EXIT_CONFIG
    config = load_config('hump')
    config['plots'] = {}
    assert gf_cli.run('validate', write_config(config), verbose=False,
                      output_dir=tempfile.mkdtemp()) == gf_cli.EXIT_CONFIG


def test_bad_overrides_are_config_errors():
    path = model_path('hump')
    for override in ('grid.bogus=3', 'run.n_paths'):
        assert gf_cli.run('validate', path, [override], verbose=False,
                          output_dir=tempfile.mkdtemp()) == gf_cli.EXIT_CONFIG


def test_overrides_parse_json_values():
    tree = gf_cli.load_experiment(model_path('hump'))
    gf_cli.apply_overrides(tree, ['run.times=[1, 3]', 'grid.nodes=128', 'name=renamed'])
    assert tree['run']['times'] == [1, 3]
    assert tree['grid']['nodes'] == 128
    assert tree['name'] == 'renamed'
    with pytest.raises(ConfigError):
        gf_cli.apply_overrides(tree, ['run.x.y=1'])


def test_validate_writes_stamped_tables():
    output = tempfile.mkdtemp()
    code = gf_cli.run('validate', model_path('hump'), output_dir=output, verbose=False)
    assert code == gf_cli.EXIT_OK
    with open(os.path.join(output, 'validation.csv')) as f:
        header = f.read()
    assert header.startswith('# Model validation')
    assert '# model_hash:' in header
    assert read_result(output, 'validation.json')['result']['valid']


def test_misconfigured_model_exits_with_failure():
    config = load_config('hump')
    config['kernel']['params']['fragment'] = {'form': 'expression', 'expression': '3 + 0*u'}
    path = write_config(config)
    assert gf_cli.run('validate', path, output_dir=tempfile.mkdtemp(),
                      verbose=False) == gf_cli.EXIT_FAILURE
    assert gf_cli.run('semigroup', path, output_dir=tempfile.mkdtemp(),
                      verbose=False) == gf_cli.EXIT_FAILURE


def test_seed_resolution_order():
    tree = gf_cli.load_experiment(model_path('hump'))
    saved = os.environ.pop(SEED_ENV_VAR, None)
    try:
        assert gf_cli.resolve_seed(None, tree) == DEFAULT_SEED
        os.environ[SEED_ENV_VAR] = '17'
        assert gf_cli.resolve_seed(None, tree) == 17
        tree['run']['seed'] = 5
        assert gf_cli.resolve_seed(None, tree) == 5
        assert gf_cli.resolve_seed(3, tree) == 3
        tree['run']['seed'] = None
        os.environ[SEED_ENV_VAR] = 'abc'
        with pytest.raises(ConfigError):
            gf_cli.resolve_seed(None, tree)
    finally:
        os.environ.pop(SEED_ENV_VAR, None)
        if saved is not None:
            os.environ[SEED_ENV_VAR] = saved


def test_semigroup_rerun_is_byte_identical():
    first, second = tempfile.mkdtemp(), tempfile.mkdtemp()
    for output in (first, second):
        gf_cli.run('semigroup', model_path('hump'), ['run.n_paths=200'], seed=11,
                   output_dir=output, workers=1, verbose=False)
    assert filecmp.cmp(os.path.join(first, 'semigroup.csv'),
                       os.path.join(second, 'semigroup.csv'), shallow=False)


def test_worker_count_does_not_change_results():
    serial, parallel = tempfile.mkdtemp(), tempfile.mkdtemp()
    overrides = ['run.n_paths=300', 'run.path_horizon=5.0']
    gf_cli.run('simulate', model_path('hump'), overrides, seed=3, output_dir=serial, workers=1,
               verbose=False)
    gf_cli.run('simulate', model_path('hump'), overrides, seed=3, output_dir=parallel,
               workers=2, verbose=False)
    assert filecmp.cmp(os.path.join(serial, 'paths.csv'), os.path.join(parallel, 'paths.csv'),
                       shallow=False)


def test_malthus_on_linear_calibration():
    output = tempfile.mkdtemp()
    overrides = ['solver.n_initial=2000', 'solver.n_max=8000', 'solver.width=0.02',
                 'run.n_paths=2000']
    code = gf_cli.run('malthus', model_path('linear_calibration'), overrides, seed=5,
                      output_dir=output, verbose=False)
    assert code in (gf_cli.EXIT_OK, gf_cli.EXIT_UNRELIABLE)
    result = read_result(output, 'malthus.json')['result']
    assert 0.44 <= result['lambda_hat'] <= 0.56
    assert result['condBW2'] in ('pass', 'fail', 'inconclusive')


def test_transient_range_reports_bracket_failure():
    output = tempfile.mkdtemp()
    overrides = ['solver.n_initial=1000', 'solver.n_max=1000']
    code = gf_cli.run('malthus', model_path('transient_counterexample'), overrides, seed=5,
                      output_dir=output, verbose=False)
    assert code == gf_cli.EXIT_FAILURE
    assert os.path.exists(os.path.join(output, 'malthus_bracket_scan.csv'))
    assert 'error' in read_result(output, 'malthus.json')['result']


def test_criteria_with_known_exponent():
    output = tempfile.mkdtemp()
    code = gf_cli.run('criteria', model_path('hump'), ['run.lambda_hat=0.3'], output_dir=output,
                      verbose=False)
    assert code == gf_cli.EXIT_OK
    verdict = read_result(output, 'criteria.json')['result']
    assert verdict['verdict'] == 'exponential convergence predicted'


def test_oracle_and_settings_restored():
    output = tempfile.mkdtemp()
    code = gf_cli.main(['oracle', model_path('hump'), '--set', 'grid.nodes=256',
                        '--output-dir', output, '--workers', '1', '--quiet'])
    assert code == gf_cli.EXIT_OK
    for name in ('oracle_sweep.csv', 'oracle_nested.csv', 'oracle_semigroup.csv'):
        assert os.path.exists(os.path.join(output, name))
    assert GRID['nodes'] == 512


def criteria_check(name, lambda_hat, status='pass', overrides=()):
    tree = gf_cli.apply_overrides(gf_cli.load_experiment(model_path(name)), overrides)
    exp = SimpleNamespace(spec=build_model(tree), say=lambda message: None)
    result = SimpleNamespace(lambda_hat=lambda_hat, status=status, half_width=lambda: 0.0)
    checks = []
    with gf_cli.applied_settings(tree):
        gf_cli._suite_criteria(exp, result, checks)
    return {check['check']: check for check in checks}['criteria_verdict']


def test_criteria_check_expects_the_bundled_verdicts():
    hump = criteria_check('hump', 0.3)
    assert hump['passed'] and hump['ccbis_pass'] is True
    assert hump['expected_verdict'] == 'exponential convergence predicted'
    linear = criteria_check('linear_calibration', 0.5)
    assert linear['passed'] and linear['ccbis_pass'] is False
    assert linear['verdict'] == 'criterion inapplicable for linear growth'


def test_criteria_check_fails_on_a_mismatch():
    assert not criteria_check('hump', 0.3, overrides=['experiment.expected_ccbis=false'])['passed']
    assert not criteria_check('hump', 0.3, status='inconclusive')['passed']
    wrong = criteria_check('linear_calibration', 0.5,
                           overrides=['experiment.expected_verdict="no prediction"'])
    assert not wrong['passed']


def test_simulate_writes_the_path_log():
    output = tempfile.mkdtemp()
    code = gf_cli.run('simulate', model_path('hump'), ['run.n_paths=50', 'run.path_horizon=5.0'],
                      seed=3, output_dir=output, workers=1, verbose=False)
    assert code == gf_cli.EXIT_OK
    path_log = os.path.join(output, 'path_0.csv')
    with open(path_log) as f:
        assert f.readline().startswith('# Path event log')
    events = pd.read_csv(path_log, comment='#')
    assert list(events.columns) == ['t', 'pre', 'post']
    assert np.all(events['post'] < events['pre'])


def test_profile_with_a_given_exponent():
    output = tempfile.mkdtemp()
    overrides = ['run.lambda_hat=0.5', 'run.n_paths=300', 'profile.grid_points=3',
                 'profile.x0=1.0', 'monte_carlo.pilot_paths=200']
    code = gf_cli.run('profile', model_path('linear_calibration'), overrides, seed=5,
                      output_dir=output, workers=1, verbose=False)
    assert code in (gf_cli.EXIT_OK, gf_cli.EXIT_UNRELIABLE)
    profile = read_result(output, 'profile.json')['result']
    assert profile['condBW'] == 'unchecked'
    assert profile['lambda_hat'] == 0.5


COMPARE_SMOKE = ['run.n_paths=400', 'solver.n_initial=1000', 'solver.n_max=2000',
                 'solver.width=0.05', 'monte_carlo.pilot_paths=200', 'grid.nodes=256',
                 'grid.max_refined_nodes=512', 'experiment.exactness_paths=20',
                 'experiment.semigroup_times=[1.0]', 'experiment.semigroup_points=[1.0]',
                 'experiment.malthus_windows=[[0.3, 4.0], [0.2, 6.0]]',
                 'experiment.fit_times=[2.0, 4.0, 6.0, 8.0]',
                 'experiment.supermartingale_times=[2.0]',
                 'experiment.prop_p1_pairs=[[1.0, 2.0]]', 'profile.grid_points=5']


@pytest.mark.slow
def test_compare_exit_code_is_the_conjunction_of_checks():
    output = tempfile.mkdtemp()
    code = gf_cli.run('compare', model_path('hump'), COMPARE_SMOKE, seed=9, output_dir=output,
                      workers=1, verbose=False)
    checks = read_result(output, 'compare.json')['result']
    names = {check['check'] for check in checks}
    assert {'weight_telescoping', 'kernel_conservation', 'grid_identity',
            'semigroup t=1 x=1'} <= names
    if 'malthus_status' in names:
        assert {'dual_malthus', 'profile_normalization', 'stabilization',
                'criteria_verdict', 'restricted_lower_a', 'restricted_upper_b'} <= names
    all_passed = all(check['passed'] for check in checks)
    assert code == (gf_cli.EXIT_OK if all_passed else gf_cli.EXIT_FAILURE)
    table = pd.read_csv(os.path.join(output, 'compare.csv'), comment='#')
    assert len(table) == len(checks)


def main():
    tests = [(name, func) for name, func in globals().items()
             if name.startswith('test_') and callable(func)]
    passed = 0
    for test_name, test_func in tests:
        try:
            test_func()
            passed += 1
            print(f"✅ {test_name}")
        except Exception as e:
            print(f"❌ {test_name}: {e}")
    print(f"\n📊 Test Results: {passed}/{len(tests)} tests passed")
    return passed == len(tests)


if __name__ == "__main__":
    main()
