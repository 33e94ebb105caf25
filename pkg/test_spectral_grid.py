#!/usr/bin/env python3
"""
Tests for the grid oracle: operator assembly, semigroup stepping, killed eigenpairs
"""

import math
import warnings

import numpy as np
import pytest

from config import COMPARE, GRID
from examples import load_config, load_model
from feynman_kac import TestFunction, estimate_semigroup
from growth_fragmentation_model import build_model, validate_model
from pdmp_simulator import RngStream
from spectral_grid import (BufferConditionError, GridResolutionError, build_operator,
                           check_prop_P1, eigen_sweep, killed_principal_eigenpair,
                           nested_sweep, refined_semigroup, step_semigroup)

SEED = 99


def frozen_linear(**domain):
    config = load_config('linear_calibration')
    config['kernel']['params']['total_rate'] = 0.0
    config['domain'].update(domain)
    spec = build_model(config)
    with warnings.catch_warnings():
        warnings.simplefilter('ignore')
        validate_model(spec)
    return spec


def test_operator_maps_identity_to_growth():
    for name in ('linear_calibration', 'hump'):
        op = build_operator(load_model(name), {'nodes': 256})
        assert op.identity_residual() < 1e-6, name


def test_gain_is_nonnegative_with_binary_row_sums():
    op = build_operator(load_model('hump'))
    assert np.all(op.gain >= 0)
    # uniform binary splitting produces two fragments per event
    sums = op.gain_row_sums()[192:] / op.loss[192:]
    assert np.all(np.abs(sums - 2.0) < 0.02)


def test_no_fragmentation_leaves_transport_only():
    op = build_operator(frozen_linear(), {'nodes': 128})
    assert not np.any(op.gain)
    assert np.array_equal(op.matrix(), op.transport)


def test_semigroup_at_time_zero_is_f():
    op = build_operator(load_model('hump'), {'nodes': 128})
    f = TestFunction.bump(1.0, 2.0)
    assert np.array_equal(step_semigroup(op, f, 0.0), f(op.grid))


def test_semigroup_without_fragmentation_follows_the_flow():
    spec = frozen_linear(x_min=0.1, x_max=10.0)
    op = build_operator(spec, {'nodes': 1024})
    f = TestFunction.bump(0.5, 1.0)
    values = step_semigroup(op, f, 1.0)
    exact = f(op.grid * math.exp(0.5))
    assert np.max(np.abs(values - exact)) < 0.05 * np.max(exact)


def test_buffer_condition():
    op = build_operator(load_model('hump'), {'nodes': 128})
    with pytest.raises(BufferConditionError) as info:
        step_semigroup(op, TestFunction.bump(1.0, 2.0), 10.0)
    assert info.value.required_x_max == pytest.approx(2.0 * math.exp(5.0) * 1.5, rel=1e-6)
    with pytest.raises(BufferConditionError):
        step_semigroup(op, TestFunction.identity(), 1.0)


def test_semigroup_preserves_positivity():
    op = build_operator(load_model('hump'), {'nodes': 256})
    values = step_semigroup(op, TestFunction.bump(1.0, 2.0), 2.0)
    assert np.min(values) >= -1e-8 * np.max(values)


def test_killed_eigenpair_is_positive():
    op = build_operator(load_model('hump'), {'nodes': 256}).with_kill_window(0.3, 4.0)
    eigen = killed_principal_eigenpair(op)
    assert eigen.positive
    assert eigen.residual < 1e-8
    assert eigen.rho_ab < op.q_c
    assert eigen.h_ab(1.0) > 0
    assert list(eigen.to_frame().columns) == ['x', 'eigenfunction', 'h_ab']


def test_kill_window_must_fit_the_grid():
    op = build_operator(load_model('hump'), {'nodes': 128})
    with pytest.raises(ValueError):
        op.with_kill_window(0.001, 4.0)
    with pytest.raises(ValueError):
        killed_principal_eigenpair(op)


def test_exponent_grows_with_the_window():
    op = build_operator(load_model('hump'), {'nodes': 256})
    sweep = eigen_sweep(op, [(0.5, 2.0), (0.3, 4.0), (0.2, 6.0), (0.1, 10.0)], workers=2)
    assert list(sweep.columns) == ['a', 'b', 'rho_ab', 'residual', 'iterations']
    assert np.all(np.diff(sweep['rho_ab']) >= -1e-9)

    nested = nested_sweep(op, 0.5, 2.0)
    assert np.all(np.diff(nested['rho_ab']) >= -1e-9)
    assert nested['rho_ab'].iloc[-1] >= sweep['rho_ab'].iloc[0] - 1e-9


def test_grid_refinement():
    spec = load_model('linear_calibration', x_min=0.1, x_max=10.0)
    coarse = killed_principal_eigenpair(
        build_operator(spec, {'nodes': 1024}).with_kill_window(0.3, 4.0))
    fine = killed_principal_eigenpair(
        build_operator(spec, {'nodes': 2048}).with_kill_window(0.3, 4.0))
    assert abs(coarse.rho_ab - fine.rho_ab) < 2e-3 * (1.0 + abs(fine.rho_ab))


def test_narrow_kernel_needs_a_finer_grid():
    config = load_config('hump')
    config['kernel'] = {'form': 'general',
                        'params': {'density': 'where(y > 0.95*x, 40.0/x, 0.0)',
                                   'total_rate': '1.95 + 0*x'}}
    spec = build_model(config)
    with pytest.raises(GridResolutionError):
        build_operator(spec, {'nodes': 64})


def test_prop_P1_degenerate_ratio():
    spec = load_model('hump')
    eigen = killed_principal_eigenpair(
        build_operator(spec, {'nodes': 256}).with_kill_window(0.3, 4.0))
    outcome = check_prop_P1(spec, eigen, 1.0, 1.0, 10, RngStream(SEED))
    assert outcome['passed'] and outcome['ratio'] == 1.0
    with pytest.raises(ValueError):
        check_prop_P1(spec, eigen, 1.0, 5.0, 10, RngStream(SEED))


def test_prop_P1_hitting_identity():
    spec = load_model('hump', x_min=0.1, x_max=10.0)
    eigen = killed_principal_eigenpair(
        build_operator(spec, {'nodes': 1024}).with_kill_window(0.3, 4.0))
    outcome = check_prop_P1(spec, eigen, 1.0, 2.0, 20000, RngStream(SEED))
    assert outcome['passed'], outcome
    shifted = check_prop_P1(spec, eigen, 1.0, 2.0, 20000, RngStream(SEED), rho_shift=0.1)
    assert not shifted['passed']


def test_refined_semigroup_follows_the_flow():
    spec = frozen_linear(x_min=0.1, x_max=10.0)
    f = TestFunction.tent(1.0, 3.0)
    refined = refined_semigroup(spec, f, 1.0, [1.0], {'nodes': 256})
    assert refined.converged
    assert refined.nodes >= 512
    assert refined.values[0] == pytest.approx(f(math.exp(0.5)), abs=0.02)
    assert np.all(refined.gap <= GRID['refine_budget'] * refined.scale)
    frame = refined.to_frame(1.0)
    assert list(frame.columns) == ['x', 't', 'value', 'fine', 'gap', 'nodes']


def test_refinement_stops_at_the_node_cap():
    spec = load_model('hump')
    f = TestFunction.tent(1.0, 2.0)
    refined = refined_semigroup(spec, f, 1.0, [0.5, 1.0], {'nodes': 128}, budget=1e-12,
                                max_nodes=256)
    assert refined.nodes == 256
    assert not refined.converged
    # Richardson value 2 F_2n - F_n sits one gap away from F_2n
    np.testing.assert_allclose(np.abs(refined.values - refined.fine), refined.gap, rtol=1e-12)


@pytest.mark.slow
def test_monte_carlo_agrees_with_the_refined_grid():
    spec = load_model('hump')
    f = TestFunction.tent(1.0, 2.0)
    points = [0.5, 1.0, 2.0]
    refined = refined_semigroup(spec, f, 1.0, points, {'nodes': 512},
                                budget=COMPARE['semigroup_grid_budget'])
    for i, x in enumerate(points):
        mc = estimate_semigroup(spec, x, 1.0, f, 20000, RngStream(SEED, i * 10 ** 6))
        budget = 3.0 * mc.std_error + COMPARE['semigroup_grid_budget'] * refined.scale
        assert abs(mc.mean - refined.values[i]) <= budget, (x, mc.mean, refined.values[i])


@pytest.mark.slow
def test_prop_P1_hitting_identity_downward():
    spec = load_model('hump', x_min=0.1, x_max=10.0)
    eigen = killed_principal_eigenpair(
        build_operator(spec, {'nodes': 1024}).with_kill_window(0.3, 4.0))
    outcome = check_prop_P1(spec, eigen, 2.0, 1.0, 20000, RngStream(SEED, 7))
    assert outcome['passed'], outcome
    assert outcome['ratio'] == pytest.approx(eigen.h_ab(2.0) / eigen.h_ab(1.0))


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
