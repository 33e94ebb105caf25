#!/usr/bin/env python3
"""
Tests for growth rates, kernels, validation and the deterministic flow
"""

import math
import warnings

import numpy as np
import pytest

from examples import BUNDLED_MODELS, load_config, load_model
from growth_fragmentation_model import (ConfigError, DomainError, FlowOverflowWarning,
                                        GeneralKernel, IrreducibilityWarning, ModelSpec,
                                        ModelValidationError, TabulatedGrowth, build_model,
                                        flow_map, load_model_config, no_jump_probability,
                                        require_valid, travel_time, validate_model)


def test_bundled_models_are_valid():
    for name in BUNDLED_MODELS:
        report = validate_model(load_model(name, validate=False))
        assert report.valid, name
        assert report.check('conservation').residual < 1e-9


def test_misconfigured_fragment_density_names_conservation():
    config = load_config('hump')
    config['kernel']['params']['fragment'] = {'form': 'expression', 'expression': '3 + 0*u'}
    spec = load_model_config(config)
    with pytest.raises(ModelValidationError) as info:
        require_valid(spec)
    assert 'conservation' in str(info.value)
    assert 'fragment_density' in str(info.value)
    assert not spec.is_validated


def test_unknown_keys_are_rejected():
    config = load_config('hump')
    config['growth']['slope'] = 2.0
    with pytest.raises(ConfigError):
        build_model(config)
    config = load_config('hump')
    config['domain']['x_mid'] = 1.0
    with pytest.raises(ConfigError):
        build_model(config)


def test_linear_travel_time_and_flow():
    spec = load_model('linear_calibration')
    assert travel_time(spec, 1.0, math.e) == pytest.approx(2.0, rel=1e-14)
    assert flow_map(spec, 1.0, 2.0) == pytest.approx(math.e, rel=1e-14)
    with pytest.raises(DomainError):
        travel_time(spec, 2.0, 1.0)


def test_rational_flow_roundtrip():
    spec = load_model('hump')
    for x in (0.05, 0.3, 1.0, 4.0):
        for t in (0.1, 1.0, 5.0):
            y = flow_map(spec, x, t)
            assert abs(travel_time(spec, x, y) - t) / t < 1e-10


def test_flow_map_clamps_at_domain_end():
    spec = load_model('linear_calibration')
    with pytest.warns(FlowOverflowWarning):
        assert flow_map(spec, 50.0, 10.0) == spec.x_max


def test_no_jump_probability_constant_rate():
    spec = load_model('linear_calibration')
    # exp(-K s(1, 2)) with s = ln 2 / 0.5
    assert no_jump_probability(spec, 1.0, 2.0) == pytest.approx(0.25, rel=1e-12)
    assert no_jump_probability(spec, 1.5, 1.5) == 1.0


def test_hump_sup_relative_rate_and_q_c():
    spec = load_model('hump')
    assert spec.growth.sup_relative_rate() == pytest.approx(0.5, abs=1e-8)
    assert spec.q_c == pytest.approx(1.5, abs=1e-8)
    assert spec.thinning_bound() == pytest.approx(1.001, rel=1e-12)


def test_rational_rescaled_to_supremum():
    config = load_config('hump')
    config['growth']['params'] = {'numerator': [0.0, 1.0], 'denominator': [1.0, 0.0, 1.0],
                                  'sup_relative_rate': 0.8}
    spec = build_model(config)
    assert spec.growth.sup_relative_rate() == pytest.approx(0.8, rel=1e-8)
    assert spec.growth.relative_rate(1.0) == pytest.approx(0.8, rel=1e-6)


def test_model_hash_tracks_parameters():
    first = load_model('hump', validate=False)
    second = load_model('hump', validate=False)
    assert first.model_hash == second.model_hash
    changed = load_config('hump')
    changed['kernel']['params']['total_rate']['value'] = 2.0
    assert build_model(changed).model_hash != first.model_hash


def test_general_kernel_matches_self_similar():
    config = load_config('hump')
    config['kernel'] = {'form': 'general', 'params': {'density': '2.0 / x + 0*y'}}
    spec = build_model(config)
    assert isinstance(spec.kernel, GeneralKernel)
    assert spec.kernel.total_rate(3.0) == pytest.approx(1.0, rel=1e-9)
    assert validate_model(spec).valid


def test_general_kernel_with_wrong_total_rate_is_invalid():
    # ∫ (y/x)(2/x) dy = 1, not the supplied K = 2
    config = load_config('hump')
    config['kernel'] = {'form': 'general',
                        'params': {'density': '2.0 / x + 0*y', 'total_rate': '2.0 + 0*x'}}
    report = validate_model(build_model(config))
    assert not report.valid
    assert not report.check('conservation').passed
    assert report.check('conservation').residual == pytest.approx(0.5, rel=1e-6)


def test_unbounded_total_rate_is_invalid():
    config = load_config('hump')
    config['kernel']['params']['total_rate'] = {'form': 'expression', 'expression': 'x'}
    spec = build_model(config)
    report = validate_model(spec)
    assert not report.valid
    assert not report.check('total_rate_bounded').passed
    assert spec.rate_bound_growth() > 1.0
    with pytest.raises(ModelValidationError) as info:
        require_valid(spec)
    assert 'total_rate_bounded' in str(info.value)


def test_bounded_increasing_total_rate_is_valid():
    config = load_config('hump')
    config['kernel']['params']['total_rate'] = {'form': 'expression',
                                                'expression': '2.0 * x / (1.0 + x)'}
    spec = build_model(config)
    assert validate_model(spec).check('total_rate_bounded').passed
    assert spec.thinning_bound() <= 2.0 * 1.001


def test_zero_kernel_is_advisory_only():
    config = load_config('linear_calibration')
    config['kernel']['params']['total_rate'] = 0.0
    spec = build_model(config)
    with pytest.warns(IrreducibilityWarning):
        report = validate_model(spec)
    assert report.valid
    assert not report.check('irreducibility').passed


def test_tabulated_growth_interpolates():
    x = np.geomspace(0.1, 10.0, 21)
    growth = TabulatedGrowth(x.tolist(), (0.5 * x).tolist())
    assert growth.evaluate(2.0) == pytest.approx(1.0, rel=1e-6)
    assert growth.covers(0.2, 5.0)
    assert not growth.covers(0.01, 5.0)


def test_bad_domain_rejected():
    spec = load_model('hump', validate=False)
    with pytest.raises(DomainError):
        ModelSpec(spec.growth, spec.kernel, 2.0, 1.0)


def main():
    tests = [(name, func) for name, func in globals().items()
             if name.startswith('test_') and callable(func)]
    passed = 0
    for test_name, test_func in tests:
        try:
            with warnings.catch_warnings():
                warnings.simplefilter('ignore')
                test_func()
            passed += 1
            print(f"✅ {test_name}")
        except Exception as e:
            print(f"❌ {test_name}: {e}")
    print(f"\n📊 Test Results: {passed}/{len(tests)} tests passed")
    return passed == len(tests)


if __name__ == "__main__":
    main()
