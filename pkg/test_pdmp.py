#!/usr/bin/env python3
"""
Tests for the instrumental particle: thinning, stopping rules, weights and streams
"""

import math
import warnings

import numpy as np
import pytest

from examples import load_config, load_model
from growth_fragmentation_model import build_model, validate_model
from pdmp_simulator import (ModelNotValidatedError, RngStream, StoppingSpec, StopReason,
                            hitting_functional, jump_count_poisson_test, simulate_batch,
                            simulate_path)

SEED = 4242


def frozen_linear():
    """Linear growth a=0.5 with no fragmentation at all"""
    config = load_config('linear_calibration')
    config['kernel']['params']['total_rate'] = 0.0
    spec = build_model(config)
    with warnings.catch_warnings():
        warnings.simplefilter('ignore')
        validate_model(spec)
    return spec


def test_stopping_spec_needs_a_clause():
    with pytest.raises(ValueError):
        StoppingSpec()
    with pytest.raises(ValueError):
        StoppingSpec(lower_barrier=2.0, upper_exit=1.0)


def test_unvalidated_model_refuses_to_simulate():
    spec = load_model('hump', validate=False)
    with pytest.raises(ModelNotValidatedError):
        simulate_path(spec, 1.0, StoppingSpec(horizon=1.0), RngStream(SEED))


def test_log_weight_telescopes():
    spec = load_model('hump')
    for index in range(20):
        path = simulate_path(spec, 1.0, StoppingSpec(horizon=10.0), RngStream(SEED, index))
        assert abs(path.log_weight - path.telescoping_log_weight()) < 1e-9


def test_linear_log_weight_is_deterministic():
    # c(x)/x = a makes ln ℰ_t = a t whatever the jumps
    spec = load_model('linear_calibration')
    for index in range(10):
        path = simulate_path(spec, 1.0, StoppingSpec(horizon=4.0), RngStream(SEED, index))
        assert path.log_weight == pytest.approx(2.0, abs=1e-9)


def test_same_stream_reproduces_path():
    spec = load_model('hump')
    stop = StoppingSpec(horizon=20.0)
    first = simulate_path(spec, 1.0, stop, RngStream(SEED, 7))
    second = simulate_path(spec, 1.0, stop, RngStream(SEED, 7))
    assert first.events == second.events
    assert first.final_position == second.final_position


def test_batch_independent_of_workers():
    spec = load_model('hump')
    stop = StoppingSpec(horizon=5.0)
    serial = simulate_batch(spec, 1.0, stop, SEED, 40, workers=1, chunk_size=10)
    parallel = simulate_batch(spec, 1.0, stop, SEED, 40, workers=2, chunk_size=10)
    assert serial.equals(parallel)
    assert serial['path_index'].tolist() == list(range(40))


def test_start_at_target_is_not_a_hit():
    spec = frozen_linear()
    path = simulate_path(spec, 2.0, StoppingSpec(hit_target=2.0, horizon=3.0), RngStream(SEED))
    assert path.stop_reason == StopReason.HORIZON
    assert path.final_time == 3.0


def test_hit_time_without_jumps():
    spec = frozen_linear()
    outcome = hitting_functional(spec, 1.0, 2.0, StoppingSpec(horizon=100.0), RngStream(SEED))
    assert outcome.hit
    assert outcome.H == pytest.approx(2.0 * math.log(2.0), rel=1e-12)
    assert outcome.log_weight_at_H == pytest.approx(math.log(2.0), rel=1e-12)


def test_zero_jump_frequency_matches_no_jump_probability():
    spec = load_model('linear_calibration')
    n = 4000
    summaries = simulate_batch(spec, 1.0, StoppingSpec(horizon=2.0 * math.log(2.0)), SEED, n)
    frequency = float(np.mean(summaries['n_jumps'] == 0))
    se = math.sqrt(0.25 * 0.75 / n)
    assert abs(frequency - 0.25) < 4 * se


def test_jump_counts_are_poisson_for_constant_rate():
    spec = load_model('linear_calibration')
    summaries = simulate_batch(spec, 1.0, StoppingSpec(horizon=5.0), SEED, 5000)
    outcome = jump_count_poisson_test(summaries['n_jumps'], 5.0, alpha=0.01)
    assert outcome['passed'], outcome


def test_lower_barrier_exit():
    spec = load_model('hump')
    stop = StoppingSpec(lower_barrier=0.5, horizon=200.0)
    exits = 0
    for index in range(30):
        path = simulate_path(spec, 1.0, stop, RngStream(SEED, index))
        if path.stop_reason == StopReason.EXITED_INTERVAL:
            assert path.final_position < 0.5
            exits += 1
    assert exits > 0


def test_upper_exit_stops_on_the_boundary():
    spec = frozen_linear()
    path = simulate_path(spec, 1.0, StoppingSpec(upper_exit=3.0), RngStream(SEED))
    assert path.stop_reason == StopReason.EXITED_INTERVAL
    assert path.final_position == 3.0
    assert path.final_time == pytest.approx(2.0 * math.log(3.0), rel=1e-12)


def test_split_weights_add_up():
    spec = load_model('hump')
    path = simulate_path(spec, 1.0, StoppingSpec(horizon=10.0), RngStream(SEED, 3))
    head, tail = path.split(4.0, spec)
    assert head.final_time == 4.0
    assert tail.start == head.final_position
    assert head.log_weight + tail.log_weight == pytest.approx(path.log_weight, abs=1e-12)
    assert head.n_jumps + tail.n_jumps == path.n_jumps


def test_residual_clock_resumes_on_same_substream():
    spec = load_model('linear_calibration')
    stream = RngStream(SEED, 11)
    whole = simulate_path(spec, 1.0, StoppingSpec(horizon=6.0), stream)

    generator = stream.generator()
    head = simulate_path(spec, 1.0, StoppingSpec(horizon=2.0), stream, generator=generator)
    rest = simulate_path(spec, head.final_position, StoppingSpec(horizon=4.0), stream,
                         generator=generator, first_step=head.residual_clock)
    assert head.n_jumps + rest.n_jumps == whole.n_jumps
    assert rest.final_position == pytest.approx(whole.final_position, rel=1e-10)


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
