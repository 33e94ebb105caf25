"""
Bundled Models and Example Runs for the Growth-Fragmentation Toolkit
"""

import json
import os

from config import DEFAULT_SEED
from feynman_kac import TestFunction, estimate_semigroup
from growth_fragmentation_model import load_model_config, validate_model
from malthus_solver import solve_malthus
from pdmp_simulator import RngStream, StoppingSpec, simulate_path
from spectral_grid import build_operator, nested_sweep

MODELS_DIR = os.path.join(os.path.dirname(os.path.abspath(__file__)), 'models')
BUNDLED_MODELS = ('linear_calibration', 'hump', 'transient_counterexample')


def model_path(name):
    if name not in BUNDLED_MODELS:
        raise KeyError(f"unknown bundled model '{name}'; choose from {BUNDLED_MODELS}")
    return os.path.join(MODELS_DIR, f"{name}.json")


def load_config(name):
    with open(model_path(name)) as f:
        return json.load(f)


def load_model(name, validate=True, **domain):
    """ModelSpec of a bundled model, validated unless asked otherwise; domain overrides x_min/x_max"""
    config = load_config(name)
    config['domain'].update(domain)
    spec = load_model_config(config)
    if validate:
        validate_model(spec)
    return spec


def demo_path(name='hump', seed=DEFAULT_SEED):
    """One path from x=1 up to t=10 with its weight check"""
    spec = load_model(name)
    path = simulate_path(spec, 1.0, StoppingSpec(horizon=10.0), RngStream(seed))
    print(f"📊 {path.n_jumps} jumps, X_10 = {path.final_position:.4f}")
    print(f"   ln ℰ_10 = {path.log_weight:.6f} (telescoping {path.telescoping_log_weight():.6f})")
    return path


def demo_semigroup(name='hump', seed=DEFAULT_SEED, n=2000):
    """Monte Carlo T_t f(1) for a tent on [1, 2] at a few times"""
    spec = load_model(name)
    f = TestFunction.tent(1.0, 2.0)
    for t in (1.0, 2.0, 5.0):
        estimate = estimate_semigroup(spec, 1.0, t, f, n, RngStream(seed))
        print(f"   T_{t:g} f(1) = {estimate.mean:.4f} ± {estimate.std_error:.4f}")


def demo_malthus(name='linear_calibration', seed=DEFAULT_SEED):
    """Monte Carlo exponent next to the grid-oracle sweep"""
    spec = load_model(name)
    solver = {'n_initial': 2000, 'n_max': 8000, 'width': 0.02}
    result = solve_malthus(spec, 1.0, solver, RngStream(seed), verbose=True)
    sweep = nested_sweep(build_operator(spec), 0.3, 4.0)
    print(f"📊 λ̂ = {result.lambda_hat:.4f}, sup ρ_ab ≈ {sweep['rho_ab'].iloc[-1]:.4f}")
    return result, sweep


def main():
    """
    Menu of example runs
    """
    print("🔬 Growth-Fragmentation Toolkit Examples")
    print("=" * 50)

    while True:
        print("\nSelect an option:")
        print("1. 📈 Simulate one path (hump)")
        print("2. 📊 Semigroup estimates (hump)")
        print("3. 🎯 Malthus exponent (linear calibration)")
        print("4. 🎯 Malthus exponent (hump)")
        print("5. ❌ Exit")

        try:
            choice = input("\nEnter your choice (1-5): ").strip()
            if choice == "1":
                demo_path()
            elif choice == "2":
                demo_semigroup()
            elif choice == "3":
                demo_malthus('linear_calibration')
            elif choice == "4":
                demo_malthus('hump')
            elif choice == "5":
                print("👋 Done")
                break
            else:
                print("❌ Invalid choice. Please enter 1-5.")
        except KeyboardInterrupt:
            print("\n👋 Done")
            break
        except Exception as e:
            print(f"❌ Error: {e}")


if __name__ == "__main__":
    main()
