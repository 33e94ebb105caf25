#!/usr/bin/env python3
"""
Installation check for the Growth-Fragmentation Toolkit
Run this to verify dependencies and a quick end-to-end pass on the bundled models
"""

import sys
import traceback


def test_imports():
    """Test all required imports"""
    print("🧪 Testing imports...")

    try:
        import numpy as np
        import pandas as pd
        from scipy import integrate, linalg, optimize, stats
        print("✅ Core libraries imported successfully")
    except ImportError as e:
        print(f"❌ Core libraries import failed: {e}")
        return False

    try:
        import convergence_criteria
        import feynman_kac
        import gf_cli
        import growth_fragmentation_model
        import malthus_solver
        import pdmp_simulator
        import spectral_grid
        print("✅ Toolkit modules imported successfully")
    except ImportError as e:
        print(f"❌ Toolkit import failed: {e}")
        return False

    return True


def test_bundled_models():
    """Every bundled model passes validation"""
    print("\n🧪 Validating bundled models...")

    try:
        from examples import BUNDLED_MODELS, load_model
        from growth_fragmentation_model import validate_model

        for name in BUNDLED_MODELS:
            report = validate_model(load_model(name, validate=False))
            if not report.valid:
                print(f"❌ {name} failed: {[c.name for c in report.failed_checks()]}")
                return False
            print(f"✅ {name}")
        return True

    except Exception as e:
        print(f"❌ Model validation failed: {e}")
        traceback.print_exc()
        return False


def test_quick_estimates():
    """One path, one semigroup value and one grid operator on the hump model"""
    print("\n🧪 Testing a quick estimate...")

    try:
        from examples import load_model
        from feynman_kac import TestFunction, estimate_semigroup
        from pdmp_simulator import RngStream, StoppingSpec, simulate_path
        from spectral_grid import build_operator

        spec = load_model('hump')
        path = simulate_path(spec, 1.0, StoppingSpec(horizon=5.0), RngStream(1))
        if abs(path.log_weight - path.telescoping_log_weight()) > 1e-9:
            print("❌ Path weight does not telescope")
            return False
        print(f"✅ Simulated a path with {path.n_jumps} jumps")

        estimate = estimate_semigroup(spec, 1.0, 1.0, TestFunction.tent(1.0, 2.0), 500,
                                      RngStream(1))
        print(f"✅ T_1 f(1) ≈ {estimate.mean:.4f} ± {estimate.std_error:.4f}")

        op = build_operator(spec, {'nodes': 128})
        print(f"✅ Grid operator residual {op.identity_residual():.2e}")
        return op.identity_residual() < 1e-6

    except Exception as e:
        print(f"❌ Quick estimate failed: {e}")
        traceback.print_exc()
        return False


def main():
    """Run all checks"""
    print("🔬 Growth-Fragmentation Toolkit - Installation Check")
    print("=" * 60)

    tests = [
        ("Import Test", test_imports),
        ("Bundled Models", test_bundled_models),
        ("Quick Estimates", test_quick_estimates),
    ]

    passed = 0
    total = len(tests)

    for test_name, test_func in tests:
        print(f"\n{'='*20} {test_name} {'='*20}")
        try:
            if test_func():
                passed += 1
                print(f"✅ {test_name} PASSED")
            else:
                print(f"❌ {test_name} FAILED")
        except KeyboardInterrupt:
            print("\n⚠️ Test interrupted by user")
            break
        except Exception as e:
            print(f"❌ {test_name} FAILED with exception: {e}")

    print(f"\n{'='*60}")
    print(f"📊 Test Results: {passed}/{total} tests passed")

    if passed == total:
        print("🎉 All checks passed! The toolkit is ready to use.")
        print("\n🚀 Next steps:")
        print("   1. Run 'python examples.py' for the interactive menu")
        print("   2. Run 'python gf_cli.py validate models/hump.json'")
        print("   3. See USAGE.md for every subcommand")
    else:
        print("⚠️ Some checks failed. Check error messages above.")
        print("\n🔧 Troubleshooting:")
        print("   1. Ensure all dependencies are installed: pip install -r requirements.txt")
        print("   2. Run the test suite with pytest for details")

    print(f"\n{'='*60}")
    return passed == total


if __name__ == "__main__":
    sys.exit(0 if main() else 1)
