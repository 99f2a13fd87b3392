#!/usr/bin/env python3
"""
Test script for strategy replay and the benchmarks
"""

import os
import sys

import numpy as np

sys.path.append(os.path.join(os.path.dirname(os.path.abspath(__file__)), "..", "scripts"))

from algebra import TensorFunctional
from backtest import (TRACE_COLUMNS, almgren_chriss_trace, compare, run_schedule, run_strategy,
                      savings_per_share, twap_strategy)
from errors import BenchmarkInfeasibleError, InvalidParameterError, LevelShortfallError
from expsig import estimate
from market import ModelParams, simulate
from problem import ImpactModel, ProblemSpec, Strategy, objective_value


def _check(label, condition):
    print(f"  {'✅' if condition else '❌'} {label}")
    return bool(condition)


def _spec(**kwargs):
    params = dict(q0=1.0, alpha=0.1, phi=0.01, impact=ImpactModel.temporary_plus_permanent(1e-3, 1e-4),
                  level_l=2, level_es=7)
    params.update(kwargs)
    return ProblemSpec(**params)


def _batch(n_paths=200, steps=100, seed=0):
    return simulate(ModelParams(model='bm', sigma=0.02, T=1.0, steps=steps), n_paths, seed=seed)


def test_no_trading():
    print("Testing a strategy that never trades...")
    spec = _spec(q0=2.0)
    batch = _batch(50, seed=41)
    report = run_strategy(Strategy(TensorFunctional.zero(), 2), batch, spec, label='idle')
    ok = _check("θ = 0 everywhere", not np.any(report.theta))
    ok &= _check("inventory stays at q0", np.all(report.inventory == 2.0))
    ok &= _check("wealth stays at 0", not np.any(report.wealth))
    expected = 2.0 * (batch.values[:, -1] - 0.1 * 2.0) - 0.01 * 4.0 * 1.0
    ok &= _check("C = q0(X_T - αq0) - φq0²T", np.allclose(report.costs, expected, rtol=0, atol=1e-12))
    return ok


def test_twap_liquidates():
    print("\nTesting TWAP replay...")
    spec = _spec()
    batch = _batch(30, steps=250, seed=42)
    twap = run_strategy(twap_strategy(spec), batch, spec, label='twap')
    ok = _check("|Q_T| <= q0/steps", np.max(np.abs(twap.inventory[:, -1])) <= spec.q0 / batch.steps)
    ok &= _check("constant speed q0/T", np.allclose(twap.theta, 1.0, rtol=0, atol=1e-14))
    schedule = run_schedule(np.full(batch.steps + 1, 1.0), batch, spec, label='twap_schedule')
    ok &= _check("signature replay and schedule replay agree",
                 np.allclose(twap.costs, schedule.costs, rtol=0, atol=1e-12))
    return ok


def test_replay_matches_objective():
    print("\nTesting replayed costs against the signature objective...")
    spec = _spec()
    batch = _batch(200, steps=1000, seed=43)
    ell = TensorFunctional({'': 1.0, '1': -0.2, '2': 0.5})
    report = run_strategy(Strategy(ell, 2), batch, spec)
    symbolic = objective_value(ell, spec, estimate(batch, 7))
    error = abs(report.mean_cost - symbolic) / abs(symbolic)
    ok = _check(f"mean cost within 1e-3 of <C, ES> on the same paths (relative error {error:.1e})", error <= 1e-3)
    threaded = run_strategy(Strategy(ell, 2), batch, spec, threads=3)
    ok &= _check("thread count does not change the costs", np.array_equal(report.costs, threaded.costs))
    try:
        run_strategy(Strategy(ell, 2), batch, spec, level=1)
        ok &= _check("prefix level below the impact degree rejected", False)
    except LevelShortfallError:
        ok &= _check("prefix level below the impact degree rejected", True)
    try:
        run_strategy(Strategy(ell, 2), batch, _spec(T=2.0))
        ok &= _check("horizon mismatch rejected", False)
    except InvalidParameterError:
        ok &= _check("horizon mismatch rejected", True)
    return ok


def test_almgren_chriss():
    print("\nTesting the Almgren-Chriss benchmark...")
    grid = np.linspace(0.0, 1.0, 101)
    spec = _spec(alpha=1.0, phi=0.01)
    trace = almgren_chriss_trace(spec, grid)
    ok = _check("Q_0 = q0", abs(trace.inventory[0] - spec.q0) < 1e-12)
    ok &= _check("inventory strictly decreasing for φ > 0", np.all(np.diff(trace.inventory) < 0))
    ok &= _check("speed strictly decreasing for φ > 0", np.all(np.diff(trace.theta) < 0))
    ok &= _check("speed is minus the slope of inventory",
                 np.allclose(-np.gradient(trace.inventory, grid)[1:-1], trace.theta[1:-1], rtol=1e-3))

    limit = almgren_chriss_trace(_spec(alpha=1e6, phi=1e-10), grid)
    ok &= _check("φ → 0, α → ∞ approaches TWAP",
                 np.max(np.abs(limit.theta - 1.0)) < 0.01 and np.max(np.abs(limit.inventory - (1.0 - grid))) < 0.01)

    linear = almgren_chriss_trace(_spec(alpha=0.5, phi=0.0, impact=ImpactModel.temporary_linear(1e-3)), grid)
    horizon = 1.0 + 1e-3 / 0.5
    ok &= _check("φ = 0 gives a straight line to Q_T = q0·(λ/α)/(T + λ/α)",
                 abs(linear.inventory[-1] - (1e-3 / 0.5) / horizon) < 1e-12 and np.ptp(linear.theta) == 0.0)

    for label, bad in (("α below k/2 + √(λφ)", _spec(alpha=0.0, phi=0.01)),
                       ("permanent impact only", _spec(impact=ImpactModel.permanent(1e-4))),
                       ("quadratic impact", _spec(impact=ImpactModel.polynomial_temporary([0.0, 1e-3, 1e-3])))):
        try:
            almgren_chriss_trace(bad, grid)
            ok &= _check(f"{label} rejected", False)
        except BenchmarkInfeasibleError:
            ok &= _check(f"{label} rejected", True)
    return ok


def test_savings_and_comparison():
    print("\nTesting savings per share and paired comparison...")
    ok = _check("1.0001 vs 1 saves 1 bp", abs(savings_per_share(1.0001, 1.0) - 1.0) < 1e-9)
    ok &= _check("0.9999 vs 1 loses 1 bp", abs(savings_per_share(0.9999, 1.0) + 1.0) < 1e-9)
    ok &= _check("equal wealth saves nothing", savings_per_share(1.0, 1.0) == 0.0)
    try:
        savings_per_share(1.0, 0.0)
        ok &= _check("zero benchmark wealth rejected", False)
    except InvalidParameterError:
        ok &= _check("zero benchmark wealth rejected", True)

    spec = _spec(alpha=1.0)
    batch = _batch(40, seed=44)
    signature = run_strategy(Strategy(TensorFunctional({'': 1.2, '1': -0.4}), 2), batch, spec)
    twap = run_strategy(twap_strategy(spec), batch, spec, label='twap')
    ac = almgren_chriss_trace(spec, batch.times)
    ac_report = run_schedule(ac.theta, batch, spec, label='almgren_chriss')
    signature.attach_benchmark('twap', twap)
    signature.attach_benchmark('almgren_chriss', ac_report)

    paired = compare(signature, twap)
    ok &= _check("paired mean difference is the difference of means",
                 abs(paired['mean_difference'] - (signature.mean_cost - twap.mean_cost)) < 1e-12)
    ok &= _check("self comparison is zero", compare(twap, twap)['mean_difference'] == 0.0)
    summary = signature.summary()
    ok &= _check("summary carries both benchmarks",
                 set(summary['benchmarks']) == {'twap', 'almgren_chriss'}
                 and set(summary['savings_per_share']) == {'twap', 'almgren_chriss'})
    try:
        compare(signature, run_strategy(twap_strategy(spec), _batch(10, seed=45), spec))
        ok &= _check("different path counts rejected", False)
    except InvalidParameterError:
        ok &= _check("different path counts rejected", True)

    traces = signature.traces_frame(max_paths=5)
    ok &= _check("trace frame columns", list(traces.columns) == TRACE_COLUMNS)
    ok &= _check("trace frame keeps 5 paths", len(traces) == 5 * (batch.steps + 1))
    costs = signature.costs_frame()
    ok &= _check("cost frame has a savings column per benchmark",
                 {'savings_bps_vs_twap', 'savings_bps_vs_almgren_chriss'} <= set(costs.columns) and len(costs) == 40)
    curve = signature.inventory_curve()
    ok &= _check("inventory curve starts at q0", curve['mean_Q'].iloc[0] == spec.q0)
    return ok


if __name__ == "__main__":
    print("Testing Backtests and Benchmarks")
    print("=" * 50)

    tests = [
        test_no_trading,
        test_twap_liquidates,
        test_replay_matches_objective,
        test_almgren_chriss,
        test_savings_and_comparison,
    ]

    passed = 0
    total = len(tests)

    for test in tests:
        try:
            if test():
                passed += 1
        except Exception as e:
            print(f"❌ Test {test.__name__} failed with exception: {e}")

    print("\n" + "=" * 50)
    print(f"Backtest Tests: {passed}/{total} passed")

    if passed == total:
        print("🎉 All backtest tests passed!")
    else:
        print(f"⚠️  {total - passed} tests failed")
    sys.exit(0 if passed == total else 1)
