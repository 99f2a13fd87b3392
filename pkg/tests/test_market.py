#!/usr/bin/env python3
"""
Test script for the midprice simulators and the window CSV loader
"""

import os
import sys
import tempfile
from pathlib import Path

import numpy as np
from scipy import stats

sys.path.append(os.path.join(os.path.dirname(os.path.abspath(__file__)), "..", "scripts"))

from errors import DataFormatError, InvalidParameterError
from market import ModelParams, PathBatch, load_windows_csv, save_windows_csv, simulate, split_batch


def _check(label, condition):
    print(f"  {'✅' if condition else '❌'} {label}")
    return bool(condition)


def test_brownian_moments():
    print("Testing Brownian midprice moments...")
    params = ModelParams(model='bm', sigma=0.02, T=1.0, steps=50)
    batch = simulate(params, 100_000, seed=1)
    x_T = batch.values[:, -1] - 1.0
    se = x_T.std(ddof=1) / np.sqrt(x_T.size)
    ok = _check(f"mean of X_T = {x_T.mean():.2e} within 4 SE of 0", abs(x_T.mean()) <= 4 * se)
    ok &= _check("variance of X_T within 5% of σ²T", abs(x_T.var(ddof=1) / (0.02 ** 2) - 1.0) <= 0.05)
    ok &= _check("every path starts at 1", np.all(batch.values[:, 0] == 1.0))
    ok &= _check("time coordinate is the grid", np.array_equal(batch.path(3).values[:, 0], batch.times))
    return ok


def test_ou_signal_mean():
    print("\nTesting the OU trading signal...")
    params = ModelParams(model='ou_signal', sigma=0.02, T=1.0, steps=100, I0=0.02, gamma=0.1, sigma0=0.02)
    batch = simulate(params, 10_000, seed=2)
    signal = batch.factors['signal']
    ok = True
    for k in (25, 50, 100):
        t = batch.times[k]
        sample = signal[:, k]
        se = sample.std(ddof=1) / np.sqrt(sample.size)
        ok &= _check(f"E[I_{t:.2f}] within 4 SE of I0·exp(-γt)", abs(sample.mean() - 0.02 * np.exp(-0.1 * t)) <= 4 * se)
    ok &= _check("signal starts at I0", np.all(signal[:, 0] == 0.02))
    return ok


def test_fbm_variance():
    print("\nTesting fractional Brownian increments...")
    H = 1.0 / 3.0
    params = ModelParams(model='fbm', sigma=0.02, T=1.0, steps=100, H=H)
    batch = simulate(params, 10_000, seed=3)
    x = batch.values - 1.0
    ok = True
    for s, t in ((0, 100), (50, 100), (0, 25)):
        span = batch.times[t] - batch.times[s]
        moment = np.mean((x[:, t] - x[:, s]) ** 2)
        expected = 0.02 ** 2 * span ** (2 * H)
        ok &= _check(f"E[(X_t - X_s)²] over |t-s| = {span:.2f} within 5%", abs(moment / expected - 1.0) <= 0.05)
    return ok


def test_fbm_half_matches_bm():
    print("\nTesting fBM with H = 1/2 against Brownian motion...")
    bm = simulate(ModelParams(model='bm', sigma=0.02, steps=64), 10_000, seed=4)
    fbm = simulate(ModelParams(model='fbm', sigma=0.02, steps=64, H=0.5), 10_000, seed=5)
    result = stats.ks_2samp(bm.values[:, -1], fbm.values[:, -1])
    return _check(f"two-sample KS test on X_T, p = {result.pvalue:.3f} > 0.01", result.pvalue > 0.01)


def test_order_flow_mean():
    print("\nTesting the order-flow rates...")
    params = ModelParams(model='order_flow', sigma=0.1, T=4.0, steps=800, k_flow=1e-4,
                         kappa=5.0, lambda0=5.0, eta0=0.8)
    batch = simulate(params, 4000, seed=6)
    late = batch.times >= 2.0
    ok = True
    for name in ('mu_plus', 'mu_minus'):
        mean = batch.factors[name][:, late].mean()
        ok &= _check(f"long-run mean of {name} = {mean:.4f} within 5% of λ0/(η0κ²) = 0.25",
                     abs(mean / 0.25 - 1.0) <= 0.05)
    ok &= _check("rates never go negative", np.all(batch.factors['mu_plus'] >= 0))
    mean_params = ModelParams(model='order_flow', mark_convention='mean', kappa=5.0, eta0=0.8)
    ok &= _check("mean reading of the marks has mean η0κ", mean_params.mark_scale == 0.8 * 5.0)
    return ok


def test_determinism_and_antithetic():
    print("\nTesting determinism across worker counts...")
    params = ModelParams(model='bm', sigma=0.02, steps=20)
    single = simulate(params, 2500, seed=42, threads=1)
    pooled = simulate(params, 2500, seed=42, threads=4)
    ok = _check("bit-identical with 1 and 4 threads", np.array_equal(single.values, pooled.values))
    prefix = simulate(params, 100, seed=42)
    ok &= _check("path i does not depend on n_paths", np.array_equal(prefix.values, single.values[:100]))
    ok &= _check("different seeds differ", not np.array_equal(simulate(params, 10, seed=43).values, prefix.values[:10]))

    anti = simulate(ModelParams(model='bm', sigma=0.02, steps=20, antithetic=True), 10, seed=42)
    x = anti.values - 1.0
    ok &= _check("antithetic pairs mirror each other", np.allclose(x[0::2], -x[1::2], atol=1e-15))
    try:
        ModelParams(model='ou_signal', antithetic=True)
        ok &= _check("antithetic rejected for ou_signal", False)
    except InvalidParameterError:
        ok &= _check("antithetic rejected for ou_signal", True)
    try:
        ModelParams(model='fbm', H=0.2)
        ok &= _check("H outside [0.25, 1) rejected", False)
    except InvalidParameterError:
        ok &= _check("H outside [0.25, 1) rejected", True)
    return ok


def test_csv_round_trip():
    print("\nTesting window CSV round trip...")
    batch = simulate(ModelParams(model='bm', sigma=0.02, T=1.0, steps=30), 5, seed=8)
    batch.window_ids = [f"day{i}" for i in range(5)]
    with tempfile.TemporaryDirectory() as tmp:
        file = Path(tmp) / 'windows.csv'
        save_windows_csv(batch, file, window_length=900.0)
        loaded = load_windows_csv(file, 900.0, normalize=True, horizon=1.0)
    ok = _check("window ids in file order", loaded.window_ids == batch.window_ids)
    ok &= _check("grid reproduced to 1e-12", np.allclose(loaded.times, batch.times, rtol=0, atol=1e-12))
    ok &= _check("prices reproduced to 1e-12", np.allclose(loaded.values, batch.values, rtol=0, atol=1e-12))
    train, test = split_batch(loaded, 0.6)
    ok &= _check("chronological split 3 / 2", train.window_ids == batch.window_ids[:3] and test.n_paths == 2)
    return ok


def test_csv_loading_rules():
    print("\nTesting window CSV loading rules...")
    ok = True
    with tempfile.TemporaryDirectory() as tmp:
        flat = Path(tmp) / 'flat.csv'
        flat.write_text("window_id,t,price\nA,0,101.5\nA,300,101.5\nA,600,101.5\nA,900,101.5\n"
                        "B,0,50\nB,300,51\nB,600,49\nB,900,50\n", encoding='utf-8')
        batch = load_windows_csv(flat, 900.0)
        ok &= _check("constant window normalises to 1", np.all(batch.values[0] == 1.0))
        ok &= _check("two windows in file order", batch.window_ids == ['A', 'B'] and batch.n_paths == 2)
        ok &= _check("times rescaled to [0, window_length]", batch.T == 900.0)
        raw = load_windows_csv(flat, 900.0, normalize=False)
        ok &= _check("--no-normalize keeps raw prices", raw.values[1, 1] == 51.0)

        cases = {
            'non-monotone timestamps': ("window_id,t,price\nA,0,1\nA,300,1\nA,200,1\n", 'A'),
            'malformed price': ("window_id,t,price\nA,0,1\nA,300,1\nB,0,1\nB,300,abc\n", 'B'),
            'single observation': ("window_id,t,price\nA,0,1\nA,300,1\nC,0,1\n", 'C'),
        }
        for label, (text, window_id) in cases.items():
            bad = Path(tmp) / 'bad.csv'
            bad.write_text(text, encoding='utf-8')
            try:
                load_windows_csv(bad, 900.0)
                ok &= _check(f"{label} rejected", False)
            except DataFormatError as e:
                ok &= _check(f"{label} rejected with window id {window_id}", e.window_id == window_id)

        header = Path(tmp) / 'header.csv'
        header.write_text("id,time,value\nA,0,1\n", encoding='utf-8')
        try:
            load_windows_csv(header, 900.0)
            ok &= _check("wrong header rejected", False)
        except DataFormatError:
            ok &= _check("wrong header rejected", True)

        ragged = Path(tmp) / 'ragged.csv'
        ragged.write_text("window_id,t,price\nA,0,1\nA,450,2\nA,900,3\nB,0,1\nB,100,2\nB,900,3\n", encoding='utf-8')
        resampled = load_windows_csv(ragged, 900.0, steps=3)
        ok &= _check("ragged grids resampled with the previous tick",
                     np.array_equal(resampled.values[0], [1.0, 1.0, 2.0, 3.0]) and
                     np.array_equal(resampled.values[1], [1.0, 2.0, 2.0, 3.0]))

        late = Path(tmp) / 'late.csv'
        late.write_text("window_id,t,price\nA,60,10\nA,500,11\nA,840,12\nB,60,20\nB,500,20\nB,840,19\n",
                        encoding='utf-8')
        shifted = load_windows_csv(late, 900.0, horizon=1.0)
        ok &= _check(f"late first tick still spans the horizon (T = {shifted.T})", abs(shifted.T - 1.0) < 1e-12)
        ok &= _check("grid starts at the first tick",
                     np.allclose(shifted.times * 900.0, [0.0, 440.0, 780.0, 900.0], rtol=0, atol=1e-9))
        ok &= _check("last price held to the window end",
                     np.allclose(shifted.values[0], [1.0, 1.1, 1.2, 1.2]) and shifted.values[1, -1] == 0.95)
    return ok


def test_batch_validation():
    print("\nTesting batch validation...")
    ok = True
    try:
        PathBatch(np.array([0.0, 1.0, 2.0]), np.ones((2, 4)))
        ok &= _check("mismatched grid rejected", False)
    except InvalidParameterError:
        ok &= _check("mismatched grid rejected", True)
    try:
        simulate(ModelParams(), 0, seed=0)
        ok &= _check("empty batch rejected", False)
    except InvalidParameterError:
        ok &= _check("empty batch rejected", True)
    try:
        ModelParams(sigma=0.0)
        ok &= _check("σ = 0 rejected", False)
    except InvalidParameterError:
        ok &= _check("σ = 0 rejected", True)
    return ok


if __name__ == "__main__":
    print("Testing Market Simulators and Data")
    print("=" * 50)

    tests = [
        test_brownian_moments,
        test_ou_signal_mean,
        test_fbm_variance,
        test_fbm_half_matches_bm,
        test_order_flow_mean,
        test_determinism_and_antithetic,
        test_csv_round_trip,
        test_csv_loading_rules,
        test_batch_validation,
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
    print(f"Market Tests: {passed}/{total} passed")

    if passed == total:
        print("🎉 All market tests passed!")
    else:
        print(f"⚠️  {total - passed} tests failed")
    sys.exit(0 if passed == total else 1)
