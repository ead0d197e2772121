"""Acceptance criteria 1-12, one test each.

Every test prints a single ``PASS``/``FAIL criterion N`` line with the
measured quantities; the lines are repeated in the pytest terminal summary.
Tolerances and runtime budgets are the published ones and are not tuned.
"""

import subprocess
import sys
import time

import numpy as np
import pytest
from scipy import integrate

from conftest import record_criterion
from voldens import deconv, pipeline
from voldens.config import ExperimentConfig
from voldens.deconv import build_vh_table, default_bandwidth, estimate_univariate, no_noise
from voldens.kernels import wand_kernel
from voldens.models import log_ar1, log_square, simulate
from voldens.specfun import noise_density, phi_k

K = wand_kernel()
AR1 = dict(mean=0.0, coeff=0.6, innov_sd=0.8)


def wrap(a):
    return (np.asarray(a) + np.pi) % (2 * np.pi) - np.pi


def test_criterion_01_characteristic_function_oracle():
    start = time.perf_counter()
    t = np.linspace(-50, 50, 1001)
    mod_err = float(np.max(np.abs(np.abs(phi_k(t)) - np.cosh(np.pi * t) ** -0.5)))
    quad_err = 0.0
    for ti in np.linspace(-10, 10, 41):
        re, _ = integrate.quad(noise_density, -40, 10, weight="cos", wvar=ti, limit=400)
        im, _ = integrate.quad(noise_density, -40, 10, weight="sin", wvar=ti, limit=400)
        quad_err = max(quad_err, abs(complex(re, im) - phi_k(ti)))
    elapsed = time.perf_counter() - start
    ok = mod_err <= 1e-10 and quad_err <= 1e-8 and elapsed < 5
    line = record_criterion(1, ok, f"max modulus error {mod_err:.2e} (<=1e-10), "
                                   f"max quadrature error {quad_err:.2e} (<=1e-8), {elapsed:.2f}s (<5s)")
    assert ok, line


def test_criterion_02_phi_k_expansion():
    # the phase is checked against t*log(sqrt(1+4t^2) - t) exactly as stated
    start = time.perf_counter()
    ts = np.array([5.0, 10.0, 20.0, 50.0, 100.0])
    val = phi_k(ts)
    ratio = np.abs(val) * np.exp(np.pi * ts / 2) / np.sqrt(2)
    ratio_ok = bool(np.all(np.abs(ratio - 1) <= 1 / ts))
    stated_phase = ts * np.log(np.sqrt(1 + 4 * ts ** 2) - ts)
    phase_err = wrap(np.angle(val) - stated_phase)
    phase_ok = bool(np.all(np.abs(phase_err) <= 1 / ts))
    elapsed = time.perf_counter() - start
    ok = ratio_ok and phase_ok and elapsed < 1
    line = record_criterion(
        2, ok,
        f"modulus ratio-1 = {np.array2string(ratio - 1, precision=1)} (within 1/t: {ratio_ok}); "
        f"phase error vs t*log(sqrt(1+4t^2)-t) = {np.array2string(phase_err, precision=2)} rad "
        f"(within 1/t: {phase_ok}); {elapsed:.3f}s",
    )
    assert ok, line


def test_criterion_03_realness():
    start = time.perf_counter()
    rel = {}
    for h in (0.2, 0.3, 0.5):
        t = build_vh_table(K, h, -40.0, 40.0, 8001)
        rel[h] = t.max_imag_residual / float(np.max(np.abs(t.values)))
    elapsed = time.perf_counter() - start
    ok = max(rel.values()) <= 1e-9 and elapsed < 10
    line = record_criterion(3, ok, "relative imaginary residual "
                            + ", ".join(f"h={h}: {v:.1e}" for h, v in rel.items())
                            + f" (<=1e-9), {elapsed:.2f}s (<10s)")
    assert ok, line


def test_criterion_04_unit_mass():
    start = time.perf_counter()
    t = build_vh_table(K, 0.3, -40.0, 40.0, 8001)
    table_mass = float(np.sum(t.values) * t.delta)
    data = log_square(simulate(log_ar1(**AR1, seed=404), 5000).x).values
    h = default_bandwidth(data.size)
    grid = np.linspace(data.min() - 2.0, data.max() + 8.0, 2001)
    est_mass = estimate_univariate(data, K, h, grid).mass()
    elapsed = time.perf_counter() - start
    ok = abs(table_mass - 1) <= 0.01 and abs(est_mass - 1) <= 0.05 and elapsed < 10
    line = record_criterion(4, ok, f"table mass {table_mass:.5f} (1+-0.01), estimate mass "
                                   f"{est_mass:.5f} at n=5000 (1+-0.05), {elapsed:.2f}s (<10s)")
    assert ok, line


def test_criterion_05_l2_norm_expansion():
    # predicted value with the stated constant: sqrt(2 e^{pi/h} h^{1+2a} pi^{-1-2a} A^2 Gamma(2a+1) / 2pi)
    start = time.perf_counter()
    hs = [0.4, 0.3, 0.2, 0.15]
    ratios = np.array([deconv.parseval_l2_norm(K, h) / deconv.l2_leading_term(K, h, factor=2.0)
                       for h in hs])
    gaps = np.abs(ratios - 1)
    decreasing = bool(np.all(np.diff(gaps) < 0))
    final_ok = bool(gaps[-1] <= 0.15)
    elapsed = time.perf_counter() - start
    ok = decreasing and final_ok and elapsed < 30
    line = record_criterion(
        5, ok,
        f"ratio at h={hs} is {np.array2string(ratios, precision=3)}; |ratio-1| strictly "
        f"decreasing: {decreasing}; final |ratio-1| = {gaps[-1]:.3f} (<=0.15: {final_ok}); {elapsed:.1f}s",
    )
    assert ok, line


@pytest.mark.slow
def test_criterion_06_conditional_expectation():
    start = time.perf_counter()
    model = log_ar1(**AR1, seed=2024)
    single = pipeline.run_conditional_expectation_check(model, 500, 0.5, 4000)
    scaling = pipeline.run_condexp_scaling(model, 500, 0.5, (250, 1000, 4000))
    elapsed = time.perf_counter() - start
    ok = single["passed"] and scaling["passed"] and elapsed < 300
    line = record_criterion(
        6, ok,
        f"M=4000 max deviation {single['deviation']:.2e} = {single['deviation_over_se']:.2f} SE (<=3); "
        f"deviation*sqrt(M) = {np.array2string(np.array(scaling['scaled']), precision=4)} within x2 of "
        f"{scaling['centre']:.4f}: {scaling['passed']}; {elapsed:.0f}s (<300s)",
    )
    assert ok, line


@pytest.mark.slow
def test_criterion_07_bias_expansion():
    start = time.perf_counter()
    cfg = ExperimentConfig(model=log_ar1(**AR1, seed=77), kind="bias", paths=5000,
                           path_length=500, h_values=(0.6, 0.45, 0.3))
    rep = pipeline.run_bias_check(cfg)
    elapsed = time.perf_counter() - start
    mode = {r["h"]: r for r in rep["rows"] if r["point"] == "mode"}
    infl = {r["h"]: r for r in rep["rows"] if r["point"] == "inflection"}
    ok = rep["passed"] and elapsed < 300
    line = record_criterion(
        7, ok,
        "mode bias " + ", ".join(f"h={h}: {r['bias']:.4f}" for h, r in mode.items())
        + f"; mode ratio to 3f''h^2 at h=0.3: {mode[0.3]['ratio_to_leading']:.3f} (in [0.5,1.5]); "
        + "inflection bias/h^2 " + ", ".join(f"{r['bias_over_h2']:.3f}" for r in infl.values())
        + f"; checks {rep['checks']}; {elapsed:.0f}s (<300s)",
    )
    assert ok, line


@pytest.mark.slow
def test_criterion_08_variance_scaling():
    start = time.perf_counter()
    cfg = ExperimentConfig(model=log_ar1(**AR1, seed=800), sample_sizes=(500, 2000, 8000),
                           bandwidth=0.4, replications=100, grid=(-5.0, 5.0, 201))
    res = pipeline.run_mise_experiment(cfg)
    elapsed = time.perf_counter() - start
    n = np.array(cfg.sample_sizes)
    nv = np.array([res.aggregate(k)["integrated_variance"] for k in n]) * n
    c = float(np.exp(np.mean(np.log(nv))))
    within = bool(np.all((nv / c <= 1.5) & (nv / c >= 1 / 1.5)))
    ok = within and elapsed < 600
    line = record_criterion(8, ok, f"n*IV(n) = {np.array2string(nv, precision=3)} for n={n.tolist()}, "
                                   f"c = {c:.3f}, all within factor 1.5: {within}; {elapsed:.0f}s (<600s)")
    assert ok, line


@pytest.mark.slow
def test_criterion_09_mise_monotone():
    start = time.perf_counter()
    cfg = ExperimentConfig(model=log_ar1(**AR1, seed=900), sample_sizes=(250, 4000),
                           replications=100, grid=(-5.0, 5.0, 201))
    res = pipeline.run_mise_experiment(cfg)
    elapsed = time.perf_counter() - start
    a, b = res.aggregate(250), res.aggregate(4000)
    ok = b["mise"] < a["mise"] and elapsed < 600
    line = record_criterion(9, ok, f"MISE(250) = {a['mise']:.4f} +- {a['mise_se']:.4f} at h={a['h']:.3f}, "
                                   f"MISE(4000) = {b['mise']:.4f} +- {b['mise_se']:.4f} at h={b['h']:.3f}; "
                                   f"{elapsed:.0f}s (<600s)")
    assert ok, line


def test_criterion_10_no_noise_degeneracy():
    start = time.perf_counter()
    data = np.random.default_rng(10).normal(size=300)
    grid = np.linspace(-4, 4, 161)
    est = estimate_univariate(data, K, 0.4, grid, noise_cf=no_noise, method="direct")
    ref = deconv.ordinary_kde(data[:, None], K, 0.4, (grid,))
    err = float(np.max(np.abs(est.values - ref.values)))
    elapsed = time.perf_counter() - start
    ok = err <= 1e-10 and elapsed < 1
    line = record_criterion(10, ok, f"max pointwise difference {err:.1e} (<=1e-10), {elapsed:.3f}s (<1s)")
    assert ok, line


def test_criterion_11_product_structure():
    start = time.perf_counter()
    check = pipeline.check_product_structure(K)
    elapsed = time.perf_counter() - start
    d = check.detail
    ok = check.passed and elapsed < 120
    line = record_criterion(
        11, ok,
        f"joint vs product relative error {d['product_relative_error']:.1e} (<=1e-10); p=1 path equals "
        f"univariate: {d['p1_equals_univariate']}; diagonal/anti-diagonal mass {d['ratio']:.2f} (>=3); "
        f"{elapsed:.2f}s (<120s)",
    )
    assert ok, line


def test_criterion_12_cli_selftest():
    start = time.perf_counter()
    proc = subprocess.run([sys.executable, "-m", "voldens", "selftest"], capture_output=True,
                          text=True, timeout=300)
    elapsed = time.perf_counter() - start
    ok = proc.returncode == 0 and elapsed < 120
    line = record_criterion(12, ok, f"voldens selftest exit code {proc.returncode}, {elapsed:.1f}s (<120s)")
    assert ok, line + "\n" + proc.stdout + proc.stderr
