"""Acceptance checks 1-7, each at its stated tolerance and runtime budget.

Every check records one ``PASS``/``FAIL`` line; the lines are printed in the
pytest terminal summary and when this file is run as a script.
"""
import math
import os
import time

import numpy as np
import pytest
from scipy import integrate, stats

from sdpmix import harness, sdp
from sdpmix.baselines import mle_normal_normal, ols_fit
from sdpmix.bvm import TrueErrorModel, fisher_info
from sdpmix.distributions import ERROR_TOKENS, RngStream, error_density
from sdpmix.geweke import geweke_test
from sdpmix.models import GenerativeConfig, PanelDataset, load_growth_data, simulate_dataset
from sdpmix.sampler import ChainConfig, PriorConfig

RESULTS = {}
WORKERS = os.cpu_count() or 1


def record(number, title, passed, detail, started):
    line = f"[{'PASS' if passed else 'FAIL'}] {number}. {title}: {detail} ({time.time() - started:.0f}s)"
    RESULTS[number] = line
    print(line)
    return passed


# ---------------------------------------------------------------------------


def test_1_joint_distribution():
    t0 = time.time()
    g = np.random.default_rng(5)
    design = PanelDataset([(np.zeros(3), g.normal(size=(3, 1))) for _ in range(4)])
    priors = PriorConfig(tau0_sq=1.0, alpha0=4.0, lambda0=3.0, alpha1=4.0, lambda1=3.0, sdp=sdp.SdpPrior(1.0, 1.0))
    res = geweke_test(design, priors, "B3", 10_000, RngStream(1))
    zs = ", ".join(f"{n}={z:+.2f}" for n, z in zip(res.names, res.z))
    ok = res.max_abs_z < 4 and time.time() - t0 < 600
    assert record(1, "Geweke test, B3 sampler", ok, f"max|z|={res.max_abs_z:.2f} < 4 [{zs}]", t0)


def _predictive_tv(alpha, past, n_draws, gen, n_bins=10):
    prior = sdp.SdpPrior(alpha, 1.0)
    law = sdp.predictive_weights(prior, past)
    atoms = [z for z, _ in law.atoms]
    expect = np.array([law.base_mass / n_bins] * n_bins + [m for _, m in law.atoms])
    edges = stats.norm.ppf(np.linspace(0, 1, n_bins + 1)[1:-1])
    post = sdp.sdp_posterior(prior, past)
    counts = np.zeros(expect.size)
    for _ in range(n_draws):
        x = sdp.stick_breaking_sample(gen, post).sample(gen, 1)[0]
        hit = [k for k, z in enumerate(atoms) if x == z]
        counts[n_bins + hit[0] if hit else np.searchsorted(edges, x)] += 1
    return 0.5 * np.abs(counts / n_draws - expect).sum()


def test_2_predictive_vs_stick_breaking():
    t0 = time.time()
    gen = RngStream(2).gen
    pasts = {0: [], 1: [1.3], 5: [1.3, -0.4, 2.2, -1.3, 0.7]}
    tvs = {(a, n): _predictive_tv(a, pasts[n], 100_000, gen) for a in (0.5, 1.0, 4.0) for n in (0, 1, 5)}
    worst = max(tvs, key=tvs.get)
    ok = tvs[worst] < 0.02 and time.time() - t0 < 120
    assert record(2, "Polya-urn predictive vs stick-breaking posterior", ok,
                  f"max TV={tvs[worst]:.4f} < 0.02 at alpha={worst[0]}, n={worst[1]}", t0)


def test_3_efficiency_table():
    t0 = time.time()
    cfg = harness.ExperimentConfig(error="E6", reps=100, n_groups=20, group_size=5, methods=("F1", "B1", "B3"),
                                   seed=2024)
    table = harness.cmd_simulate(cfg, workers=WORKERS, errors=["E2", "E8", "E6"])
    fails = sum(table.counts(e, m)[1] for e in ("E2", "E8", "E6") for m in cfg.methods)
    a = table.rel_eff("E2", "F1")
    b1, b3 = table.mse("E8", "B1"), table.mse("E8", "B3")
    c = table.rel_eff("E6", "F1")
    ok = a >= 1.5 and b3 < b1 and 1.1 <= c <= 2.0 and fails == 0 and time.time() - t0 < 45 * 60
    detail = (f"(a) E2 F1/B3={a:.2f} >= 1.5; (b) E8 mse B3={b3:.4f} < B1={b1:.4f}; "
              f"(c) E6 F1/B3={c:.2f} in [1.1, 2.0]; failed fits={fails}")
    print(table.format())
    assert record(3, "Efficiency table at N=100", ok, detail, t0)


def test_4_gaussian_limit():
    t0 = time.time()
    cfg = harness.BvmConfig(kind="location", error="E8", n=500, reps=20, seed=4, chain=ChainConfig(6000, 1000))
    assert cfg.chain.n_retained >= 2000
    reps = harness.cmd_bvm(cfg, workers=WORKERS)
    gap = np.median([r.mean_gap for r in reps])
    lo = np.median([r.min_eig for r in reps])
    hi = np.median([r.max_eig for r in reps])
    ks = np.median([r.max_ks for r in reps])
    ok = gap < 0.5 and 0.7 <= lo and hi <= 1.3 and ks < 0.08 and time.time() - t0 < 20 * 60
    assert record(4, "Posterior vs Gaussian limit, location model, E8, n=500", ok,
                  f"median gap={gap:.3f} < 0.5; median eigenvalues [{lo:.3f}, {hi:.3f}] in [0.7, 1.3]; "
                  f"median max KS={ks:.4f} < 0.08", t0)


def test_5_numerical_oracles():
    t0 = time.time()
    e8 = TrueErrorModel.from_error_spec(ERROR_TOKENS["E8"])
    gen = RngStream(5).gen
    s1 = s2 = 0.0
    n = 10_000_000
    for _ in range(10):
        v = e8.score(e8.sample(gen, n // 10)) ** 2
        s1 += v.sum()
        s2 += (v * v).sum()
    mc = s1 / n
    se = math.sqrt((s2 / n - mc * mc) / n)
    quad = fisher_info(e8)
    info_ok = abs(quad - mc) < 3 * se

    grid = np.linspace(-8, 8, 100)
    h = 1e-5
    fd_err = 0.0
    for token in ("E8", "E9"):
        m = TrueErrorModel.from_error_spec(ERROR_TOKENS[token])
        fd = -(m.log_density(grid + h) - m.log_density(grid - h)) / (2 * h)
        fd_err = max(fd_err, float(np.max(np.abs(m.score(grid) - fd))))
    score_ok = fd_err < 1e-6

    mass_err = 0.0
    for spec in ERROR_TOKENS.values():
        pts = [spec.lo, spec.hi] if spec.kind == "uniform" else None
        total = integrate.quad(lambda x: error_density(spec, x), -40, 40, points=pts, limit=400)[0]
        if spec.kind == "student_t":
            total += 2 * stats.t.sf(40, spec.df)
        mass_err = max(mass_err, abs(total - 1))
    mass_ok = mass_err < 1e-3
    assert record(5, "Numerical oracles", info_ok and score_ok and mass_ok,
                  f"I(E8) quadrature={quad:.6f} vs MC={mc:.6f} (|diff|={abs(quad - mc) / se:.2f} se < 3); "
                  f"score vs finite difference max err={fd_err:.1e} < 1e-6; "
                  f"max |mass-1|={mass_err:.1e} < 1e-3", t0)


def test_6_baselines():
    t0 = time.time()
    gen = np.random.default_rng(6)
    X = gen.normal(size=(100, 3))
    beta = np.array([-1.0, 0.5, 2.0])
    ols_err = float(np.max(np.abs(ols_fit(PanelDataset.from_arrays(X @ beta, X, np.repeat(np.arange(20), 5))).beta
                                  - beta)))
    worst_drop = 0.0
    for r in range(50):
        d = simulate_dataset(RngStream(6, r), GenerativeConfig(error="E3", random_effect_sd=0.3 * (r % 5)))
        trace = mle_normal_normal(d).loglik_trace
        worst_drop = max(worst_drop, float(-np.min(np.diff(trace))) if len(trace) > 1 else 0.0)
    n, m = 25, 4
    y = 3.0 + np.repeat(gen.normal(0, 1.0, n), m) + gen.standard_normal(n * m)
    Y = y.reshape(n, m)
    gm = Y.mean(axis=1)
    s2 = ((Y - gm[:, None]) ** 2).sum() / (n * (m - 1))
    sb2 = (m * ((gm - Y.mean()) ** 2).sum() / n - s2) / m
    fit = mle_normal_normal(PanelDataset.from_arrays(y, np.ones((n * m, 1)), np.repeat(np.arange(n), m)))
    ml_err = float(np.max(np.abs([fit.beta[0] - Y.mean(), fit.sigma2 - s2, fit.sigma_b2 - sb2])))
    ok = ols_err < 1e-10 and worst_drop <= 1e-10 and sb2 > 0 and ml_err < 1e-6
    assert record(6, "Baselines", ok,
                  f"OLS noiseless err={ols_err:.1e} < 1e-10; largest EM log-likelihood drop={worst_drop:.1e} "
                  f"over 50 datasets; balanced ML err={ml_err:.1e} < 1e-6", t0)


def test_7_growth_data():
    t0 = time.time()
    rows_in = load_growth_data().n_obs
    rows, _ = harness.cmd_fit("M5")
    get = {r["parameter"]: r["mean"] for r in rows}
    ok = rows_in == 108 and 0.5 <= get["beta_2"] <= 1.0 and 0.1 <= get["sigma_b2"] <= 0.6
    assert record(7, "Growth data, M5", ok,
                  f"{rows_in} rows; beta_2 mean={get['beta_2']:.3f} in [0.5, 1.0]; "
                  f"sigma_b2 mean={get['sigma_b2']:.3f} in [0.1, 0.6]", t0)


if __name__ == "__main__":
    import sys
    sys.exit(pytest.main([__file__, "-q"]))
