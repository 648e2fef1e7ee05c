import numpy as np
import pytest
from scipy import stats

from sdpmix.baselines import mle_normal_normal, ols_fit, random_intercept_loglik
from sdpmix.distributions import RngStream
from sdpmix.exceptions import SingularDesignError
from sdpmix.models import GenerativeConfig, PanelDataset, location_dataset, simulate_dataset


def test_ols_noiseless():
    gen = np.random.default_rng(0)
    X = gen.normal(size=(40, 3))
    beta = np.array([0.5, -2.0, 3.25])
    d = PanelDataset.from_arrays(X @ beta, X, np.repeat(np.arange(8), 5))
    np.testing.assert_allclose(ols_fit(d).beta, beta, atol=1e-10)


def test_ols_sample_mean():
    d = PanelDataset([(np.array([1.0, 2.0, 3.0]), np.ones((3, 1)))])
    fit = ols_fit(d)
    assert fit.beta[0] == pytest.approx(2.0) and fit.sigma2 == pytest.approx(1.0)


def test_ols_singular():
    X = np.column_stack([np.ones(6), np.ones(6)])
    with pytest.raises(SingularDesignError) as exc:
        ols_fit(PanelDataset([(np.arange(6.0), X)]))
    assert exc.value.rank == 1 and exc.value.p == 2


def test_ols_coverage():
    # coverage counted per coefficient
    hits = 0
    beta0 = np.array([-1.0, 1.0])
    for r in range(500):
        gen = RngStream(1, r).gen
        X = (gen.random((50, 2)) < 0.5).astype(float)
        while np.linalg.matrix_rank(X) < 2:
            X = (gen.random((50, 2)) < 0.5).astype(float)
        y = X @ beta0 + gen.standard_normal(50)
        fit = ols_fit(PanelDataset([(y, X)]))
        se = np.sqrt(np.diag(np.linalg.inv(X.T @ X)))
        hits += np.sum(np.abs(fit.beta - beta0) <= 3 * se)
    assert hits / 1000 >= 0.99


def test_loglik_matches_dense_gaussian():
    d = simulate_dataset(RngStream(2), GenerativeConfig(n_groups=4, group_size=[2, 3, 1, 4]))
    beta, s2, sb2 = np.array([0.3, -0.2]), 0.8, 0.5
    expect = 0.0
    for y, X in d.groups():
        m = y.size
        expect += stats.multivariate_normal.logpdf(y, X @ beta, s2 * np.eye(m) + sb2 * np.ones((m, m)))
    assert random_intercept_loglik(d, beta, s2, sb2) == pytest.approx(expect, rel=1e-12)


def _balanced(seed, n, m, sb=0.8):
    gen = np.random.default_rng(seed)
    y = 2.0 + np.repeat(gen.normal(0, sb, n), m) + gen.standard_normal(n * m)
    return PanelDataset.from_arrays(y, np.ones((n * m, 1)), np.repeat(np.arange(n), m))


def test_balanced_anova_ml():
    n, m = 15, 4
    for seed in range(5):
        d = _balanced(seed, n, m)
        Y = d.y.reshape(n, m)
        gm = Y.mean(axis=1)
        s2 = ((Y - gm[:, None]) ** 2).sum() / (n * (m - 1))
        sb2 = (m * ((gm - Y.mean()) ** 2).sum() / n - s2) / m
        if sb2 <= 0:
            continue
        fit = mle_normal_normal(d)
        assert fit.converged
        np.testing.assert_allclose([fit.beta[0], fit.sigma2, fit.sigma_b2], [Y.mean(), s2, sb2], atol=1e-6)


def test_em_monotone():
    for r in range(50):
        d = simulate_dataset(RngStream(3, r), GenerativeConfig(error="E3", random_effect_sd=0.5 * (r % 4)))
        fit = mle_normal_normal(d, check_monotone=True)
        assert np.all(np.diff(fit.loglik_trace) >= -1e-10)


def test_em_beats_ols_likelihood():
    for r in range(20):
        d = simulate_dataset(RngStream(4, r), GenerativeConfig(error="E8"))
        assert mle_normal_normal(d).loglik >= ols_fit(d).loglik - 1e-8


def test_boundary_random_effect():
    small = 0
    for r in range(200):
        d = simulate_dataset(RngStream(5, r), GenerativeConfig(random_effect_sd=0.0, n_groups=100, group_size=5))
        small += mle_normal_normal(d).sigma_b2 < 0.05
    assert small / 200 >= 0.9


def test_unidentified_single_observation_groups():
    fit = mle_normal_normal(location_dataset([1.0, 3.0, 2.5]))
    assert not fit.converged and "unidentified" in fit.message
    fit = mle_normal_normal(location_dataset([1.0]))
    assert not fit.converged


def test_nonconvergence_is_reported():
    d = simulate_dataset(RngStream(6), GenerativeConfig())
    fit = mle_normal_normal(d, tol=0.0, max_iter=3)
    assert not fit.converged and fit.iterations_used == 3 and "3 iterations" in fit.message
