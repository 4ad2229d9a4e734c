import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from aces import gp as gpr
from conftest import random_dataset


def test_matern_reference_values():
    assert gpr.matern52(0.0) == pytest.approx(1.0)
    # (1 + sqrt5 + 5/3) exp(-sqrt5) for r = 1
    expected = (1 + np.sqrt(5) + 5 / 3) * np.exp(-np.sqrt(5))
    assert gpr.matern52(1.0) == pytest.approx(expected, rel=1e-12)
    # 190.03 * exp(-22.36)
    assert gpr.matern52(10.0) == pytest.approx(3.6957e-8, rel=1e-4)
    assert gpr.matern52(10.0) < 1e-6


def test_kernel_matrix_matches_pointwise(rng):
    spec = gpr.KernelSpec(2.0, [0.3, 0.7, 1.1], 0.0)
    A = rng.normal(size=(6, 3))
    B = rng.normal(size=(4, 3))
    K = gpr.kernel_matrix(A, B, spec)
    for i in range(6):
        for j in range(4):
            assert K[i, j] == pytest.approx(gpr.kernel_eval(A[i], B[j], spec), rel=1e-12)
    G = gpr.kernel_matrix(A, A, spec)
    np.testing.assert_allclose(G, gpr.kernel_matrix(A, A.copy(), spec), rtol=1e-12)
    np.testing.assert_allclose(np.diag(G), 2.0)


def test_kernel_spec_validation():
    with pytest.raises(ValueError):
        gpr.KernelSpec(1.0, [0.1, 0.0])
    with pytest.raises(ValueError):
        gpr.KernelSpec(0.0, [0.1])
    with pytest.raises(ValueError):
        gpr.KernelSpec(1.0, [0.1], -1e-3)


@pytest.mark.parametrize("seed", range(10))
def test_interpolates_training_points(seed):
    rng = np.random.default_rng(seed)
    X, y, spec = random_dataset(rng, 15, noise=1e-12)
    gp = gpr.fit(X, y, spec)
    mean, std = gpr.predict(gp, X)
    np.testing.assert_allclose(mean, y, atol=1e-6)
    assert np.all(std < 1e-3)


def test_reverts_to_prior_far_away(rng):
    X, y, spec = random_dataset(rng, 10)
    gp = gpr.fit(X, y, spec)
    mean, std = gpr.predict(gp, np.full(4, 50.0))
    assert mean == pytest.approx(np.mean(y), abs=1e-10)
    assert std == pytest.approx(1.0, abs=1e-10)


def test_prior_without_data():
    spec = gpr.KernelSpec(3.0, [1.0, 1.0])
    gp = gpr.fit(np.zeros((0, 2)), [], spec)
    mean, std = gpr.predict(gp, [0.2, 0.3])
    assert mean == 0.0
    assert std == pytest.approx(np.sqrt(3.0))


def test_posterior_samples_match_moments(rng):
    X, y, spec = random_dataset(rng, 8)
    gp = gpr.fit(X, y, spec)
    P = rng.uniform(size=(5, 4))
    F = gpr.sample_posterior(gp, P, 20000, rng)
    mean, cov = gpr.predict(gp, P, return_cov=True)
    np.testing.assert_allclose(F.mean(axis=0), mean, atol=4 * np.sqrt(cov.diagonal().max() / 20000))
    np.testing.assert_allclose(np.cov(F.T), cov, atol=0.03)


def test_sample_posterior_near_duplicate_points(rng):
    X, y, spec = random_dataset(rng, 8)
    gp = gpr.fit(X, y, spec)
    p = rng.uniform(size=4)
    P = np.vstack([p, p + 1e-12, p])
    F = gpr.sample_posterior(gp, P, 10, rng)
    assert F.shape == (10, 3)
    assert np.all(np.isfinite(F))


def test_jittered_cholesky_escalates_and_gives_up():
    K = np.ones((3, 3))
    L, jitter = gpr.jittered_cholesky(K, 1.0)
    assert jitter > 0
    np.testing.assert_allclose(L @ L.T, K + jitter * np.eye(3), atol=1e-12)
    with pytest.raises(gpr.CholeskyError):
        gpr.jittered_cholesky(-np.eye(2), 1.0)


def _fantasy_vs_refit(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(0, 31))
    X, y, spec = random_dataset(rng, n)
    gp = gpr.fit(X, y, spec)
    x_q = rng.uniform(size=4)
    y_q = float(rng.normal())
    fant = gpr.fantasize(gp, x_q, y_q)
    ref = gpr.fit(np.vstack([X, x_q]), np.append(y, y_q), spec)
    P = rng.uniform(size=(20, 4))
    return gpr.predict(fant, P), gpr.predict(ref, P)


@pytest.mark.parametrize("seed", range(10))
def test_fantasy_matches_refit(seed):
    (m1, s1), (m2, s2) = _fantasy_vs_refit(seed)
    np.testing.assert_allclose(m1, m2, atol=1e-8)
    np.testing.assert_allclose(s1, s2, atol=1e-8)


def test_fantasy_is_local(rng):
    X, y, spec = random_dataset(rng, 12)
    gp = gpr.fit(X, y, spec)
    x_q = rng.uniform(size=4)
    fant = gpr.fantasize(gp, x_q, 10.0)
    far = np.full(4, 40.0)
    # far away only the constant mean moves
    m0, s0 = gpr.predict(gp, far)
    m1, s1 = gpr.predict(fant, far)
    assert m1 - m0 == pytest.approx((10.0 - m0) / 13, rel=1e-9)
    assert s1 == pytest.approx(s0)
    # at the query the variance collapses to the noise level
    _, sq = gpr.predict(fant, x_q)
    assert sq < 1e-2
    assert gp.n == 12


def test_single_point_and_duplicates(rng):
    spec = gpr.KernelSpec(1.0, [0.5, 0.5], 1e-12)
    gp = gpr.fit([[0.1, 0.2]], [1.7], spec)
    assert gpr.predict(gp, [0.1, 0.2])[0] == pytest.approx(1.7, abs=1e-6)
    noisy = gpr.with_noise(spec, 1e-4)
    gp = gpr.fit([[0.1, 0.2], [0.1, 0.2], [0.5, 0.5]], [1.0, 1.1, 0.0], noisy)
    assert np.isfinite(gpr.predict(gp, [0.3, 0.3])[0])


def test_constant_data_reverts_to_constant(rng):
    spec = gpr.KernelSpec(1.0, [0.2, 0.2], 1e-6)
    gp = gpr.fit(rng.uniform(size=(5, 2)), np.full(5, -2.5), spec)
    assert gpr.predict(gp, [30.0, 30.0])[0] == pytest.approx(-2.5)
    assert gpr.predict(gp, [0.5, 0.5])[0] == pytest.approx(-2.5)


def test_training_variance_below_far_variance(rng):
    X, y, spec = random_dataset(rng, 10)
    gp = gpr.fit(X, y, spec)
    _, s_train = gpr.predict(gp, X)
    _, s_far = gpr.predict(gp, np.full(4, 30.0))
    assert np.all(s_train <= s_far)


def test_identical_points_give_identical_columns(rng):
    X, y, spec = random_dataset(rng, 8)
    gp = gpr.fit(X, y, spec)
    p = rng.uniform(size=4)
    F = gpr.sample_posterior(gp, np.vstack([p, p]), 1000, rng)
    assert np.max(np.abs(F[:, 0] - F[:, 1])) < 1e-4


def test_single_point_samples_match_predict(rng):
    X, y, spec = random_dataset(rng, 8)
    gp = gpr.fit(X, y, spec)
    p = rng.uniform(size=4)
    F = gpr.sample_posterior(gp, p, 10000, rng)[:, 0]
    mean, std = gpr.predict(gp, p)
    assert abs(F.mean() - mean) < 3 * std / 100
    assert abs(F.std() - std) < 3 * std / np.sqrt(2 * 10000)


def test_consistent_fantasy_keeps_mean(rng):
    X, y, spec = random_dataset(rng, 10)
    gp = gpr.fit(X, y, spec)
    x_q = rng.uniform(size=4)
    m, s = gpr.predict(gp, x_q)
    m1, s1 = gpr.predict(gpr.fantasize(gp, x_q, m), x_q)
    # the plug-in constant mean moves slightly, so equality is approximate
    assert m1 == pytest.approx(m, abs=1e-6)
    assert s1 < s


def test_gp_is_not_mutated(rng):
    X, y, spec = random_dataset(rng, 6)
    gp = gpr.fit(X, y, spec)
    before = gp.alpha.copy()
    gpr.fantasize(gp, rng.uniform(size=4), 3.0)
    np.testing.assert_array_equal(gp.alpha, before)
    assert gp.X.shape == (6, 4)


def test_lml_gradient_matches_finite_differences(rng):
    X, y, spec = random_dataset(rng, 12, noise=1e-3)
    theta = gpr._pack(spec)
    _, grad = gpr.neg_log_marginal_likelihood(theta, X, y)
    eps = 1e-6
    for k in range(theta.size):
        e = np.zeros_like(theta)
        e[k] = eps
        fp, _ = gpr.neg_log_marginal_likelihood(theta + e, X, y)
        fm, _ = gpr.neg_log_marginal_likelihood(theta - e, X, y)
        assert grad[k] == pytest.approx((fp - fm) / (2 * eps), rel=1e-4, abs=1e-6)


def test_hyperparameters_recover_generating_length_scales():
    rng = np.random.default_rng(3)
    true = gpr.KernelSpec(1.0, [0.2, 0.5], 1e-4)
    X = rng.uniform(size=(60, 2))
    K = gpr.kernel_matrix(X, X, true) + 1e-4 * np.eye(60)
    y = np.linalg.cholesky(K) @ rng.normal(size=60)
    res = gpr.optimize_hyperparameters(X, y, np.ones(2), rng)
    assert not res.failed
    ratio = res.spec.length_scales / true.length_scales
    assert np.all((ratio > 1 / 3) & (ratio < 3))
    default = gpr.default_spec(X, y, np.ones(2))
    assert gpr.log_marginal_likelihood(X, y, res.spec) >= gpr.log_marginal_likelihood(X, y, default)


def test_constant_returns_give_minimal_signal_variance(rng):
    X = rng.uniform(size=(12, 2))
    res = gpr.optimize_hyperparameters(X, np.zeros(12), np.ones(2), rng)
    lo, _ = gpr.hyperparameter_bounds(np.zeros(12), np.ones(2))
    assert res.spec.signal_variance == pytest.approx(np.exp(lo[0]), rel=1e-3)


def test_few_points_keep_default_spec(rng):
    X = rng.uniform(size=(4, 2))
    y = rng.normal(size=4)
    res = gpr.optimize_hyperparameters(X, y, np.ones(2), rng)
    default = gpr.default_spec(X, y, np.ones(2))
    assert res.spec.signal_variance == default.signal_variance
    np.testing.assert_array_equal(res.spec.length_scales, default.length_scales)


def test_hyperparameters_within_bounds(rng):
    X, y, _ = random_dataset(rng, 25)
    ranges = np.ones(4)
    res = gpr.optimize_hyperparameters(X, y, ranges, rng)
    ls = res.spec.length_scales
    assert np.all(ls >= 0.05 * ranges - 1e-12) and np.all(ls <= 5 * ranges + 1e-12)
    ratio = res.spec.noise_variance / res.spec.signal_variance
    assert 1e-8 * (1 - 1e-9) <= ratio <= 1e-1 * (1 + 1e-9)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2 ** 31 - 1), n=st.integers(1, 20))
def test_posterior_variance_bounded_by_prior(seed, n):
    rng = np.random.default_rng(seed)
    X, y, spec = random_dataset(rng, n)
    gp = gpr.fit(X, y, spec)
    _, std = gpr.predict(gp, rng.uniform(-1, 2, size=(10, 4)))
    assert np.all(std >= 0)
    assert np.all(std <= np.sqrt(spec.signal_variance) + 1e-12)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2 ** 31 - 1), n=st.integers(0, 25))
def test_fantasy_refit_property(seed, n):
    rng = np.random.default_rng(seed)
    X, y, spec = random_dataset(rng, n)
    gp = gpr.fit(X, y, spec)
    x_q, y_q = rng.uniform(size=4), float(rng.normal(scale=3))
    fant = gpr.fantasize(gp, x_q, y_q)
    ref = gpr.fit(np.vstack([X, x_q]), np.append(y, y_q), spec)
    P = rng.uniform(size=(5, 4))
    m1, s1 = gpr.predict(fant, P)
    m2, s2 = gpr.predict(ref, P)
    np.testing.assert_allclose(m1, m2, atol=1e-8)
    np.testing.assert_allclose(s1, s2, atol=1e-8)


def test_antithetic_samples_are_mirrored(rng):
    X, y, spec = random_dataset(rng, 6)
    gp = gpr.fit(X, y, spec)
    P = rng.uniform(size=(3, 4))
    F = gpr.sample_posterior(gp, P, 9, rng, antithetic=True)
    mean, _ = gpr.predict(gp, P)
    np.testing.assert_allclose(F[:4] + F[5:9], np.tile(2 * mean, (4, 1)), atol=1e-12)
