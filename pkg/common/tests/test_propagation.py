import dataclasses

import numpy as np
import pytest

from gpmpc_common.errors import ArgumentError
from gpmpc_common.gp import Dataset, Hyperparams, build_sparse_model, sparse_predict, sparse_predict_batch
from gpmpc_common.propagation import (
    GaussianBelief,
    NominalModel,
    joint_moments,
    mm_gp_moments,
    mm_moments_batch,
    propagate_step,
    rollout,
    taylor_gp_moments,
)

from conftest import random_hyperparams


def random_model(rng, n_inputs, n_outputs=2, M=4, input_indices=None):
    hyps = [random_hyperparams(rng, n_inputs) for _ in range(n_outputs)]
    data = Dataset(rng.uniform(-1.5, 1.5, size=(25, n_inputs)), rng.normal(size=(25, n_outputs)))
    inducing = rng.uniform(-1.5, 1.5, size=(n_outputs, M, n_inputs))
    return build_sparse_model(data, hyps, inducing, input_indices=input_indices)


def random_covariance(rng, n, scale):
    A = rng.normal(size=(n, n))
    return scale * (A @ A.T / n + 0.1 * np.eye(n))


def prior_only(model):
    """Zero-mean model whose variance is sigma^2 + sigma_v^2 everywhere."""
    zeros = np.zeros_like(model.kuu_inv)
    return dataclasses.replace(
        model, dual_weights=np.zeros_like(model.dual_weights), variance_weight=zeros, kuu_inv=zeros, s_inv=zeros
    )


def entry_se(a, b):
    x = (a - a.mean()) * (b - b.mean())
    return x.std() / np.sqrt(a.size)


def test_deterministic_input_reduces_to_sparse_posterior(rng):
    model = random_model(rng, 3)
    mu = rng.uniform(-1.0, 1.0, size=3)
    mean, sigma_z, sigma_wz = mm_gp_moments(model, GaussianBelief.deterministic(mu))
    expected_mean, expected_var = sparse_predict(model, mu)
    np.testing.assert_allclose(mean, expected_mean, rtol=1e-12, atol=1e-14)
    np.testing.assert_allclose(np.diag(sigma_z), expected_var, rtol=0, atol=1e-10)
    assert np.all(sigma_wz == 0.0)


@pytest.mark.parametrize("seed,n_inputs", [(0, 2), (1, 3), (2, 4), (3, 3)])
def test_moment_matching_agrees_with_monte_carlo(seed, n_inputs):
    rng = np.random.default_rng(seed)
    model = random_model(rng, n_inputs)
    mu = rng.uniform(-0.5, 0.5, size=n_inputs)
    cov = random_covariance(rng, n_inputs, 0.3)
    mean, sigma_z, sigma_wz = mm_moments_batch(model, mu, cov)

    n = 1_000_000
    W = rng.multivariate_normal(mu, cov, size=n)
    m, v = sparse_predict_batch(model, W)
    Z = m + np.sqrt(v) * rng.standard_normal(size=m.shape)

    for i in range(model.n_outputs):
        se = Z[:, i].std() / np.sqrt(n)
        assert abs(Z[:, i].mean() - mean[i]) <= 4 * se
        for j in range(model.n_outputs):
            sample = np.mean((Z[:, i] - Z[:, i].mean()) * (Z[:, j] - Z[:, j].mean()))
            assert abs(sample - sigma_z[i, j]) <= 4 * entry_se(Z[:, i], Z[:, j])
        for d in range(n_inputs):
            sample = np.mean((W[:, d] - W[:, d].mean()) * (Z[:, i] - Z[:, i].mean()))
            assert abs(sample - sigma_wz[d, i]) <= 4 * entry_se(W[:, d], Z[:, i])


def test_taylor_with_deterministic_input(rng):
    model = random_model(rng, 3)
    mu = rng.uniform(-1.0, 1.0, size=3)
    mean, sigma_z, sigma_wz = taylor_gp_moments(model, GaussianBelief.deterministic(mu))
    expected_mean, expected_var = sparse_predict(model, mu)
    np.testing.assert_allclose(mean, expected_mean, rtol=1e-12)
    np.testing.assert_allclose(sigma_z, np.diag(expected_var), rtol=1e-12, atol=1e-15)
    assert np.all(sigma_wz == 0.0)


def test_taylor_gradient_matches_finite_differences(rng):
    model = random_model(rng, 3)
    step = 1e-6
    for _ in range(20):
        mu = rng.uniform(-1.0, 1.0, size=3)
        _, _, sigma_wz = taylor_gp_moments(model, GaussianBelief(mu, np.eye(3)))
        fd = np.empty((3, model.n_outputs))
        for d in range(3):
            e = np.zeros(3)
            e[d] = step
            fd[d] = (sparse_predict(model, mu + e)[0] - sparse_predict(model, mu - e)[0]) / (2 * step)
        np.testing.assert_allclose(sigma_wz, fd, rtol=1e-5, atol=1e-9)


def test_taylor_scalar_by_hand():
    data = Dataset(np.array([[-1.0], [0.0], [1.0]]), np.array([0.5, -0.2, 0.7]))
    model = build_sparse_model(data, [Hyperparams(1.0, 0.1, np.array([0.6]))], np.array([[-0.5], [0.5]]))
    mu, s = 0.3, 0.04
    _, sigma_z, _ = taylor_gp_moments(model, GaussianBelief([mu], [[s]]))
    step = 1e-6
    slope = (sparse_predict(model, [mu + step])[0][0] - sparse_predict(model, [mu - step])[0][0]) / (2 * step)
    expected = sparse_predict(model, [mu])[1][0] + s * slope ** 2
    assert sigma_z[0, 0] == pytest.approx(expected, rel=1e-8)


def test_mm_and_taylor_agree_for_tiny_uncertainty(rng):
    model = random_model(rng, 3)
    mu = rng.uniform(-1.0, 1.0, size=3)
    belief = GaussianBelief(mu, 1e-8 * np.eye(3))
    for a, b in zip(mm_gp_moments(model, belief), taylor_gp_moments(model, belief)):
        np.testing.assert_allclose(a, b, rtol=1e-4, atol=1e-13)


def test_taylor_cross_from_moment_matching(rng):
    model = random_model(rng, 2)
    belief = GaussianBelief(rng.normal(size=2), random_covariance(rng, 2, 0.2))
    _, _, cross_mm = mm_gp_moments(model, belief)
    _, _, cross = taylor_gp_moments(model, belief, cross="mm")
    np.testing.assert_array_equal(cross, cross_mm)
    with pytest.raises(ArgumentError):
        taylor_gp_moments(model, belief, cross="other")


def test_permuting_inducing_points(rng):
    model = random_model(rng, 3)
    perm = np.array([2, 0, 3, 1])
    permuted = dataclasses.replace(
        model,
        inducing_inputs=model.inducing_inputs[:, perm],
        dual_weights=model.dual_weights[:, perm],
        variance_weight=model.variance_weight[:, perm][:, :, perm],
    )
    belief = GaussianBelief(rng.normal(size=3) * 0.5, random_covariance(rng, 3, 0.2))
    for a, b in zip(mm_gp_moments(model, belief), mm_gp_moments(permuted, belief)):
        np.testing.assert_allclose(a, b, rtol=1e-12, atol=1e-12)


def test_gp_reads_selected_inputs(rng):
    model = random_model(rng, 2, input_indices=[1, 3])
    mu = rng.normal(size=4)
    cov = random_covariance(rng, 4, 0.2)
    mean, sigma_z, sigma_wz = mm_moments_batch(model, mu, cov)
    direct = dataclasses.replace(model, input_indices=None)
    sub = np.ix_([1, 3], [1, 3])
    mean_d, sigma_d, cross_d = mm_moments_batch(direct, mu[[1, 3]], cov[sub])
    np.testing.assert_allclose(mean, mean_d, rtol=1e-12)
    np.testing.assert_allclose(sigma_z, sigma_d, rtol=1e-12)
    np.testing.assert_allclose(sigma_wz[[1, 3]], cross_d, rtol=1e-10, atol=1e-14)


def test_complex_step_matches_finite_differences(rng):
    model = random_model(rng, 3)
    mu = rng.normal(size=3) * 0.5
    cov = random_covariance(rng, 3, 0.2)
    direction = rng.normal(size=3)
    h = 1e-30
    mean_c, sigma_c, _ = mm_moments_batch(model, mu + 1j * h * direction, cov)
    step = 1e-6
    plus = mm_moments_batch(model, mu + step * direction, cov)
    minus = mm_moments_batch(model, mu - step * direction, cov)
    np.testing.assert_allclose(mean_c.imag / h, (plus[0] - minus[0]) / (2 * step), rtol=1e-6, atol=1e-9)
    np.testing.assert_allclose(sigma_c.imag / h, (plus[1] - minus[1]) / (2 * step), rtol=1e-5, atol=1e-9)


def linear_toy(rng):
    A = np.array([[1.0, 0.1], [0.0, 1.0]])
    B = np.array([[0.0], [0.1]])
    return NominalModel.linear(A, B), A, B


def test_zero_gp_mean_adds_prior_noise(rng):
    nom, A, B = linear_toy(rng)
    model = random_model(rng, 2, n_outputs=1, input_indices=[0, 1])
    model = dataclasses.replace(model, dual_weights=np.zeros_like(model.dual_weights))
    selector = np.array([[0.0], [1.0]])
    x, u = np.array([0.2, -0.1]), np.array([0.5])
    belief = propagate_step(nom, model, GaussianBelief.deterministic(x).joint_with_input(u), "mm", 0.02, selector)
    np.testing.assert_allclose(belief.mean, A @ x + B @ u, rtol=1e-14)
    _, var = sparse_predict(model, x)
    np.testing.assert_allclose(belief.covariance, 0.02 ** 2 * var[0] * selector @ selector.T, rtol=1e-10, atol=1e-18)


def test_linear_model_without_gp():
    nom, A, _ = linear_toy(None)
    cov = np.array([[0.3, 0.1], [0.1, 0.2]])
    belief = propagate_step(nom, None, GaussianBelief(np.ones(2), cov).joint_with_input([0.0]))
    np.testing.assert_allclose(belief.covariance, A @ cov @ A.T, rtol=1e-14)


def test_one_step_against_monte_carlo(rng):
    nom, A, B = linear_toy(rng)
    model = random_model(rng, 2, n_outputs=1, input_indices=[0, 1])
    selector = np.array([[0.0], [1.0]])
    scale = 0.5
    mu, cov, u = np.array([0.1, -0.2]), random_covariance(rng, 2, 0.1), np.array([0.3])
    belief = propagate_step(nom, model, GaussianBelief(mu, cov).joint_with_input(u), "mm", scale, selector)

    n = 100_000
    X = rng.multivariate_normal(mu, cov, size=n)
    m, v = sparse_predict_batch(model, X)
    Z = m + np.sqrt(v) * rng.standard_normal(size=m.shape)
    X_next = X @ A.T + u @ B.T + scale * Z @ selector.T
    se = X_next.std(axis=0) / np.sqrt(n)
    assert np.all(np.abs(X_next.mean(axis=0) - belief.mean) <= 4 * se)
    sample_cov = np.cov(X_next.T)
    assert np.linalg.norm(sample_cov - belief.covariance) < 0.05 * np.linalg.norm(sample_cov)


def test_rollout_empty_horizon():
    nom, _, _ = linear_toy(None)
    beliefs = rollout(nom, None, [1.0, 2.0], [])
    assert len(beliefs) == 1
    assert np.all(beliefs[0].covariance == 0.0)


def test_rollout_matches_lyapunov_recursion(rng):
    A = np.array([[1.1, 0.1], [0.0, 1.05]])
    B = np.array([[0.0], [0.1]])
    nom = NominalModel.linear(A, B)
    model = prior_only(random_model(rng, 2, n_outputs=1, input_indices=[0, 1]))
    selector = np.array([[0.0], [1.0]])
    scale = 0.1
    noise = scale ** 2 * (model.signal_variances[0] + model.noise_variances[0]) * selector @ selector.T
    beliefs = rollout(nom, model, [0.5, 0.0], np.zeros((6, 1)), "mm", scale, selector)
    expected = np.zeros((2, 2))
    traces = []
    for belief in beliefs[1:]:
        expected = A @ expected @ A.T + noise
        np.testing.assert_allclose(belief.covariance, expected, rtol=1e-10)
        traces.append(np.trace(belief.covariance))
    assert np.all(np.diff(traces) >= 0.0)


def test_joint_moments_fields(rng):
    nom, A, B = linear_toy(rng)
    model = random_model(rng, 2, n_outputs=1, input_indices=[0, 1])
    w = GaussianBelief([0.1, 0.2], np.diag([0.01, 0.02])).joint_with_input([0.0])
    moments = joint_moments(nom, model, w)
    np.testing.assert_allclose(moments.mu_f, A @ [0.1, 0.2], rtol=1e-14)
    np.testing.assert_allclose(moments.sigma_f[:2, :2], A @ np.diag([0.01, 0.02]) @ A.T, rtol=1e-14)
    assert moments.sigma_fz_bar.shape == (3, 1)


def test_propagate_rejects_input_covariance(rng):
    nom, _, _ = linear_toy(rng)
    with pytest.raises(ArgumentError):
        propagate_step(nom, None, GaussianBelief(np.zeros(3), np.eye(3)))
