import numpy as np
import pytest

from gpmpc_common.gp import Dataset, Hyperparams, build_sparse_model, gram_matrix
from gpmpc_common.propagation import NominalModel


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def sample_gp_dataset(rng, h: Hyperparams, n: int, low: float, high: float, n_outputs: int = 1) -> Dataset:
    """Draw inputs uniformly and targets from the GP prior with noise."""
    W = rng.uniform(low, high, size=(n, h.n_inputs))
    K = gram_matrix(h, W, include_noise=True)
    Z = rng.multivariate_normal(np.zeros(n), K, size=n_outputs).T
    return Dataset(W, Z)


def random_hyperparams(rng, n_inputs: int) -> Hyperparams:
    return Hyperparams(
        signal_variance=rng.uniform(0.5, 2.0),
        noise_variance=rng.uniform(0.05, 0.3),
        lengthscales=rng.uniform(0.5, 2.0, size=n_inputs),
    )


PENDULUM_DT = 0.1


def pendulum() -> NominalModel:
    def dynamics(w):
        x0, x1, u = w[..., 0], w[..., 1], w[..., 2]
        return np.stack([x0 + PENDULUM_DT * x1, x1 + PENDULUM_DT * (-np.sin(x0) + u)], axis=-1)

    def jacobian(w):
        x0 = w[..., 0]
        one, zero = np.ones_like(x0), np.zeros_like(x0)
        row0 = np.stack([one, PENDULUM_DT * one, zero], axis=-1)
        row1 = np.stack([-PENDULUM_DT * np.cos(x0), one, PENDULUM_DT * one], axis=-1)
        return np.stack([row0, row1], axis=-2)

    return NominalModel(dynamics, jacobian, n_x=2, n_u=1)


def pendulum_gp(rng, M=5):
    hyps = [random_hyperparams(rng, 2) for _ in range(2)]
    data = Dataset(rng.uniform(-1.0, 1.0, size=(20, 2)), 0.3 * rng.normal(size=(20, 2)))
    inducing = rng.uniform(-1.0, 1.0, size=(2, M, 2))
    return build_sparse_model(data, hyps, inducing, input_indices=(0, 2))
