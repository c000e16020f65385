"""Exact GP regression: posterior caching, prediction, NLML and training.

Each output is an independent scalar GP sharing the input matrix W. The
negative log marginal likelihood omits the constant ``N/2 log(2 pi)``.
"""

import logging
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy.linalg import LinAlgError, cho_solve, cholesky, solve_triangular

from ..config import GP_JITTER_FACTOR, GP_JITTER_MAX, GP_JITTER_START, GP_LOG_BOUND
from ..dto.training import TrainingOptions
from ..errors import ArgumentError, NumericalError
from .data import Dataset, Hyperparams, check_hyperparams
from .kernels import coincidence_mask, gram_matrix
from .optimize import ConvergenceReport, log_bounds, map_outputs, minimize_best

logger = logging.getLogger(__name__)


def stable_cholesky(K: np.ndarray, label: str = "gram") -> Tuple[np.ndarray, float]:
    """Lower Cholesky factor of ``K``, escalating diagonal jitter on failure.

    Returns:
        The factor and the jitter that was added (0.0 when none was needed).

    Raises:
        NumericalError: The factorization still fails at the maximum jitter.
    """
    jitter = 0.0
    eye = np.eye(K.shape[0])
    while True:
        try:
            L = cholesky(K + jitter * eye, lower=True, check_finite=True)
            if jitter > 0.0:
                logger.warning(f"{label}: Cholesky needed jitter {jitter:.1e}")
            return L, jitter
        except (LinAlgError, ValueError):
            if jitter >= GP_JITTER_MAX:
                raise NumericalError(
                    f"{label}: Cholesky failed with jitter up to {jitter:.1e}", jitter=jitter
                )
            jitter = GP_JITTER_START if jitter == 0.0 else min(jitter * GP_JITTER_FACTOR, GP_JITTER_MAX)


@dataclass(frozen=True)
class FullGpModel:
    """Fitted exact GP; immutable and safe to share across threads."""

    hyperparams: Tuple[Hyperparams, ...]
    dataset: Dataset
    alpha: np.ndarray = field(repr=False)  # (n_z, N)
    chol_gram: np.ndarray = field(repr=False)  # (n_z, N, N) lower factors
    jitter: Tuple[float, ...] = ()

    @property
    def n_outputs(self) -> int:
        return len(self.hyperparams)

    @property
    def n_inputs(self) -> int:
        return self.dataset.n_inputs


def gp_fit(data: Dataset, hyperparams: Sequence[Hyperparams]) -> FullGpModel:
    """Cache the Gram Cholesky factor and alpha = K^-1 Z for every output.

    Raises:
        ArgumentError: Hyperparameter count or dimension mismatch.
        NumericalError: Gram matrix not factorizable even with maximum jitter.
    """
    hyperparams = check_hyperparams(hyperparams, data.n_inputs, data.n_outputs)
    alphas, factors, jitters = [], [], []
    for i, h in enumerate(hyperparams):
        K = gram_matrix(h, data.inputs, include_noise=True)
        L, jitter = stable_cholesky(K, label=f"full GP output {i}")
        alphas.append(cho_solve((L, True), data.output(i)))
        factors.append(L)
        jitters.append(jitter)
    return FullGpModel(
        hyperparams=tuple(hyperparams),
        dataset=data,
        alpha=np.array(alphas),
        chol_gram=np.array(factors),
        jitter=tuple(jitters),
    )


def gp_predict_batch(model: FullGpModel, queries) -> Tuple[np.ndarray, np.ndarray]:
    """Posterior mean and variance at every row of ``queries``.

    Returns:
        ``(mean, variance)``, each of shape (n_queries, n_z). The cross
        covariance uses the noise-free kernel; the self variance includes
        sigma_v^2, so variances are at least the noise variance.
    """
    W = np.atleast_2d(np.asarray(queries, dtype=float))
    if W.shape[1] != model.n_inputs:
        raise ArgumentError(f"query dimension {W.shape[1]} does not match model input dimension {model.n_inputs}")
    if not np.all(np.isfinite(W)):
        raise ArgumentError("query inputs must be finite")
    means = np.empty((W.shape[0], model.n_outputs))
    variances = np.empty_like(means)
    for i, h in enumerate(model.hyperparams):
        Kx = gram_matrix(h, model.dataset.inputs, W)  # (N, n_q)
        means[:, i] = Kx.T @ model.alpha[i]
        v = solve_triangular(model.chol_gram[i], Kx, lower=True)
        var = h.signal_variance + h.noise_variance - np.sum(v * v, axis=0)
        variances[:, i] = np.maximum(var, h.noise_variance)
    return means, variances


def gp_predict(model: FullGpModel, w_star) -> Tuple[np.ndarray, np.ndarray]:
    """Posterior mean and variance (each length n_z) at a single input."""
    w = np.asarray(w_star, dtype=float)
    if w.ndim != 1:
        raise ArgumentError(f"w_star must be a vector, got shape {w.shape}")
    mean, var = gp_predict_batch(model, w[None, :])
    return mean[0], var[0]


def _nlml_terms(W: np.ndarray, z: np.ndarray, h: Hyperparams, with_grad: bool):
    K_d = gram_matrix(h, W)
    mask = coincidence_mask(W, W)
    K = K_d + h.noise_variance * mask
    L, _ = stable_cholesky(K, label="nlml")
    alpha = cho_solve((L, True), z)
    value = 0.5 * z @ alpha + np.sum(np.log(np.diag(L)))
    if not with_grad:
        return value, None
    G = cho_solve((L, True), np.eye(W.shape[0])) - np.outer(alpha, alpha)
    grad = np.empty(2 + h.n_inputs)
    grad[0] = 0.5 * np.sum(G * K_d)
    grad[1] = 0.5 * h.noise_variance * np.sum(G * mask)
    for d in range(h.n_inputs):
        diff = W[:, None, d] - W[None, :, d]
        grad[2 + d] = 0.5 * np.sum(G * K_d * (0.5 * diff * diff / h.lengthscales[d]))
    return value, grad


def nlml(data: Dataset, h: Hyperparams, output_index: int) -> float:
    """Negative log marginal likelihood of one output, without the 2 pi constant."""
    if h.n_inputs != data.n_inputs:
        raise ArgumentError(f"lengthscales length {h.n_inputs} does not match input dimension {data.n_inputs}")
    value, _ = _nlml_terms(data.inputs, data.output(output_index), h, with_grad=False)
    return float(value)


def nlml_with_grad(data: Dataset, h: Hyperparams, output_index: int) -> Tuple[float, np.ndarray]:
    """NLML and its gradient w.r.t. ``h.to_log_vector()``."""
    if h.n_inputs != data.n_inputs:
        raise ArgumentError(f"lengthscales length {h.n_inputs} does not match input dimension {data.n_inputs}")
    value, grad = _nlml_terms(data.inputs, data.output(output_index), h, with_grad=True)
    return float(value), grad


@dataclass(frozen=True)
class FullTrainingResult:
    hyperparams: List[Hyperparams]
    reports: List[ConvergenceReport]


def train_full(
    data: Dataset,
    init: Sequence[Hyperparams],
    opts: Optional[TrainingOptions] = None,
) -> FullTrainingResult:
    """Minimize the NLML of every output in log-hyperparameter space with L-BFGS-B.

    The returned hyperparameters never have a larger NLML than ``init``.
    """
    opts = opts or TrainingOptions()
    init = check_hyperparams(init, data.n_inputs, data.n_outputs)

    def train_one(i: int) -> Tuple[Hyperparams, ConvergenceReport]:
        z = data.output(i)

        def objective(x):
            return _nlml_terms(data.inputs, z, Hyperparams.from_log_vector(x), with_grad=True)

        x0 = init[i].to_log_vector()
        best, report = minimize_best(
            objective, x0, log_bounds(x0, GP_LOG_BOUND), opts.max_iter, opts.gtol, label=f"full GP output {i}"
        )
        return Hyperparams.from_log_vector(best), report

    results = map_outputs(train_one, data.n_outputs, opts.workers)
    return FullTrainingResult([h for h, _ in results], [r for _, r in results])


def log_predictive_density(means: np.ndarray, variances: np.ndarray, targets: np.ndarray) -> float:
    """Average Gaussian log density of ``targets`` under per-entry predictive moments."""
    means, variances, targets = (np.asarray(a, dtype=float) for a in (means, variances, targets))
    if not (means.shape == variances.shape == targets.shape):
        raise ArgumentError("means, variances and targets must share a shape")
    resid = targets - means
    return float(np.mean(-0.5 * (np.log(2.0 * np.pi * variances) + resid * resid / variances)))
