"""Moments of sparse GP outputs under a Gaussian input.

Every function works on stacks: means carry shape (..., n_w) and covariances
(..., n_w, n_w) in the coordinates of the full model input; the GP reads the
columns listed in ``SparseGpModel.input_indices``. Only analytic numpy
operations are used, so complex-step perturbations pass through.
"""

import logging
from typing import Tuple

import numpy as np

from .. import metrics
from ..config import VARIANCE_FLOOR
from ..errors import ArgumentError, NumericalError
from ..gp.sparse_gp import SparseGpModel
from .belief import GaussianBelief

logger = logging.getLogger(__name__)

Moments = Tuple[np.ndarray, np.ndarray, np.ndarray]


def _split(model: SparseGpModel, mu_w: np.ndarray, sigma_w: np.ndarray):
    n_w = mu_w.shape[-1]
    if sigma_w.shape[-2:] != (n_w, n_w):
        raise ArgumentError(f"input covariance must end in ({n_w}, {n_w}), got {sigma_w.shape}")
    S = model.selector_matrix(n_w)
    mu_g = mu_w @ S.T
    sigma_cross = sigma_w @ S.T  # cov(w, w_g), (..., n_w, n_g)
    sigma_g = S @ sigma_cross
    return mu_g, sigma_g, sigma_cross


def _clamp_variances(model: SparseGpModel, variances: np.ndarray) -> np.ndarray:
    noise = model.noise_variances
    negative = variances.real < VARIANCE_FLOOR
    if np.any(negative):
        if np.iscomplexobj(variances):
            logger.debug(f"clamped {int(negative.sum())} negative GP variances during differentiation")
        else:
            for i in np.nonzero(negative.reshape(-1, model.n_outputs).any(axis=0))[0]:
                metrics.VARIANCE_CLAMPS.labels(output=str(i)).inc()
            logger.warning(f"clamped {int(negative.sum())} negative GP output variances to the noise variance")
        variances = np.where(negative, np.broadcast_to(noise, variances.shape), variances)
    return variances


def _kernel_vectors(model: SparseGpModel, mu_g: np.ndarray) -> np.ndarray:
    """k_i(mu) for every output, shape (..., n_z, M); noise- and jitter-free."""
    diff = model.inducing_inputs - mu_g[..., None, None, :]  # (..., n_z, M, n_g)
    quad = np.sum(diff * diff / model.lengthscales[:, None, :], axis=-1)
    return model.signal_variances[:, None] * np.exp(-0.5 * quad)


def taylor_moments_batch(model: SparseGpModel, mu_w, sigma_w, with_cross: bool = True) -> Moments:
    """First-order moments around the input mean.

    Returns:
        ``(mu_z, sigma_z, sigma_wz)`` with shapes (..., n_z), (..., n_z, n_z)
        and (..., n_w, n_z).
    """
    mu_w, sigma_w = np.asarray(mu_w), np.asarray(sigma_w)
    mu_g, _, sigma_cross = _split(model, mu_w, sigma_w)
    k = _kernel_vectors(model, mu_g)  # (..., n_z, M)
    mean = np.sum(k * model.dual_weights, axis=-1)
    scaled = (model.inducing_inputs - mu_g[..., None, None, :]) / model.lengthscales[:, None, :]
    grad_g = np.sum((model.dual_weights * k)[..., None] * scaled, axis=-2)  # (..., n_z, n_g)
    reduction = np.einsum("...im,imn,...in->...i", k, model.variance_weight, k)
    var = _clamp_variances(model, model.signal_variances + model.noise_variances - reduction)

    # J Sigma_w J^T with J = grad_g S, i.e. grad_g (S Sigma_w S^T) grad_g^T
    sigma_wz = sigma_cross @ np.swapaxes(grad_g, -1, -2)  # (..., n_w, n_z)
    S = model.selector_matrix(mu_w.shape[-1])
    sigma_z = grad_g @ (S @ sigma_wz)
    sigma_z = 0.5 * (sigma_z + np.swapaxes(sigma_z, -1, -2))
    idx = np.arange(model.n_outputs)
    sigma_z[..., idx, idx] += var
    if not with_cross:
        sigma_wz = np.zeros_like(sigma_wz)
    return mean, sigma_z, sigma_wz


def _l_vectors(model: SparseGpModel, mu_g, sigma_g):
    """Expected kernel vectors l_i and the solves (Lambda_i + Sigma)^-1 (w_tau - mu)."""
    n_g = mu_g.shape[-1]
    eye = np.eye(n_g)
    l_all, solved_all = [], []
    for i in range(model.n_outputs):
        lam = model.lengthscales[i]
        B = sigma_g + np.diag(lam)
        nu = model.inducing_inputs[i] - mu_g[..., None, :]  # (..., M, n_g)
        try:
            solved = np.linalg.solve(B, np.swapaxes(nu, -1, -2))  # (..., n_g, M)
        except np.linalg.LinAlgError as e:
            raise NumericalError(f"Lambda + Sigma singular for output {i}") from e
        quad = np.sum(nu * np.swapaxes(solved, -1, -2), axis=-1)
        scale = np.linalg.det(eye + sigma_g / lam[:, None]) ** -0.5
        l_all.append(model.signal_variances[i] * scale[..., None] * np.exp(-0.5 * quad))
        solved_all.append(solved)
    return l_all, solved_all


def _pair_matrix(model: SparseGpModel, i: int, j: int, mu_g, sigma_g) -> np.ndarray:
    """E[k_i(w) k_j(w)^T] for w ~ N(mu_g, sigma_g), shape (..., M, M)."""
    lam_i, lam_j = model.lengthscales[i], model.lengthscales[j]
    Wi, Wj = model.inducing_inputs[i], model.inducing_inputs[j]
    n_g = mu_g.shape[-1]
    M = Wi.shape[0]
    P = 1.0 / lam_i + 1.0 / lam_j

    R = np.eye(n_g) + P[:, None] * sigma_g
    det_r = np.linalg.det(R)

    diff = Wi[:, None, :] - Wj[None, :, :]  # (M, M, n_g)
    separation = np.exp(-0.5 * np.sum(diff * diff / (lam_i + lam_j), axis=-1))

    q = (lam_j * Wi[:, None, :] + lam_i * Wj[None, :, :]) / (lam_i + lam_j)  # (M, M, n_g)
    d = q - mu_g[..., None, None, :]  # (..., M, M, n_g)
    F = sigma_g + np.diag(1.0 / P)
    flat = d.reshape(d.shape[:-3] + (M * M, n_g))
    try:
        solved = np.linalg.solve(F, np.swapaxes(flat, -1, -2))
    except np.linalg.LinAlgError as e:
        raise NumericalError(f"singular product covariance for outputs {i}, {j}") from e
    quad = np.sum(flat * np.swapaxes(solved, -1, -2), axis=-1).reshape(d.shape[:-1])
    factor = model.signal_variances[i] * model.signal_variances[j] * det_r ** -0.5
    return factor[..., None, None] * separation * np.exp(-0.5 * quad)


def mm_moments_batch(model: SparseGpModel, mu_w, sigma_w, with_covariance: bool = True) -> Moments:
    """Exact moments of the sparse GP output under a Gaussian input.

    Returns:
        ``(mu_z, sigma_z, sigma_wz)`` with shapes (..., n_z), (..., n_z, n_z)
        and (..., n_w, n_z). Negative variances are reset to sigma_v^2.
        ``sigma_z`` is None when ``with_covariance`` is False.

    Raises:
        NumericalError: ``Lambda_i + Sigma`` is singular.
    """
    mu_w, sigma_w = np.asarray(mu_w), np.asarray(sigma_w)
    mu_g, sigma_g, sigma_cross = _split(model, mu_w, sigma_w)
    n_z = model.n_outputs
    l_all, solved_all = _l_vectors(model, mu_g, sigma_g)
    alpha = model.dual_weights

    mean = np.stack([l_all[i] @ alpha[i] for i in range(n_z)], axis=-1)
    # cov(w_g, z_i) = Sigma_g (Lambda_i + Sigma_g)^-1 sum_tau alpha_tau l_tau (w_tau - mu)
    G = np.stack(
        [(solved_all[i] @ (alpha[i] * l_all[i])[..., :, None])[..., 0] for i in range(n_z)], axis=-1
    )  # (..., n_g, n_z)
    sigma_wz = sigma_cross @ G
    if not with_covariance:
        return mean, None, sigma_wz

    sigma_z = np.zeros(mean.shape + (n_z,), dtype=np.result_type(mean, sigma_g))
    for i in range(n_z):
        for j in range(i, n_z):
            Lij = _pair_matrix(model, i, j, mu_g, sigma_g)
            value = np.einsum("m,...mn,n->...", alpha[i], Lij, alpha[j]) - mean[..., i] * mean[..., j]
            if i == j:
                trace = np.einsum("mn,...nm->...", model.variance_weight[i], Lij)
                value = value + model.signal_variances[i] + model.noise_variances[i] - trace
            sigma_z[..., i, j] = value
            sigma_z[..., j, i] = value
    idx = np.arange(n_z)
    sigma_z[..., idx, idx] = _clamp_variances(model, sigma_z[..., idx, idx])
    return mean, sigma_z, sigma_wz


def _check_belief(model: SparseGpModel, w: GaussianBelief):
    if model.input_indices is not None and max(model.input_indices) >= w.dim:
        raise ArgumentError(f"GP input indices exceed belief dimension {w.dim}")


def taylor_gp_moments(model: SparseGpModel, w: GaussianBelief, cross: str = "taylor") -> Moments:
    """Taylor-mode moments (mu_z_bar, sigma_z_bar, sigma_fz_bar) of a single belief.

    ``cross='mm'`` takes the input-output cross term from moment matching.
    """
    _check_belief(model, w)
    mean, sigma_z, sigma_wz = taylor_moments_batch(model, w.mean, w.covariance)
    if cross == "mm":
        _, _, sigma_wz = mm_moments_batch(model, w.mean, w.covariance)
    elif cross != "taylor":
        raise ArgumentError(f"unknown cross-term mode {cross!r}")
    return mean, sigma_z, sigma_wz


def mm_gp_moments(model: SparseGpModel, w: GaussianBelief) -> Moments:
    """Moment-matched (mu_z_bar, sigma_z_bar, sigma_fz_bar) of a single belief."""
    _check_belief(model, w)
    return mm_moments_batch(model, w.mean, w.covariance)
