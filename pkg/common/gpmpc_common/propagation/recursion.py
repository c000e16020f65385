"""Mean and covariance recursion of the GP-augmented model.

``x+ = f_d(w) + T_d B_z z`` with ``w = col(x, u)`` and deterministic ``u``.
"""

import logging
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .. import metrics
from ..config import PSD_TOLERANCE
from ..errors import ArgumentError
from ..gp.sparse_gp import SparseGpModel
from .belief import GaussianBelief, JointMoments, NominalModel
from .moments import mm_moments_batch, taylor_moments_batch

logger = logging.getLogger(__name__)

PROPAGATION_MODES = ("taylor", "mm")


def gp_moments_batch(
    gp: SparseGpModel, mu_w, sigma_w, mode: str, taylor_cross: str = "taylor", with_covariance: bool = True
):
    if mode == "mm":
        return mm_moments_batch(gp, mu_w, sigma_w, with_covariance)
    if mode == "taylor":
        mean, sigma_z, sigma_wz = taylor_moments_batch(gp, mu_w, sigma_w)
        if taylor_cross == "mm":
            _, _, sigma_wz = mm_moments_batch(gp, mu_w, sigma_w, with_covariance=False)
        elif taylor_cross != "taylor":
            raise ArgumentError(f"unknown cross-term mode {taylor_cross!r}")
        return mean, sigma_z, sigma_wz
    raise ArgumentError(f"unknown propagation mode {mode!r}, expected one of {PROPAGATION_MODES}")


def step_maps(
    nom: NominalModel,
    gp: Optional[SparseGpModel],
    mu_x,
    u,
    sigma_x,
    mode: str,
    scale: float,
    selector: Optional[np.ndarray],
    taylor_cross: str = "taylor",
    with_cov: bool = True,
) -> Tuple[np.ndarray, Optional[np.ndarray]]:
    """Unsymmetrized one-step maps (mean, covariance) on stacked arguments.

    Shapes: ``mu_x`` (..., n_x), ``u`` (..., n_u), ``sigma_x`` (..., n_x, n_x).
    Analytic in every argument; used directly for complex-step Jacobians.
    The covariance is None when ``with_cov`` is False.
    """
    mu_x, u, sigma_x = np.asarray(mu_x), np.asarray(u), np.asarray(sigma_x)
    batch = np.broadcast_shapes(mu_x.shape[:-1], u.shape[:-1], sigma_x.shape[:-2])
    mu_x = np.broadcast_to(mu_x, batch + mu_x.shape[-1:])
    u = np.broadcast_to(u, batch + u.shape[-1:])
    n_x, n_u = nom.n_x, nom.n_u
    w = np.concatenate([mu_x, u], axis=-1)
    f = nom.dynamics(w)
    jac = nom.jacobian(w)
    A = jac[..., :, :n_x]
    mean = f
    cov = A @ sigma_x @ np.swapaxes(A, -1, -2) if with_cov else None
    if gp is None:
        return mean, cov

    sigma_w = np.zeros(batch + (n_x + n_u, n_x + n_u), dtype=np.result_type(sigma_x, float))
    sigma_w[..., :n_x, :n_x] = sigma_x
    mu_z, sigma_z, sigma_wz = gp_moments_batch(gp, w, sigma_w, mode, taylor_cross, with_cov)
    lift = scale * selector  # (n_x, n_z)
    mean = mean + mu_z @ lift.T
    if not with_cov:
        return mean, None
    C = jac @ sigma_wz @ lift.T
    cov = cov + C + np.swapaxes(C, -1, -2) + lift @ sigma_z @ lift.T
    return mean, cov


def joint_moments(
    nom: NominalModel, gp: SparseGpModel, w: GaussianBelief, mode: str = "mm", taylor_cross: str = "taylor"
) -> JointMoments:
    """Moments of (f_d(w), z) entering the recursion, before lifting into the state."""
    jac = nom.jacobian(w.mean)
    mu_z, sigma_z, sigma_wz = gp_moments_batch(gp, w.mean, w.covariance, mode, taylor_cross)
    return JointMoments(
        mu_f=nom.dynamics(w.mean),
        mu_z_bar=mu_z,
        sigma_f=jac @ w.covariance @ jac.T,
        sigma_z_bar=sigma_z,
        sigma_fz_bar=sigma_wz,
    )


def _project_psd(cov: np.ndarray) -> np.ndarray:
    cov = 0.5 * (cov + cov.T)
    vals, vecs = np.linalg.eigh(cov)
    if vals.min() < -PSD_TOLERANCE:
        metrics.COVARIANCE_PSD_CLAMPS.inc()
        logger.warning(f"propagated covariance had eigenvalue {vals.min():.3e}; clipped at zero")
        cov = (vecs * np.maximum(vals, 0.0)) @ vecs.T
        cov = 0.5 * (cov + cov.T)
    return cov


def default_selector(nom: NominalModel, gp: Optional[SparseGpModel]) -> Optional[np.ndarray]:
    if gp is None:
        return None
    if gp.n_outputs != nom.n_x:
        raise ArgumentError(f"selector required: GP has {gp.n_outputs} outputs, state has {nom.n_x}")
    return np.eye(nom.n_x)


def propagate_step(
    nom: NominalModel,
    gp: Optional[SparseGpModel],
    w: GaussianBelief,
    mode: str = "mm",
    scale: float = 1.0,
    selector: Optional[np.ndarray] = None,
    taylor_cross: str = "taylor",
) -> GaussianBelief:
    """Next state belief from a joint belief ``w = col(x, u)`` with deterministic ``u``.

    Args:
        nom: Nominal discrete model.
        gp: Sparse GP residual model, or None for the nominal recursion.
        w: Joint belief; its input block must have zero covariance.
        mode: ``taylor`` or ``mm``.
        scale: Sampling period T_d multiplying the GP output.
        selector: B_z, mapping GP outputs into state rows.
        taylor_cross: Source of the cross term in Taylor mode.

    Returns:
        Symmetric PSD next-state belief.
    """
    if w.dim != nom.n_w:
        raise ArgumentError(f"joint belief dimension {w.dim} does not match n_x + n_u = {nom.n_w}")
    if np.any(w.covariance[nom.n_x:, :] != 0.0):
        raise ArgumentError("input block of the joint covariance must be zero")
    selector = selector if selector is not None else default_selector(nom, gp)
    if gp is not None and selector.shape != (nom.n_x, gp.n_outputs):
        raise ArgumentError(f"selector must be ({nom.n_x}, {gp.n_outputs}), got {selector.shape}")
    mu_x, u = w.mean[: nom.n_x], w.mean[nom.n_x:]
    mean, cov = step_maps(
        nom, gp, mu_x, u, w.covariance[: nom.n_x, : nom.n_x], mode, scale, selector, taylor_cross
    )
    return GaussianBelief(mean, _project_psd(cov))


def rollout(
    nom: NominalModel,
    gp: Optional[SparseGpModel],
    x0,
    inputs: Sequence,
    mode: str = "mm",
    scale: float = 1.0,
    selector: Optional[np.ndarray] = None,
    taylor_cross: str = "taylor",
) -> List[GaussianBelief]:
    """Belief trajectory of length ``len(inputs) + 1`` from a deterministic start."""
    inputs = np.asarray(inputs, dtype=float).reshape(-1, nom.n_u) if len(inputs) else np.zeros((0, nom.n_u))
    if not np.all(np.isfinite(inputs)):
        raise ArgumentError("inputs must be finite")
    beliefs = [GaussianBelief.deterministic(x0)]
    for u in inputs:
        beliefs.append(
            propagate_step(nom, gp, beliefs[-1].joint_with_input(u), mode, scale, selector, taylor_cross)
        )
    return beliefs
