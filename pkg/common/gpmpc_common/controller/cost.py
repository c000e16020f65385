"""Expected tracking cost and chance-constraint tightening."""

from typing import Optional

import numpy as np
from scipy.special import ndtri

from ..dto.controller_config import ControllerConfig
from ..errors import ArgumentError, NumericalError

# tolerance on negative alpha' Sigma alpha from round-off
QUADRATIC_FORM_SLACK = 1e-12


def standard_normal_quantile(p: float) -> float:
    """Phi^-1(p) for p in (0, 1)."""
    if not 0.0 < p < 1.0:
        raise ArgumentError(f"probability must lie in (0, 1), got {p}")
    return float(ndtri(p))


def tighten_halfspace(alpha, b: float, sigma, p_x: float) -> float:
    """Bound on the state mean that keeps ``alpha' x <= b`` with probability ``p_x``.

    Raises:
        NumericalError: ``alpha' Sigma alpha`` is negative beyond round-off.
    """
    alpha = np.asarray(alpha, dtype=float)
    quad = float(alpha @ np.asarray(sigma, dtype=float) @ alpha)
    if quad < -QUADRATIC_FORM_SLACK:
        raise NumericalError(f"covariance is indefinite along the constraint normal ({quad:.3e})")
    return b - standard_normal_quantile(p_x) * np.sqrt(max(quad, 0.0))


def stage_cost(mu_traj, sigma_traj: Optional[np.ndarray], inputs, r_traj, cfg: ControllerConfig) -> float:
    """sum_{i=0}^{N} ||mu - r||_Q^2 + Tr(Q Sigma) + sum_{i=0}^{N-1} ||u - u_ref||_R^2.

    ``sigma_traj=None`` means deterministic predictions.
    """
    Q, R = cfg.weights()
    mu_traj = np.asarray(mu_traj, dtype=float)
    inputs = np.asarray(inputs, dtype=float).reshape(-1, cfg.n_u)
    r_traj = np.asarray(r_traj, dtype=float)
    if mu_traj.shape != r_traj.shape or mu_traj.shape[0] != inputs.shape[0] + 1:
        raise ArgumentError(
            f"inconsistent trajectory shapes: mu {mu_traj.shape}, r {r_traj.shape}, u {inputs.shape}"
        )
    err = mu_traj - r_traj
    cost = float(np.einsum("ij,jk,ik->", err, Q, err))
    if sigma_traj is not None:
        cost += float(np.einsum("jk,ikj->", Q, np.asarray(sigma_traj, dtype=float)))
    du = inputs - cfg.input_reference()
    return cost + float(np.einsum("ij,jk,ik->", du, R, du))
