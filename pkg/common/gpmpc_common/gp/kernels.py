"""Squared-exponential kernel and Gram matrices."""

import numpy as np
from scipy.spatial.distance import cdist

from ..errors import ArgumentError
from .data import Hyperparams


def se_kernel(h: Hyperparams, w, w2, include_noise: bool = False) -> float:
    """Evaluate kappa(w, w2) for one output.

    Args:
        h: Kernel hyperparameters.
        w: First input, length n_w.
        w2: Second input, length n_w.
        include_noise: Add sigma_v^2 when ``w`` and ``w2`` are bitwise equal.

    Returns:
        ``sigma^2 exp(-0.5 (w - w2)^T Lambda^-1 (w - w2))`` plus the noise term.
    """
    a = np.asarray(w, dtype=float).reshape(-1)
    b = np.asarray(w2, dtype=float).reshape(-1)
    if a.shape != b.shape or a.shape[0] != h.n_inputs:
        raise ArgumentError(f"kernel inputs must both have length {h.n_inputs}, got {a.shape} and {b.shape}")
    if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
        raise ArgumentError("kernel inputs must be finite")
    diff = a - b
    value = h.signal_variance * np.exp(-0.5 * np.sum(diff * diff / h.lengthscales))
    if include_noise and np.array_equal(a, b):
        value += h.noise_variance
    return float(value)


def scaled_sqdist(h: Hyperparams, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Pairwise ``(a_i - b_j)^T Lambda^-1 (a_i - b_j)``."""
    scale = np.sqrt(h.lengthscales)
    return cdist(a / scale, b / scale, metric="sqeuclidean")


def coincidence_mask(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Kronecker delta of the kernel: True where rows are bitwise identical."""
    return np.all(a[:, None, :] == b[None, :, :], axis=-1)


def gram_matrix(h: Hyperparams, a, b=None, include_noise: bool = False, jitter: float = 0.0) -> np.ndarray:
    """Kernel matrix between the rows of ``a`` and ``b`` (``b`` defaults to ``a``).

    ``include_noise`` and ``jitter`` are both added on coincident pairs only.
    """
    a = np.atleast_2d(np.asarray(a, dtype=float))
    b = a if b is None else np.atleast_2d(np.asarray(b, dtype=float))
    if a.shape[1] != h.n_inputs or b.shape[1] != h.n_inputs:
        raise ArgumentError(f"kernel inputs must have {h.n_inputs} columns")
    K = h.signal_variance * np.exp(-0.5 * scaled_sqdist(h, a, b))
    extra = (h.noise_variance if include_noise else 0.0) + jitter
    if extra:
        K = K + extra * coincidence_mask(a, b)
    return K
