"""Gaussian beliefs and the nominal model interface used by the recursion."""

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from ..errors import ArgumentError


@dataclass(frozen=True)
class GaussianBelief:
    """Mean and covariance of a state or joint state-input variable.

    The covariance is stored symmetrized.
    """

    mean: np.ndarray
    covariance: np.ndarray = field(repr=False)

    def __post_init__(self):
        mean = np.array(self.mean, dtype=float).reshape(-1)
        cov = np.array(self.covariance, dtype=float)
        n = mean.shape[0]
        if cov.shape != (n, n):
            raise ArgumentError(f"covariance must be {n}x{n}, got {cov.shape}")
        if not (np.all(np.isfinite(mean)) and np.all(np.isfinite(cov))):
            raise ArgumentError("belief contains non-finite entries")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "covariance", 0.5 * (cov + cov.T))

    @classmethod
    def deterministic(cls, mean) -> "GaussianBelief":
        mean = np.asarray(mean, dtype=float).reshape(-1)
        return cls(mean, np.zeros((mean.size, mean.size)))

    @property
    def dim(self) -> int:
        return self.mean.shape[0]

    def joint_with_input(self, u) -> "GaussianBelief":
        """``w = col(x, u)`` with a deterministic input block."""
        u = np.asarray(u, dtype=float).reshape(-1)
        n_x, n_u = self.dim, u.size
        cov = np.zeros((n_x + n_u, n_x + n_u))
        cov[:n_x, :n_x] = self.covariance
        return GaussianBelief(np.concatenate([self.mean, u]), cov)


@dataclass(frozen=True)
class JointMoments:
    """First two moments of (f(w), GP output) for one propagation step."""

    mu_f: np.ndarray
    mu_z_bar: np.ndarray
    sigma_f: np.ndarray
    sigma_z_bar: np.ndarray
    sigma_fz_bar: np.ndarray


@dataclass(frozen=True)
class NominalModel:
    """Discrete nominal dynamics ``x+ = f_d(w)`` with ``w = col(x, u)``.

    ``dynamics`` maps (..., n_x + n_u) to (..., n_x) and ``jacobian`` maps it
    to (..., n_x, n_x + n_u). Both must accept complex arrays so that
    derivatives can be taken by complex step.
    """

    dynamics: Callable[[np.ndarray], np.ndarray]
    jacobian: Callable[[np.ndarray], np.ndarray]
    n_x: int
    n_u: int

    @property
    def n_w(self) -> int:
        return self.n_x + self.n_u

    @classmethod
    def linear(cls, A, B) -> "NominalModel":
        """``x+ = A x + B u``."""
        A = np.asarray(A, dtype=float)
        B = np.asarray(B, dtype=float)
        n_x, n_u = B.shape
        AB = np.hstack([A, B])

        def dynamics(w):
            return w @ AB.T

        def jacobian(w):
            return np.broadcast_to(AB, w.shape[:-1] + AB.shape)

        return cls(dynamics, jacobian, n_x, n_u)
