"""Scheduling variables rho = col(mu_x, u, vec(Sigma_x)).

``vec`` stacks columns (column-major), matching the Kronecker identities used
by the covariance blocks.
"""

from dataclasses import dataclass, field
from typing import List, Sequence

import numpy as np

from ..errors import ArgumentError
from ..propagation.belief import GaussianBelief

SYMMETRY_TOLERANCE = 1e-10


def vec(matrix: np.ndarray) -> np.ndarray:
    """Column-major vectorization over the last two axes."""
    matrix = np.asarray(matrix)
    return np.swapaxes(matrix, -1, -2).reshape(matrix.shape[:-2] + (-1,))


def unvec(vector: np.ndarray, n: int) -> np.ndarray:
    """Inverse of :func:`vec` for square (n, n) matrices."""
    vector = np.asarray(vector)
    if vector.shape[-1] != n * n:
        raise ArgumentError(f"expected trailing dimension {n * n}, got {vector.shape[-1]}")
    return np.swapaxes(vector.reshape(vector.shape[:-1] + (n, n)), -1, -2)


@dataclass(frozen=True)
class SchedulingPoint:
    """One value of the scheduling variable."""

    mu_x: np.ndarray
    u: np.ndarray
    sigma_x: np.ndarray = field(repr=False)

    def __post_init__(self):
        mu_x = np.array(self.mu_x, dtype=float).reshape(-1)
        u = np.array(self.u, dtype=float).reshape(-1)
        sigma = np.array(self.sigma_x, dtype=float)
        n_x = mu_x.size
        if sigma.shape != (n_x, n_x):
            raise ArgumentError(f"state covariance must be {n_x}x{n_x}, got {sigma.shape}")
        if not (np.all(np.isfinite(mu_x)) and np.all(np.isfinite(u)) and np.all(np.isfinite(sigma))):
            raise ArgumentError("scheduling point contains non-finite entries")
        if np.linalg.norm(sigma - sigma.T) >= SYMMETRY_TOLERANCE:
            raise ArgumentError("scheduled state covariance is not symmetric")
        object.__setattr__(self, "mu_x", mu_x)
        object.__setattr__(self, "u", u)
        object.__setattr__(self, "sigma_x", sigma)

    @property
    def n_x(self) -> int:
        return self.mu_x.size

    @property
    def n_u(self) -> int:
        return self.u.size

    @property
    def rho(self) -> np.ndarray:
        return np.concatenate([self.mu_x, self.u, vec(self.sigma_x)])

    @classmethod
    def from_rho(cls, rho, n_x: int, n_u: int) -> "SchedulingPoint":
        rho = np.asarray(rho, dtype=float).reshape(-1)
        if rho.size != n_x + n_u + n_x * n_x:
            raise ArgumentError(f"rho must have {n_x + n_u + n_x * n_x} entries, got {rho.size}")
        return cls(rho[:n_x], rho[n_x : n_x + n_u], unvec(rho[n_x + n_u :], n_x))


@dataclass(frozen=True)
class AnchorPoint:
    """Measured state and previously applied input; zero covariance."""

    x_meas: np.ndarray
    u_prev: np.ndarray

    def __post_init__(self):
        x = np.array(self.x_meas, dtype=float).reshape(-1)
        u = np.array(self.u_prev, dtype=float).reshape(-1)
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(u))):
            raise ArgumentError("anchor contains non-finite entries")
        object.__setattr__(self, "x_meas", x)
        object.__setattr__(self, "u_prev", u)

    @property
    def sigma_zero(self) -> np.ndarray:
        return np.zeros(self.x_meas.size**2)

    @property
    def rho(self) -> np.ndarray:
        return np.concatenate([self.x_meas, self.u_prev, self.sigma_zero])

    def as_point(self) -> SchedulingPoint:
        n_x = self.x_meas.size
        return SchedulingPoint(self.x_meas, self.u_prev, np.zeros((n_x, n_x)))


def schedule_from_beliefs(beliefs: Sequence[GaussianBelief], inputs) -> List[SchedulingPoint]:
    """Pair state beliefs i = 0..N-1 with inputs u(i) into a schedule."""
    inputs = np.asarray(inputs, dtype=float)
    if inputs.ndim != 2 or len(beliefs) < inputs.shape[0]:
        raise ArgumentError(f"need one belief per input, got {len(beliefs)} beliefs for {inputs.shape} inputs")
    return [SchedulingPoint(b.mean, u, b.covariance) for b, u in zip(beliefs, inputs)]
