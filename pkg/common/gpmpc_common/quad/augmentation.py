"""Residual construction for the velocity-augmented quadrotor model.

The measured velocity at ``k+1`` minus the nominal prediction, divided by the
sampling period, is the residual acceleration ``z(k)`` the GPs learn; the
augmented predictor adds ``T_d B_z z`` back onto the nominal step.
"""

from typing import Tuple

import numpy as np

from ..errors import ArgumentError
from ..gp import Dataset
from ..propagation import NominalModel
from .nominal import N_U, N_X

# col(xi_dot, phi, theta, psi, u) inside col(x, u); positions are excluded
GP_INPUT_INDICES: Tuple[int, ...] = tuple(range(3, N_X + N_U))
VELOCITY_ROWS = slice(3, 6)
VELOCITY_SELECTOR = np.zeros((N_X, 3))
VELOCITY_SELECTOR[VELOCITY_ROWS] = np.eye(3)


def transitions_to_residuals(states, inputs, next_states, model: NominalModel, T_d: float) -> Dataset:
    """Dataset of (w(k), z(k)) from measured transitions.

    Args:
        states: (K, 9) outer states x(k).
        inputs: (K, 4) applied inputs u(k).
        next_states: (K, 9) measured x(k+1).
        model: Discrete nominal model f_d.
        T_d: Period dividing the velocity mismatch.
    """
    states = np.asarray(states, dtype=float)
    inputs = np.asarray(inputs, dtype=float)
    next_states = np.asarray(next_states, dtype=float)
    if states.shape != next_states.shape or states.shape[0] != inputs.shape[0] or states.shape[0] == 0:
        raise ArgumentError("states, inputs and next_states need matching, nonzero row counts")
    w_full = np.concatenate([states, inputs], axis=1)
    predicted = model.dynamics(w_full)
    z = (next_states[:, VELOCITY_ROWS] - predicted[:, VELOCITY_ROWS]) / T_d
    return Dataset(w_full[:, list(GP_INPUT_INDICES)], z)


def reconstruct_next_velocity(state, u, z, model: NominalModel, T_d: float) -> np.ndarray:
    """Velocity of the augmented step ``f_d(x, u) + T_d B_z z``."""
    w_full = np.concatenate([np.asarray(state, dtype=float), np.asarray(u, dtype=float)], axis=-1)
    nxt = model.dynamics(w_full) + T_d * np.asarray(z, dtype=float) @ VELOCITY_SELECTOR.T
    return nxt[..., VELOCITY_ROWS]
