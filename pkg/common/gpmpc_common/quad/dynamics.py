"""Full rigid-body truth model and the X-layout rotor mixer.

Attitude is a unit quaternion in scalar-last order ``(x, y, z, w)`` rotating
body vectors into the inertial frame.
"""

import logging
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
from scipy.spatial.transform import Rotation

from .. import metrics
from ..errors import ArgumentError
from .params import QuadParams

logger = logging.getLogger(__name__)

E3 = np.array([0.0, 0.0, 1.0])


@dataclass(frozen=True)
class TruthState:
    """Position, velocity, attitude quaternion and body rates (p, q, r)."""

    position: np.ndarray
    velocity: np.ndarray
    quaternion: np.ndarray
    rates: np.ndarray

    @classmethod
    def from_vector(cls, v) -> "TruthState":
        v = np.asarray(v, dtype=float)
        if v.shape != (13,):
            raise ArgumentError(f"truth state vector must have 13 entries, got {v.shape}")
        return cls(v[0:3].copy(), v[3:6].copy(), v[6:10].copy(), v[10:13].copy())

    @classmethod
    def hover(cls, position=(0.0, 0.0, 0.0), yaw: float = 0.0) -> "TruthState":
        quat = Rotation.from_euler("z", yaw).as_quat()
        return cls(np.asarray(position, dtype=float), np.zeros(3), quat, np.zeros(3))

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.position, self.velocity, self.quaternion, self.rates])

    def rotation(self) -> np.ndarray:
        """R_b^i."""
        return Rotation.from_quat(self.quaternion).as_matrix()

    def euler(self) -> np.ndarray:
        """(phi, theta, psi) of the ZYX convention."""
        psi, theta, phi = Rotation.from_quat(self.quaternion).as_euler("ZYX")
        return np.array([phi, theta, psi])

    def outer_state(self) -> np.ndarray:
        """col(xi, xi_dot, phi, theta, psi), the controller-visible state."""
        return np.concatenate([self.position, self.velocity, self.euler()])


def allocation_matrix(params: QuadParams) -> np.ndarray:
    """Maps rotor thrusts (T_1..T_4) to (T, tau_x, tau_y, tau_z)."""
    d = params.lever
    k = params.drag_coeff / params.thrust_coeff
    return np.array(
        [
            [1.0, 1.0, 1.0, 1.0],
            [-d, -d, d, d],
            [-d, d, d, -d],
            [-k, k, -k, k],
        ]
    )


def forward_allocation(thrusts, params: QuadParams) -> Tuple[float, np.ndarray]:
    wrench = allocation_matrix(params) @ np.asarray(thrusts, dtype=float)
    return float(wrench[0]), wrench[1:]


def allocate(T: float, tau, params: QuadParams) -> Tuple[np.ndarray, bool]:
    """Rotor thrusts for total thrust ``T`` and body torque ``tau``.

    Thrusts are clipped to ``[0, thrust_max / 4]``; the flag reports clipping.
    """
    wrench = np.concatenate([[T], np.asarray(tau, dtype=float)])
    thrusts = np.linalg.solve(allocation_matrix(params), wrench)
    clipped = np.clip(thrusts, 0.0, params.thrust_max / 4.0)
    saturated = bool(np.any(clipped != thrusts))
    if saturated:
        metrics.ALLOCATION_SATURATIONS.inc()
        logger.debug(f"rotor thrusts {np.array2string(thrusts, precision=4)} clipped")
    return clipped, saturated


def _quat_rate(quat: np.ndarray, rates: np.ndarray) -> np.ndarray:
    """1/2 q (x) (omega, 0) for scalar-last quaternions."""
    x, y, z, w = quat
    p, q, r = rates
    return 0.5 * np.array(
        [
            w * p + y * r - z * q,
            w * q + z * p - x * r,
            w * r + x * q - y * p,
            -x * p - y * q - z * r,
        ]
    )


def truth_field(
    v: np.ndarray, thrusts: np.ndarray, params: QuadParams, disturbance: Optional[np.ndarray] = None, aero: bool = True
) -> np.ndarray:
    """Time derivative of the 13-vector state for held rotor thrusts."""
    vel, quat, rates = v[3:6], v[6:10], v[10:13]
    R = Rotation.from_quat(quat).as_matrix()
    force_b = np.sum(thrusts) * E3
    if aero:
        omega_sum = np.sum(np.sqrt(thrusts / params.thrust_coeff))
        force_b = force_b - omega_sum * params.K_aero @ (R.T @ vel)
    acc = R @ force_b / params.mass - params.gravity * E3
    if disturbance is not None:
        acc = acc + disturbance

    _, tau = forward_allocation(thrusts, params)
    J = params.J
    rate_dot = np.linalg.solve(J, tau - np.cross(rates, J @ rates))
    return np.concatenate([vel, acc, _quat_rate(quat, rates), rate_dot])


def truth_derivative(
    s: TruthState,
    rotor_thrusts,
    params: QuadParams,
    disturbance=None,
    aero: bool = True,
) -> np.ndarray:
    """Derivative of ``s`` as a 13-vector (position, velocity, quaternion, rates).

    ``disturbance`` is an inertial acceleration added to the translational
    dynamics.

    Raises:
        ArgumentError: Negative rotor thrust or malformed inputs.
    """
    thrusts = np.asarray(rotor_thrusts, dtype=float)
    if thrusts.shape != (4,) or not np.all(np.isfinite(thrusts)):
        raise ArgumentError("rotor thrusts must be a finite 4-vector")
    if np.any(thrusts < 0):
        raise ArgumentError(f"rotor thrusts must be nonnegative, got {thrusts}")
    dist = None if disturbance is None else np.asarray(disturbance, dtype=float).reshape(3)
    return truth_field(s.as_vector(), thrusts, params, dist, aero)


def truth_rk4_step(
    v: np.ndarray, thrusts: np.ndarray, params: QuadParams, dt: float, disturbance=None, aero: bool = True
) -> np.ndarray:
    """One RK4 step of the truth model followed by quaternion renormalization."""
    k1 = truth_field(v, thrusts, params, disturbance, aero)
    k2 = truth_field(v + 0.5 * dt * k1, thrusts, params, disturbance, aero)
    k3 = truth_field(v + 0.5 * dt * k2, thrusts, params, disturbance, aero)
    k4 = truth_field(v + dt * k3, thrusts, params, disturbance, aero)
    nxt = v + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    nxt[6:10] /= np.linalg.norm(nxt[6:10])
    return nxt
