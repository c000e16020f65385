"""Reduced-order outer-loop model and its RK4 discretization.

State ``x = col(xi, xi_dot, phi, theta, psi)``, input ``u = col(T, p, q, r)``.
Every function broadcasts over leading axes and is analytic, so it accepts
the complex arguments of complex-step differentiation.
"""

from typing import Callable

import numpy as np

from ..errors import NumericalError
from ..propagation import NominalModel
from .params import QuadParams

N_X = 9
N_U = 4
# Euler kinematics are singular at theta = +-pi/2
PITCH_MARGIN = 1e-3


def _check_pitch(theta):
    if np.any(np.abs(np.real(theta)) >= np.pi / 2 - PITCH_MARGIN):
        raise NumericalError("pitch too close to +-90 deg for Euler-angle kinematics")


def thrust_direction(phi, theta, psi):
    """R_b^i e3 for ZYX Euler angles, shape (..., 3)."""
    cphi, sphi = np.cos(phi), np.sin(phi)
    cth, sth = np.cos(theta), np.sin(theta)
    cpsi, spsi = np.cos(psi), np.sin(psi)
    return np.stack(
        [cphi * sth * cpsi + sphi * spsi, cphi * sth * spsi - sphi * cpsi, cphi * cth], axis=-1
    )


def nominal_continuous(x, u, params: QuadParams):
    """f_c(x, u).

    Raises:
        NumericalError: |theta| within ``PITCH_MARGIN`` of pi/2.
    """
    x, u = np.asarray(x), np.asarray(u)
    phi, theta, psi = x[..., 6], x[..., 7], x[..., 8]
    _check_pitch(theta)
    T, p, q, r = u[..., 0], u[..., 1], u[..., 2], u[..., 3]
    acc = np.expand_dims(T / params.mass, -1) * thrust_direction(phi, theta, psi)
    acc = acc - params.gravity * np.array([0.0, 0.0, 1.0])
    cphi, sphi = np.cos(phi), np.sin(phi)
    yaw_part = sphi * q + cphi * r
    euler_rates = np.stack(
        [p + np.tan(theta) * yaw_part, cphi * q - sphi * r, yaw_part / np.cos(theta)], axis=-1
    )
    return np.concatenate([x[..., 3:6], acc, euler_rates], axis=-1)


def nominal_jacobian(x, u, params: QuadParams):
    """d f_c / d col(x, u), shape (..., 9, 13)."""
    x, u = np.asarray(x), np.asarray(u)
    phi, theta, psi = x[..., 6], x[..., 7], x[..., 8]
    _check_pitch(theta)
    T, q, r = u[..., 0], u[..., 2], u[..., 3]
    cphi, sphi = np.cos(phi), np.sin(phi)
    cth, sth, tth = np.cos(theta), np.sin(theta), np.tan(theta)
    cpsi, spsi = np.cos(psi), np.sin(psi)
    dtype = np.result_type(x, u, float)
    J = np.zeros(np.broadcast_shapes(x.shape[:-1], u.shape[:-1]) + (N_X, N_X + N_U), dtype=dtype)
    J[..., 0:3, 3:6] = np.eye(3)

    a = np.expand_dims(T / params.mass, -1)
    d_phi = np.stack([-sphi * sth * cpsi + cphi * spsi, -sphi * sth * spsi - cphi * cpsi, -sphi * cth], axis=-1)
    d_theta = np.stack([cphi * cth * cpsi, cphi * cth * spsi, -cphi * sth], axis=-1)
    d_psi = np.stack([-cphi * sth * spsi + sphi * cpsi, cphi * sth * cpsi + sphi * spsi, np.zeros_like(cphi)], axis=-1)
    J[..., 3:6, 6] = a * d_phi
    J[..., 3:6, 7] = a * d_theta
    J[..., 3:6, 8] = a * d_psi
    J[..., 3:6, 9] = thrust_direction(phi, theta, psi) / params.mass

    yaw_part = sphi * q + cphi * r
    dyaw_dphi = cphi * q - sphi * r
    J[..., 6, 6] = tth * dyaw_dphi
    J[..., 6, 7] = yaw_part / cth**2
    J[..., 6, 10] = 1.0
    J[..., 6, 11] = tth * sphi
    J[..., 6, 12] = tth * cphi
    J[..., 7, 6] = -yaw_part
    J[..., 7, 11] = cphi
    J[..., 7, 12] = -sphi
    J[..., 8, 6] = dyaw_dphi / cth
    J[..., 8, 7] = yaw_part * sth / cth**2
    J[..., 8, 11] = sphi / cth
    J[..., 8, 12] = cphi / cth
    return J


def rk4_discretize(field: Callable, x, u, T_s: float):
    """Classical RK4 step of ``x_dot = field(x, u)`` with ``u`` held."""
    k1 = field(x, u)
    k2 = field(x + 0.5 * T_s * k1, u)
    k3 = field(x + 0.5 * T_s * k2, u)
    k4 = field(x + T_s * k3, u)
    return x + T_s / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def rk4_with_jacobian(field: Callable, jacobian: Callable, x, u, T_s: float):
    """RK4 step and its exact derivative with respect to col(x, u)."""
    x, u = np.asarray(x), np.asarray(u)
    n_x, n_u = x.shape[-1], u.shape[-1]
    batch = np.broadcast_shapes(x.shape[:-1], u.shape[:-1])
    dx0 = np.broadcast_to(np.eye(n_x, n_x + n_u), batch + (n_x, n_x + n_u))
    du = np.concatenate([np.zeros((n_u, n_x)), np.eye(n_u)], axis=1)

    def stage(xs, dxs):
        jac = jacobian(xs, u)
        return field(xs, u), jac[..., :n_x] @ dxs + jac[..., n_x:] @ du

    k1, d1 = stage(x, dx0)
    k2, d2 = stage(x + 0.5 * T_s * k1, dx0 + 0.5 * T_s * d1)
    k3, d3 = stage(x + 0.5 * T_s * k2, dx0 + 0.5 * T_s * d2)
    k4, d4 = stage(x + T_s * k3, dx0 + T_s * d3)
    nxt = x + T_s / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    dnxt = dx0 + T_s / 6.0 * (d1 + 2.0 * d2 + 2.0 * d3 + d4)
    return nxt, dnxt


def quadrotor_model(params: QuadParams, T_s: float) -> NominalModel:
    """Discrete nominal model f_d for the GP-MPC recursion."""

    def field(x, u):
        return nominal_continuous(x, u, params)

    def jac(x, u):
        return nominal_jacobian(x, u, params)

    def dynamics(w):
        return rk4_discretize(field, w[..., :N_X], w[..., N_X:], T_s)

    def jacobian(w):
        return rk4_with_jacobian(field, jac, w[..., :N_X], w[..., N_X:], T_s)[1]

    return NominalModel(dynamics, jacobian, N_X, N_U)


def hover_input(params: QuadParams) -> np.ndarray:
    return np.array([params.hover_thrust, 0.0, 0.0, 0.0])
