"""Quadrotor controller tuning: weights, constraint polytopes and wiring."""

import math
from typing import Optional

import numpy as np

from ..controller import GpMpcController
from ..dto.controller_config import ControllerConfig, HalfSpace
from ..gp import SparseGpModel
from .augmentation import VELOCITY_SELECTOR
from .nominal import N_U, N_X, hover_input, quadrotor_model
from .params import QuadParams

VELOCITY_LIMIT = 6.5
ANGLE_LIMIT = math.radians(70.0)


def _box(n: int, index: int, lower: float, upper: float):
    alpha = np.zeros(n)
    alpha[index] = 1.0
    return [HalfSpace(alpha=alpha.tolist(), b=upper), HalfSpace(alpha=(-alpha).tolist(), b=-lower)]


def quadrotor_state_polytope():
    """Velocity and Euler-angle boxes; positions are unconstrained."""
    halfspaces = []
    for i in range(3, 6):
        halfspaces += _box(N_X, i, -VELOCITY_LIMIT, VELOCITY_LIMIT)
    for i in range(6, 9):
        halfspaces += _box(N_X, i, -ANGLE_LIMIT, ANGLE_LIMIT)
    return halfspaces


def quadrotor_input_polytope(params: QuadParams):
    halfspaces = _box(N_U, 0, params.thrust_min, params.thrust_max)
    for i, limit in enumerate(params.rate_max, start=1):
        halfspaces += _box(N_U, i, -limit, limit)
    return halfspaces


def quadrotor_controller_config(params: QuadParams, **overrides) -> ControllerConfig:
    """Controller settings for the outer loop, centred on hover thrust.

    The convergence gap measures inputs relative to their admissible range.
    """
    ranges = [params.thrust_max - params.thrust_min] + [2.0 * r for r in params.rate_max]
    values = dict(
        u_ref=hover_input(params).tolist(),
        state_polytope=quadrotor_state_polytope(),
        input_polytope=quadrotor_input_polytope(params),
        gap_input_scale=ranges,
    )
    values.update(overrides)
    return ControllerConfig(**values)


def build_quadrotor_controller(
    cfg: ControllerConfig, params: QuadParams, gp: Optional[SparseGpModel] = None
) -> GpMpcController:
    """Controller on the RK4 nominal model with GP residuals on the velocity rows."""
    nominal = quadrotor_model(params, cfg.T_s)
    return GpMpcController(cfg, nominal, gp if cfg.use_gp else None, VELOCITY_SELECTOR, gp_scale=cfg.T_s)
