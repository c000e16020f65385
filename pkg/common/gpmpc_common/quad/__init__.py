from .augmentation import GP_INPUT_INDICES, VELOCITY_SELECTOR, reconstruct_next_velocity, transitions_to_residuals
from .dynamics import TruthState, allocate, allocation_matrix, forward_allocation, truth_derivative, truth_rk4_step
from .nominal import (
    N_U,
    N_X,
    hover_input,
    nominal_continuous,
    nominal_jacobian,
    quadrotor_model,
    rk4_discretize,
    rk4_with_jacobian,
)
from .params import QuadParams, load_quad_params
from .pid import RatePidState, inner_rate_pid
from .references import (
    HoverReference,
    LemniscateReference,
    RandomPolynomialReference,
    Reference,
    make_reference,
    reference_horizon,
)
from .simulator import TRAJECTORY_FIELDS, TrajectoryLog, residual_dataset, simulate_closed_loop
from .tuning import build_quadrotor_controller, quadrotor_controller_config

__all__ = [
    "GP_INPUT_INDICES",
    "HoverReference",
    "LemniscateReference",
    "N_U",
    "N_X",
    "QuadParams",
    "RandomPolynomialReference",
    "RatePidState",
    "Reference",
    "TRAJECTORY_FIELDS",
    "TrajectoryLog",
    "TruthState",
    "VELOCITY_SELECTOR",
    "allocate",
    "allocation_matrix",
    "build_quadrotor_controller",
    "forward_allocation",
    "hover_input",
    "inner_rate_pid",
    "load_quad_params",
    "make_reference",
    "nominal_continuous",
    "nominal_jacobian",
    "quadrotor_controller_config",
    "quadrotor_model",
    "reconstruct_next_velocity",
    "reference_horizon",
    "residual_dataset",
    "rk4_discretize",
    "rk4_with_jacobian",
    "simulate_closed_loop",
    "transitions_to_residuals",
    "truth_derivative",
    "truth_rk4_step",
]
