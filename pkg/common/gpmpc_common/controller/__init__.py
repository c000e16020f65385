from .assembly import MpcLayout, MpcQp, pair_halfspaces, qp_assemble_mpc
from .cost import stage_cost, standard_normal_quantile, tighten_halfspace
from .gpmpc import (
    CONTROLLER_VARIANTS,
    DIAGNOSTIC_FIELDS,
    ControllerState,
    GpMpcController,
    Prediction,
    Schedule,
    StepDiagnostics,
    config_for_variant,
    init_schedule,
    schedule_gap,
    shift_inputs,
)

__all__ = [
    "CONTROLLER_VARIANTS",
    "DIAGNOSTIC_FIELDS",
    "ControllerState",
    "GpMpcController",
    "MpcLayout",
    "MpcQp",
    "Prediction",
    "Schedule",
    "StepDiagnostics",
    "config_for_variant",
    "init_schedule",
    "pair_halfspaces",
    "qp_assemble_mpc",
    "schedule_gap",
    "shift_inputs",
    "stage_cost",
    "standard_normal_quantile",
    "tighten_halfspace",
]
