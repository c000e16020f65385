from .ftc import COVARIANCE_MODES, LpvStep, MapJacobians, factorize_horizon, ftc_factorize, jacobians, lpv_rollout
from .maps import FunctionMaps, MomentMaps, StepMaps
from .quadrature import simpson_nodes_weights
from .scheduling import AnchorPoint, SchedulingPoint, schedule_from_beliefs, unvec, vec

__all__ = [
    "AnchorPoint",
    "COVARIANCE_MODES",
    "FunctionMaps",
    "LpvStep",
    "MapJacobians",
    "MomentMaps",
    "SchedulingPoint",
    "StepMaps",
    "factorize_horizon",
    "ftc_factorize",
    "jacobians",
    "lpv_rollout",
    "schedule_from_beliefs",
    "simpson_nodes_weights",
    "unvec",
    "vec",
]
