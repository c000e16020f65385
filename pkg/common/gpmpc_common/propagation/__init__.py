from .belief import GaussianBelief, JointMoments, NominalModel
from .moments import mm_gp_moments, mm_moments_batch, taylor_gp_moments, taylor_moments_batch
from .recursion import PROPAGATION_MODES, gp_moments_batch, joint_moments, propagate_step, rollout, step_maps

__all__ = [
    "GaussianBelief",
    "JointMoments",
    "NominalModel",
    "PROPAGATION_MODES",
    "gp_moments_batch",
    "joint_moments",
    "mm_gp_moments",
    "mm_moments_batch",
    "propagate_step",
    "rollout",
    "step_maps",
    "taylor_gp_moments",
    "taylor_moments_batch",
]
