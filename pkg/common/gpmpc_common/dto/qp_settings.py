"""ADMM solver options."""
from pydantic import BaseModel, Field

from ..config import QP_EPS_ABS, QP_EPS_REL, QP_MAX_ITER


class QpSettings(BaseModel):
    """Options of :func:`gpmpc_common.qp.qp_solve`."""
    rho: float = Field(0.1, gt=0, description="Initial ADMM step size")
    sigma: float = Field(1e-6, gt=0, description="Primal regularization of the KKT system")
    alpha: float = Field(1.6, gt=0, lt=2, description="Over-relaxation parameter")
    max_iter: int = Field(QP_MAX_ITER, ge=1)
    eps_abs: float = Field(QP_EPS_ABS, gt=0)
    eps_rel: float = Field(QP_EPS_REL, ge=0)
    eps_prim_inf: float = Field(1e-7, gt=0)
    eps_dual_inf: float = Field(1e-7, gt=0)
    scaling_iter: int = Field(10, ge=0, description="Ruiz equilibration passes; 0 disables scaling")
    adaptive_rho: bool = Field(True, description="Rescale rho from the residual ratio")
    adaptive_rho_interval: int = Field(25, ge=1)
    adaptive_rho_tolerance: float = Field(5.0, gt=1)
    check_interval: int = Field(1, ge=1, description="Iterations between termination checks")
    polish: bool = Field(True, description="Refine the ADMM solution on the guessed active set")
    polish_refine_iter: int = Field(3, ge=0)
    delta: float = Field(1e-6, gt=0, description="Regularization of the polishing KKT system")
    warm_start: bool = Field(True)
