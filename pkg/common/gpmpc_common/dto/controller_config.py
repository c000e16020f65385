"""Controller configuration schema."""

from typing import List, Literal, Optional

import numpy as np
from pydantic import BaseModel, Field, field_validator, model_validator

from ..config import QUAD_NODES
from .qp_settings import QpSettings

DEFAULT_Q_DIAG = [100.0, 100.0, 400.0, 40.0, 10.0, 10.0, 0.1, 0.1, 0.1]
DEFAULT_R_DIAG = [0.1, 0.1, 0.1, 0.1]


class HalfSpace(BaseModel):
    """``alpha' v <= b``; normalized to ``||alpha||_2 = 1`` on load."""
    alpha: List[float] = Field(..., min_length=1)
    b: float

    @model_validator(mode="before")
    @classmethod
    def normalize(cls, data):
        """Scale alpha to unit length and b by the same factor."""
        if not isinstance(data, dict) or "alpha" not in data or "b" not in data:
            return data
        alpha = np.asarray(data["alpha"], dtype=float)
        norm = float(np.linalg.norm(alpha))
        if norm == 0.0 or not np.isfinite(norm):
            raise ValueError("half-space normal must be nonzero and finite")
        return {**data, "alpha": (alpha / norm).tolist(), "b": float(data["b"]) / norm}


def _square(v: List[List[float]], name: str) -> np.ndarray:
    M = np.asarray(v, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1] or M.shape[0] == 0:
        raise ValueError(f"{name} must be a nonempty square matrix")
    if not np.all(np.isfinite(M)):
        raise ValueError(f"{name} must be finite")
    if np.max(np.abs(M - M.T)) > 1e-12:
        raise ValueError(f"{name} must be symmetric")
    return M


class ControllerConfig(BaseModel):
    """Iterated LPV GP-MPC settings; defaults are the quadrotor tuning."""
    horizon: int = Field(12, ge=1, description="Prediction horizon N_p")
    Q: List[List[float]] = Field(default_factory=lambda: np.diag(DEFAULT_Q_DIAG).tolist())
    R: List[List[float]] = Field(default_factory=lambda: np.diag(DEFAULT_R_DIAG).tolist())
    u_ref: Optional[List[float]] = Field(None, description="Input the R-weighted cost is centred on (zero if unset)")
    p_x: float = Field(0.95, gt=0, lt=1, description="State chance-constraint probability")
    state_polytope: List[HalfSpace] = Field(default_factory=list)
    input_polytope: List[HalfSpace] = Field(default_factory=list)
    propagation_mode: Literal["taylor", "mm"] = "mm"
    covariance_mode: Literal["precov", "cov"] = "precov"
    taylor_cross: Literal["taylor", "mm"] = "taylor"
    use_gp: bool = Field(True, description="False gives the nominal-model baseline")
    eps_lpv: float = Field(0.01, gt=0, description="Scheduling convergence tolerance (infinity norm)")
    max_iters: int = Field(12, ge=1)
    rti: bool = Field(False, description="One QP per time step, no re-simulation")
    T_s: float = Field(0.02, gt=0, description="Sampling time [s]")
    quad_nodes: int = Field(QUAD_NODES, ge=3, description="Simpson nodes of the LPV factorization")
    slack_penalty: float = Field(1e4, gt=0)
    gap_state_scale: Optional[List[float]] = Field(None, description="Per-state normalization of the gap")
    gap_input_scale: Optional[List[float]] = Field(None, description="Per-input normalization of the gap")
    workers: int = Field(1, ge=1, description="Threads factorizing horizon steps")
    dump_failed_qp: Optional[str] = Field(None, description="Directory receiving QPs that end unsolved")
    qp: QpSettings = Field(default_factory=QpSettings)

    @field_validator("Q")
    @classmethod
    def validate_q(cls, v: List[List[float]]) -> List[List[float]]:
        if np.linalg.eigvalsh(_square(v, "Q")).min() < -1e-12:
            raise ValueError("Q must be positive semidefinite")
        return v

    @field_validator("R")
    @classmethod
    def validate_r(cls, v: List[List[float]]) -> List[List[float]]:
        if np.linalg.eigvalsh(_square(v, "R")).min() <= 0:
            raise ValueError("R must be positive definite")
        return v

    @field_validator("u_ref", "gap_input_scale")
    @classmethod
    def validate_input_vectors(cls, v: Optional[List[float]], info) -> Optional[List[float]]:
        if v is not None and "R" in info.data and len(v) != len(info.data["R"]):
            raise ValueError(f"{info.field_name} must have one entry per input")
        return v

    @field_validator("gap_state_scale", "gap_input_scale")
    @classmethod
    def validate_gap_scales(cls, v: Optional[List[float]], info) -> Optional[List[float]]:
        if v is not None and any(s <= 0 for s in v):
            raise ValueError(f"{info.field_name} entries must be positive")
        if v is not None and info.field_name == "gap_state_scale" and "Q" in info.data and len(v) != len(info.data["Q"]):
            raise ValueError("gap_state_scale must have one entry per state")
        return v

    @field_validator("quad_nodes")
    @classmethod
    def validate_quad_nodes(cls, v: int) -> int:
        if v % 2 == 0:
            raise ValueError("Simpson quadrature needs an odd node count")
        return v

    @field_validator("state_polytope")
    @classmethod
    def validate_state_polytope(cls, v: List[HalfSpace], info) -> List[HalfSpace]:
        n_x = len(info.data["Q"]) if "Q" in info.data else None
        if n_x is not None and any(len(h.alpha) != n_x for h in v):
            raise ValueError(f"state half-spaces must have {n_x} entries")
        return v

    @field_validator("input_polytope")
    @classmethod
    def validate_input_polytope(cls, v: List[HalfSpace], info) -> List[HalfSpace]:
        n_u = len(info.data["R"]) if "R" in info.data else None
        if n_u is not None and any(len(h.alpha) != n_u for h in v):
            raise ValueError(f"input half-spaces must have {n_u} entries")
        return v

    @property
    def n_x(self) -> int:
        return len(self.Q)

    @property
    def n_u(self) -> int:
        return len(self.R)

    def weights(self):
        """(Q, R) as arrays."""
        return np.asarray(self.Q, dtype=float), np.asarray(self.R, dtype=float)

    def input_reference(self) -> np.ndarray:
        return np.zeros(self.n_u) if self.u_ref is None else np.asarray(self.u_ref, dtype=float)

    def state_halfspaces(self):
        """(alpha (n_h, n_x), b (n_h,)) of the state polytope."""
        return _stack(self.state_polytope, self.n_x)

    def input_halfspaces(self):
        return _stack(self.input_polytope, self.n_u)

    def gap_scales(self) -> np.ndarray:
        """Divisors for rho = col(mu_x, u, vec Sigma_x) in the convergence gap."""
        state = np.ones(self.n_x) if self.gap_state_scale is None else np.asarray(self.gap_state_scale, dtype=float)
        inputs = np.ones(self.n_u) if self.gap_input_scale is None else np.asarray(self.gap_input_scale, dtype=float)
        return np.concatenate([state, inputs, np.ones(self.n_x**2)])


def _stack(halfspaces: List[HalfSpace], n: int):
    if not halfspaces:
        return np.zeros((0, n)), np.zeros(0)
    return np.array([h.alpha for h in halfspaces]), np.array([h.b for h in halfspaces])
