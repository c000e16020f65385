"""Physical parameters of the quadrotor."""

import logging
from importlib import resources
from pathlib import Path
from typing import List, Optional, Union

import numpy as np
import yaml
from pydantic import BaseModel, Field, ValidationError, field_validator

from ..errors import ConfigError

logger = logging.getLogger(__name__)

DEFAULT_PARAMS_FILE = "crazyflie21.yaml"


def _matrix3(v: List[List[float]], name: str) -> List[List[float]]:
    M = np.asarray(v, dtype=float)
    if M.shape != (3, 3) or not np.all(np.isfinite(M)):
        raise ValueError(f"{name} must be a finite 3x3 matrix")
    return v


class QuadParams(BaseModel):
    """Rigid-body, rotor and inner-loop parameters.

    ``thrust_min``/``thrust_max`` bound the total thrust; each rotor is
    clipped to ``[0, thrust_max / 4]``.
    """
    mass: float = Field(..., gt=0, description="Mass [kg]")
    gravity: float = Field(9.81, gt=0, description="Gravitational acceleration [m/s^2]")
    inertia: List[List[float]] = Field(..., description="Body inertia J_b [kg m^2]")
    arm_length: float = Field(..., gt=0, description="Rotor arm length l [m]")
    thrust_coeff: float = Field(..., gt=0, description="alpha_c in T_j = alpha_c Omega_j^2")
    drag_coeff: float = Field(..., gt=0, description="beta_c, rotor drag torque coefficient")
    k_aero: List[List[float]] = Field(default_factory=lambda: np.zeros((3, 3)).tolist())
    thrust_min: float = Field(0.0, ge=0)
    thrust_max: float = Field(..., gt=0)
    rate_max: List[float] = Field(..., min_length=3, max_length=3, description="Body-rate bounds [rad/s]")
    pid_rate_hz: float = Field(500.0, gt=0)
    rate_kp: List[float] = Field(..., min_length=3, max_length=3)
    rate_ki: List[float] = Field(..., min_length=3, max_length=3)
    rate_kd: List[float] = Field(..., min_length=3, max_length=3)
    rate_integral_limit: List[float] = Field(..., min_length=3, max_length=3)

    @field_validator("inertia")
    @classmethod
    def validate_inertia(cls, v: List[List[float]]) -> List[List[float]]:
        J = np.asarray(_matrix3(v, "inertia"), dtype=float)
        if np.max(np.abs(J - J.T)) > 1e-15 or np.linalg.eigvalsh(J).min() <= 0:
            raise ValueError("inertia must be symmetric positive definite")
        return v

    @field_validator("k_aero")
    @classmethod
    def validate_k_aero(cls, v: List[List[float]]) -> List[List[float]]:
        return _matrix3(v, "k_aero")

    @field_validator("thrust_max")
    @classmethod
    def validate_thrust_range(cls, v: float, info) -> float:
        if v <= info.data.get("thrust_min", 0.0):
            raise ValueError("thrust_max must exceed thrust_min")
        return v

    @property
    def lever(self) -> float:
        """Projected lever d = l / sqrt(2) of the X layout."""
        return self.arm_length / np.sqrt(2.0)

    @property
    def J(self) -> np.ndarray:
        return np.asarray(self.inertia, dtype=float)

    @property
    def K_aero(self) -> np.ndarray:
        return np.asarray(self.k_aero, dtype=float)

    @property
    def hover_thrust(self) -> float:
        return self.mass * self.gravity

    def perturbed(self, mass_factor: float = 1.0, inertia_factor: float = 1.0) -> "QuadParams":
        """Copy with scaled mass and inertia, the truth model of a modified vehicle."""
        if mass_factor <= 0 or inertia_factor <= 0:
            raise ConfigError("perturbation factors must be positive")
        return self.model_copy(
            update={"mass": self.mass * mass_factor, "inertia": (inertia_factor * self.J).tolist()}
        )


def load_quad_params(path: Optional[Union[str, Path]] = None) -> QuadParams:
    """Parameters from a YAML file; the packaged Crazyflie 2.1 set by default.

    Raises:
        ConfigError: Unreadable file or invalid values.
    """
    try:
        if path is None:
            text = resources.files("gpmpc_common.quad").joinpath("data").joinpath(DEFAULT_PARAMS_FILE).read_text()
        else:
            text = Path(path).read_text()
        raw = yaml.safe_load(text)
    except (OSError, yaml.YAMLError) as e:
        raise ConfigError(f"cannot read quadrotor parameters: {e}") from e
    if not isinstance(raw, dict):
        raise ConfigError("quadrotor parameter file must be a mapping")
    try:
        params = QuadParams(**raw)
    except ValidationError as e:
        raise ConfigError(f"invalid quadrotor parameters: {e}") from e
    logger.debug(f"loaded quadrotor parameters: mass {params.mass:.4f} kg")
    return params
