"""Run configurations of the benchmark pipeline.

Config files are flat YAML mappings; each subcommand validates its own
variant. Controller keys (``horizon``, ``eps_lpv`` ...) are optional
overrides of the quadrotor tuning.
"""

import hashlib
import json
from pathlib import Path
from typing import Any, Dict, List, Literal, Optional, Type, TypeVar, Union

import yaml
from pydantic import BaseModel, Field, ValidationError, field_validator, model_validator

from ..controller import CONTROLLER_VARIANTS
from ..errors import ConfigError
from .simulation_options import SimulationOptions
from .training import TrainingOptions

CONTROLLER_KEYS = (
    "horizon", "eps_lpv", "max_iters", "p_x", "rti", "quad_nodes", "taylor_cross", "workers", "dump_failed_qp",
)

C = TypeVar("C", bound="RunConfig")


class RunConfig(BaseModel):
    """Settings shared by every subcommand."""
    seed: int = Field(0, description="Seed of references, disturbances and inducing initialization")
    out_dir: str = Field("runs", description="Directory receiving every artifact of the run")
    params_file: Optional[str] = Field(None, description="Quadrotor parameter file; packaged Crazyflie 2.1 set if unset")
    duration: float = Field(10.0, gt=0, description="Simulated time per closed-loop run [s]")
    aero: bool = Field(True, description="Rotor drag in the truth model")
    mass_factor: float = Field(1.0, gt=0)
    inertia_factor: float = Field(1.0, gt=0)
    disturbance_variance: float = Field(0.1, ge=0)
    horizon: Optional[int] = Field(None, ge=1)
    eps_lpv: Optional[float] = Field(None, gt=0)
    max_iters: Optional[int] = Field(None, ge=1)
    p_x: Optional[float] = Field(None, gt=0, lt=1)
    rti: Optional[bool] = None
    quad_nodes: Optional[int] = Field(None, ge=3)
    taylor_cross: Optional[Literal["taylor", "mm"]] = None
    workers: Optional[int] = Field(None, ge=1, description="Threads factorizing horizon steps")
    dump_failed_qp: Optional[str] = Field(None, description="Matrix Market dump directory for unsolved MPC QPs")

    model_config = {"extra": "forbid"}

    def controller_overrides(self) -> Dict[str, Any]:
        return {k: getattr(self, k) for k in CONTROLLER_KEYS if getattr(self, k) is not None}

    def simulation_options(self, disturbance: bool) -> SimulationOptions:
        return SimulationOptions(
            duration=self.duration,
            disturbance=disturbance,
            disturbance_variance=self.disturbance_variance,
            aero=self.aero,
            mass_factor=self.mass_factor,
            inertia_factor=self.inertia_factor,
            seed=self.seed,
        )

    def config_hash(self) -> str:
        """SHA-256 of the canonical JSON of every field."""
        text = json.dumps(self.model_dump(mode="json"), sort_keys=True)
        return hashlib.sha256(text.encode()).hexdigest()


class CollectConfig(RunConfig):
    """Baseline flight on a random smooth reference, logged as GP training data."""
    duration: float = Field(60.0, gt=0)
    disturbance: bool = Field(True, description="White acceleration noise during collection")
    segment_time: float = Field(1.5, gt=0, description="Seconds between random waypoints")


class TrainConfig(RunConfig):
    dataset: str = Field(..., description="Dataset CSV written by collect")
    inducing_points: int = Field(4, ge=1, description="M, inducing points per GP")
    holdout_fraction: float = Field(0.2, ge=0, lt=1, description="Share of rows kept for the held-out density")
    share_inducing: bool = False
    max_iter: Optional[int] = Field(None, ge=1)
    training_workers: int = Field(1, ge=1, description="GP outputs trained concurrently")

    def training_options(self) -> TrainingOptions:
        values = dict(share_inducing=self.share_inducing, seed=self.seed, workers=self.training_workers)
        if self.max_iter is not None:
            values["max_iter"] = self.max_iter
        return TrainingOptions(**values)


class BenchConfig(RunConfig):
    """Closed-loop tracking of the lemniscate by one or more controller variants."""
    variants: Union[Literal["all"], List[str]] = Field(default_factory=lambda: ["lpv-mm-precov"])
    model: Optional[str] = Field(None, description="Sparse GP model JSON; required unless only 'baseline' runs")
    reference: Literal["lemniscate", "random_polynomial", "hover"] = "lemniscate"
    disturbance: bool = Field(False, description="White acceleration noise during evaluation")
    sweep_workers: Optional[int] = Field(None, ge=1, description="Parallel simulations; BENCH_WORKERS if unset")
    export_predictions: bool = Field(True, description="Write GP predictions with 95% bounds on the run data")

    @field_validator("variants")
    @classmethod
    def validate_variants(cls, v):
        if v == "all":
            return list(CONTROLLER_VARIANTS)
        unknown = [x for x in v if x not in CONTROLLER_VARIANTS]
        if unknown or not v:
            raise ValueError(f"variants must be 'all' or drawn from {CONTROLLER_VARIANTS}, got {v}")
        return v

    @model_validator(mode="after")
    def validate_model(self):
        if self.model is None and any(v != "baseline" for v in self.variants):
            raise ValueError("a GP model is required for GP-augmented variants")
        return self


class SweepInducingConfig(RunConfig):
    dataset: str = Field(..., description="Dataset CSV written by collect")
    inducing_counts: List[int] = Field(default_factory=lambda: [1, 2, 4, 8, 16], min_length=1)
    variant: str = "lpv-mm-precov"
    holdout_fraction: float = Field(0.2, ge=0, lt=1)
    max_iter: Optional[int] = Field(None, ge=1)
    sweep_workers: Optional[int] = Field(None, ge=1)

    @field_validator("inducing_counts")
    @classmethod
    def validate_counts(cls, v: List[int]) -> List[int]:
        if any(m < 1 for m in v):
            raise ValueError("inducing counts must be positive")
        return sorted(set(v))

    @field_validator("variant")
    @classmethod
    def validate_variant(cls, v: str) -> str:
        if v not in CONTROLLER_VARIANTS or v == "baseline":
            raise ValueError(f"variant must be a GP-augmented one of {CONTROLLER_VARIANTS}")
        return v


def load_run_config(path: Optional[Union[str, Path]], config_type: Type[C], **overrides) -> C:
    """Read a flat YAML file, apply CLI overrides and validate.

    Raises:
        ConfigError: Unreadable file, non-mapping document or invalid values.
    """
    raw: Dict[str, Any] = {}
    if path is not None:
        try:
            raw = yaml.safe_load(Path(path).read_text()) or {}
        except (OSError, yaml.YAMLError) as e:
            raise ConfigError(f"cannot read config {path}: {e}") from e
        if not isinstance(raw, dict):
            raise ConfigError(f"config {path} must be a flat mapping")
        nested = [k for k, v in raw.items() if isinstance(v, dict)]
        if nested:
            raise ConfigError(f"config {path} must be flat; nested keys: {nested}")
    raw.update({k: v for k, v in overrides.items() if v is not None})
    try:
        return config_type(**raw)
    except ValidationError as e:
        raise ConfigError(f"invalid {config_type.__name__}: {e}") from e
