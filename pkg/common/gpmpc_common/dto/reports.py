"""Benchmark and training reports written as JSON next to the run artifacts."""
import math
from typing import Dict, List, Optional

from pydantic import BaseModel, Field, model_validator

REPORT_SCHEMA_VERSION = 1


class Provenance(BaseModel):
    """Where a result came from."""
    seed: int
    config_hash: str
    model_hash: Optional[str] = None
    dataset_hash: Optional[str] = None
    git_describe: str = "unknown"


class BenchmarkReport(BaseModel):
    """Tracking and timing summary of one closed-loop run."""
    schema_version: int = REPORT_SCHEMA_VERSION
    variant: str
    reference: str
    failed: bool = False
    failure_reason: Optional[str] = None
    n_steps: int = Field(0, ge=0)
    rmse_3d: float = Field(..., description="RMS 3D position error [mm]")
    rmse_xy: float = Field(..., description="RMS lateral position error [mm]")
    avg_step_time: float = Field(..., description="Mean controller step time [ms]")
    avg_factorization_time: float = Field(..., description="Mean LPV factorization time per step [ms]")
    avg_qp_time: float = Field(..., description="Mean QP time per step [ms]")
    avg_iterations: float = Field(..., description="Mean LPV iterations per step")
    median_iterations: float = Field(..., description="Median LPV iterations per step")
    avg_qp_iterations: float = Field(..., description="Mean ADMM iterations per QP")
    constraint_violations: int = Field(0, ge=0, description="Ticks with the measured state outside the state polytope")
    slack_steps: int = Field(0, ge=0, description="Steps that needed soft state constraints")
    saturations: int = Field(0, ge=0, description="Mixer updates that clipped a rotor")
    provenance: Provenance

    @model_validator(mode="after")
    def validate_rmse_order(self):
        if not (math.isnan(self.rmse_xy) or math.isnan(self.rmse_3d)) and self.rmse_xy > self.rmse_3d * (1 + 1e-12):
            raise ValueError("lateral RMSE cannot exceed the 3D RMSE")
        return self


class VariantComparison(BaseModel):
    """One report per controller variant, flown on the same reference and seed."""
    schema_version: int = REPORT_SCHEMA_VERSION
    reports: List[BenchmarkReport]

    def table(self) -> List[Dict[str, object]]:
        """Rows of variant, RMSE, timing and iteration columns."""
        columns = ("variant", "failed", "rmse_3d", "rmse_xy", "avg_step_time", "avg_qp_time",
                   "avg_iterations", "avg_qp_iterations", "constraint_violations")
        return [{c: getattr(r, c) for c in columns} for r in self.reports]

    def improvement(self, variant: str, baseline: str = "baseline") -> float:
        """RMSE ratio baseline / variant; above 1 means the variant tracks better."""
        by_name = {r.variant: r for r in self.reports}
        return by_name[baseline].rmse_3d / by_name[variant].rmse_3d


class OutputTrainingSummary(BaseModel):
    output: int
    success: bool
    message: str
    iterations: int
    initial_objective: float
    final_objective: float
    signal_variance: float
    noise_variance: float
    lengthscales: List[float]


class TrainingReport(BaseModel):
    """Optimizer outcome and held-out fit of a trained sparse GP."""
    schema_version: int = REPORT_SCHEMA_VERSION
    inducing_points: int
    n_train: int
    n_holdout: int
    outputs: List[OutputTrainingSummary]
    holdout_log_density: Optional[float] = Field(None, description="Mean held-out log predictive density")
    prior_log_density: Optional[float] = Field(None, description="Same, for the zero-mean prior-only model")
    provenance: Provenance


class SweepRow(BaseModel):
    inducing_points: int
    rmse_3d: float
    rmse_xy: float
    avg_step_time: float
    avg_iterations: float
    model_hash: str = Field(..., description="SHA-256 of the model file benchmarked at this M")
    failed: bool = False


class InducingSweepReport(BaseModel):
    schema_version: int = REPORT_SCHEMA_VERSION
    variant: str
    rows: List[SweepRow]
    rmse_saturated: Optional[bool] = Field(None, description="RMSE(M=8) within tolerance of RMSE(M=4); None unless both ran")
    time_nondecreasing: bool = Field(..., description="Mean step time nondecreasing in M up to timing noise")
    provenance: Provenance
