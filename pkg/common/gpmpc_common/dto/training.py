"""GP training options."""
from pydantic import BaseModel, Field

from ..config import GP_TRAIN_GTOL, GP_TRAIN_MAX_ITER


class TrainingOptions(BaseModel):
    """Options shared by full and sparse hyperparameter training."""
    max_iter: int = Field(GP_TRAIN_MAX_ITER, ge=1, description="L-BFGS-B iteration cap per output")
    gtol: float = Field(GP_TRAIN_GTOL, gt=0, description="Projected gradient tolerance")
    optimize_hyperparams: bool = Field(True, description="Optimize kernel hyperparameters")
    optimize_inducing: bool = Field(True, description="Optimize inducing inputs (sparse only)")
    share_inducing: bool = Field(False, description="One inducing set for all outputs (sparse only)")
    seed: int = Field(0, description="Seed of the k-means++ inducing initialization")
    workers: int = Field(1, ge=1, description="Outputs trained concurrently")
