"""Versioned JSON documents for trained GP models."""
from typing import Any, Dict, List, Literal, Optional

from pydantic import BaseModel, Field, field_validator

MODEL_SCHEMA_VERSION = 1


class HyperparamsDocument(BaseModel):
    """SE kernel hyperparameters of one output."""
    signal_variance: float = Field(..., gt=0)
    noise_variance: float = Field(..., gt=0)
    lengthscales: List[float] = Field(..., min_length=1, description="Diagonal of Lambda")

    @field_validator("lengthscales")
    @classmethod
    def validate_lengthscales(cls, v: List[float]) -> List[float]:
        if any(x <= 0 for x in v):
            raise ValueError("lengthscales must be strictly positive")
        return v


class SparseOutputDocument(BaseModel):
    """Posterior of one sparse output."""
    hyperparams: HyperparamsDocument
    inducing_inputs: List[List[float]] = Field(..., min_length=1)
    dual_weights: List[float]
    kuu_inv: List[List[float]]
    s_inv: List[List[float]]
    variance_weight: List[List[float]]


class SparseGpDocument(BaseModel):
    """Trained sparse GP, loaded by the controller at startup."""
    schema_version: Literal[1] = MODEL_SCHEMA_VERSION
    kind: Literal["sparse_gp"] = "sparse_gp"
    n_inputs: int = Field(..., ge=1)
    n_source: int = Field(..., ge=1, description="Training set size N")
    jitter: float = Field(..., ge=0)
    input_indices: Optional[List[int]] = None
    outputs: List[SparseOutputDocument] = Field(..., min_length=1)
    metadata: Dict[str, Any] = Field(default_factory=dict)


class FullGpDocument(BaseModel):
    """Exact GP with inline training data; alpha is recomputed on load."""
    schema_version: Literal[1] = MODEL_SCHEMA_VERSION
    kind: Literal["full_gp"] = "full_gp"
    inputs: List[List[float]] = Field(..., min_length=1)
    outputs: List[List[float]] = Field(..., min_length=1)
    hyperparams: List[HyperparamsDocument] = Field(..., min_length=1)
    alpha: List[List[float]]
    metadata: Dict[str, Any] = Field(default_factory=dict)
