from .data import Dataset, Hyperparams, default_hyperparams
from .full_gp import (
    FullGpModel,
    gp_fit,
    gp_predict,
    gp_predict_batch,
    log_predictive_density,
    nlml,
    nlml_with_grad,
    stable_cholesky,
    train_full,
)
from .kernels import gram_matrix, se_kernel
from .optimize import ConvergenceReport
from .serialization import (
    dump_sparse_model,
    full_model_from_document,
    full_model_to_document,
    load_sparse_model,
    model_hash,
)
from .sparse_gp import (
    SparseGpModel,
    build_sparse_model,
    sparse_predict,
    sparse_predict_batch,
    train_sparse,
    vfe_objective,
    vfe_objective_with_grad,
)

__all__ = [
    "ConvergenceReport",
    "Dataset",
    "FullGpModel",
    "Hyperparams",
    "SparseGpModel",
    "build_sparse_model",
    "default_hyperparams",
    "dump_sparse_model",
    "full_model_from_document",
    "full_model_to_document",
    "gp_fit",
    "gp_predict",
    "gp_predict_batch",
    "gram_matrix",
    "load_sparse_model",
    "log_predictive_density",
    "model_hash",
    "nlml",
    "nlml_with_grad",
    "se_kernel",
    "sparse_predict",
    "sparse_predict_batch",
    "stable_cholesky",
    "train_full",
    "train_sparse",
    "vfe_objective",
    "vfe_objective_with_grad",
]
