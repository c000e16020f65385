"""Conversion between GP models and their JSON documents."""

import hashlib
from typing import Any, Dict, Optional

import numpy as np
from pydantic import ValidationError

from ..dto.model_document import FullGpDocument, HyperparamsDocument, SparseGpDocument, SparseOutputDocument
from ..errors import ArgumentError
from .data import Dataset, Hyperparams
from .full_gp import FullGpModel, gp_fit
from .sparse_gp import SparseGpModel


def _hyp_doc(h: Hyperparams) -> HyperparamsDocument:
    return HyperparamsDocument(
        signal_variance=h.signal_variance, noise_variance=h.noise_variance, lengthscales=h.lengthscales.tolist()
    )


def _hyp(doc: HyperparamsDocument) -> Hyperparams:
    return Hyperparams(doc.signal_variance, doc.noise_variance, np.array(doc.lengthscales))


def sparse_model_to_document(model: SparseGpModel, metadata: Optional[Dict[str, Any]] = None) -> SparseGpDocument:
    outputs = [
        SparseOutputDocument(
            hyperparams=_hyp_doc(h),
            inducing_inputs=model.inducing_inputs[i].tolist(),
            dual_weights=model.dual_weights[i].tolist(),
            kuu_inv=model.kuu_inv[i].tolist(),
            s_inv=model.s_inv[i].tolist(),
            variance_weight=model.variance_weight[i].tolist(),
        )
        for i, h in enumerate(model.hyperparams)
    ]
    return SparseGpDocument(
        n_inputs=model.n_inputs,
        n_source=model.n_source,
        jitter=model.jitter,
        input_indices=None if model.input_indices is None else list(model.input_indices),
        outputs=outputs,
        metadata=dict(metadata or {}),
    )


def sparse_model_from_document(doc: SparseGpDocument) -> SparseGpModel:
    """Rebuild the model from its cached matrices (no refactorization)."""
    shapes = {np.array(o.inducing_inputs).shape for o in doc.outputs}
    if len(shapes) != 1:
        raise ArgumentError(f"outputs disagree on inducing input shape: {sorted(shapes)}")
    M, n_inputs = shapes.pop()
    if n_inputs != doc.n_inputs:
        raise ArgumentError(f"inducing inputs have {n_inputs} columns, document declares {doc.n_inputs}")
    for o in doc.outputs:
        if len(o.dual_weights) != M or np.array(o.kuu_inv).shape != (M, M):
            raise ArgumentError("cached matrices do not match the number of inducing inputs")
    return SparseGpModel(
        hyperparams=tuple(_hyp(o.hyperparams) for o in doc.outputs),
        inducing_inputs=np.array([o.inducing_inputs for o in doc.outputs], dtype=float),
        dual_weights=np.array([o.dual_weights for o in doc.outputs], dtype=float),
        kuu_inv=np.array([o.kuu_inv for o in doc.outputs], dtype=float),
        s_inv=np.array([o.s_inv for o in doc.outputs], dtype=float),
        variance_weight=np.array([o.variance_weight for o in doc.outputs], dtype=float),
        n_source=doc.n_source,
        input_indices=None if doc.input_indices is None else tuple(doc.input_indices),
        jitter=doc.jitter,
    )


def dump_sparse_model(model: SparseGpModel, metadata: Optional[Dict[str, Any]] = None) -> str:
    return sparse_model_to_document(model, metadata).model_dump_json(indent=2)


def load_sparse_model(text: str) -> SparseGpModel:
    try:
        doc = SparseGpDocument.model_validate_json(text)
    except ValidationError as e:
        raise ArgumentError(f"invalid sparse GP document: {e}") from e
    return sparse_model_from_document(doc)


def model_hash(text: str) -> str:
    """sha256 of a serialized model document."""
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def full_model_to_document(model: FullGpModel, metadata: Optional[Dict[str, Any]] = None) -> FullGpDocument:
    return FullGpDocument(
        inputs=model.dataset.inputs.tolist(),
        outputs=model.dataset.outputs.tolist(),
        hyperparams=[_hyp_doc(h) for h in model.hyperparams],
        alpha=model.alpha.tolist(),
        metadata=dict(metadata or {}),
    )


def full_model_from_document(doc: FullGpDocument) -> FullGpModel:
    return gp_fit(Dataset(np.array(doc.inputs), np.array(doc.outputs)), [_hyp(h) for h in doc.hyperparams])
