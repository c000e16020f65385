"""VFE sparse GP: cached inducing-point posterior, objective and training.

All N-sized work goes through M x M Woodbury and determinant identities.
A small Kronecker jitter is added to every kernel matrix on coincident
inputs, so placing the inducing inputs on the training inputs reproduces
the exact GP.
"""

import logging
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy.cluster.vq import kmeans2
from scipy.linalg import cho_solve, cholesky, solve_triangular

from ..config import GP_LOG_BOUND, INDUCING_BOX_FACTOR, SPARSE_JITTER
from ..dto.training import TrainingOptions
from ..errors import ArgumentError
from .data import Dataset, Hyperparams, check_hyperparams, default_hyperparams
from .full_gp import stable_cholesky
from .kernels import coincidence_mask, gram_matrix
from .optimize import ConvergenceReport, log_bounds, map_outputs, minimize_best

logger = logging.getLogger(__name__)

# fraction of the per-column spread used to separate filled inducing inputs
INDUCING_FILL_SPREAD = 0.1


def _sym(a: np.ndarray) -> np.ndarray:
    return 0.5 * (a + np.swapaxes(a, -1, -2))


@dataclass(frozen=True)
class SparseGpModel:
    """Sparse posterior of n_z independent outputs.

    Arrays carry a leading output axis: ``inducing_inputs`` is (n_z, M, n_g),
    ``dual_weights`` (n_z, M) and the cached matrices (n_z, M, M).
    ``variance_weight`` is ``kuu_inv - s_inv`` evaluated in factored form.
    ``input_indices`` selects the GP input from a wider model input; None
    means the GP reads the whole input.
    """

    hyperparams: Tuple[Hyperparams, ...]
    inducing_inputs: np.ndarray = field(repr=False)
    dual_weights: np.ndarray = field(repr=False)
    kuu_inv: np.ndarray = field(repr=False)
    s_inv: np.ndarray = field(repr=False)
    variance_weight: np.ndarray = field(repr=False)
    n_source: int = 0
    input_indices: Optional[Tuple[int, ...]] = None
    jitter: float = SPARSE_JITTER

    @property
    def n_outputs(self) -> int:
        return len(self.hyperparams)

    @property
    def n_inducing(self) -> int:
        return self.inducing_inputs.shape[1]

    @property
    def n_inputs(self) -> int:
        return self.inducing_inputs.shape[2]

    @property
    def signal_variances(self) -> np.ndarray:
        return np.array([h.signal_variance for h in self.hyperparams])

    @property
    def noise_variances(self) -> np.ndarray:
        return np.array([h.noise_variance for h in self.hyperparams])

    @property
    def lengthscales(self) -> np.ndarray:
        return np.array([h.lengthscales for h in self.hyperparams])

    def select_inputs(self, w: np.ndarray) -> np.ndarray:
        """GP input from a full model input (last axis)."""
        if self.input_indices is None:
            return w
        return w[..., list(self.input_indices)]

    def selector_matrix(self, n_full: int) -> np.ndarray:
        """Matrix S with ``S @ w_full`` equal to the GP input."""
        if self.input_indices is None:
            if n_full != self.n_inputs:
                raise ArgumentError(f"model input dimension {n_full} does not match GP input dimension {self.n_inputs}")
            return np.eye(n_full)
        S = np.zeros((self.n_inputs, n_full))
        S[np.arange(self.n_inputs), list(self.input_indices)] = 1.0
        return S


@dataclass
class _Posterior:
    kuu_inv: np.ndarray
    s_inv: np.ndarray
    variance_weight: np.ndarray
    alpha: np.ndarray


def _posterior(W: np.ndarray, z: np.ndarray, h: Hyperparams, Wu: np.ndarray, jitter: float, label: str) -> _Posterior:
    M = Wu.shape[0]
    gamma = h.noise_variance
    Kuu = gram_matrix(h, Wu, jitter=jitter)
    Kuf = gram_matrix(h, Wu, W, jitter=jitter)
    L, _ = stable_cholesky(Kuu, label=label)
    V = solve_triangular(L, Kuf, lower=True)
    A = V @ V.T
    LB = cholesky(np.eye(M) + A / gamma, lower=True)
    Linv = solve_triangular(L, np.eye(M), lower=True)
    Binv = cho_solve((LB, True), np.eye(M))
    reduction = cho_solve((LB, True), A) / gamma  # I - B^-1 without cancellation
    return _Posterior(
        kuu_inv=_sym(Linv.T @ Linv),
        s_inv=_sym(Linv.T @ Binv @ Linv),
        variance_weight=_sym(Linv.T @ _sym(reduction) @ Linv),
        alpha=Linv.T @ cho_solve((LB, True), V @ z) / gamma,
    )


def _as_inducing_stack(inducing, n_outputs: int, n_inputs: int) -> np.ndarray:
    Wu = np.asarray(inducing, dtype=float)
    if Wu.ndim == 2:
        Wu = np.broadcast_to(Wu, (n_outputs,) + Wu.shape)
    if Wu.ndim != 3 or Wu.shape[0] != n_outputs or Wu.shape[2] != n_inputs:
        raise ArgumentError(
            f"inducing inputs must be (M, {n_inputs}) or ({n_outputs}, M, {n_inputs}), got {Wu.shape}"
        )
    if Wu.shape[1] < 1:
        raise ArgumentError("at least one inducing input is required")
    if not np.all(np.isfinite(Wu)):
        raise ArgumentError("inducing inputs must be finite")
    return np.array(Wu)


def build_sparse_model(
    data: Dataset,
    hyperparams: Sequence[Hyperparams],
    inducing,
    input_indices: Optional[Sequence[int]] = None,
    jitter: float = SPARSE_JITTER,
) -> SparseGpModel:
    """Cache the sparse posterior for fixed hyperparameters and inducing inputs.

    Args:
        data: Training set in GP-input coordinates.
        hyperparams: One set per output.
        inducing: Shared (M, n_g) or per-output (n_z, M, n_g) inducing inputs.
        input_indices: Columns of the full model input that form the GP input.
        jitter: Kronecker jitter on coincident kernel inputs.

    Returns:
        Immutable SparseGpModel.
    """
    hyperparams = check_hyperparams(hyperparams, data.n_inputs, data.n_outputs)
    Wu = _as_inducing_stack(inducing, data.n_outputs, data.n_inputs)
    if Wu.shape[1] > data.n:
        raise ArgumentError(f"M={Wu.shape[1]} exceeds the number of training points N={data.n}")
    parts = [
        _posterior(data.inputs, data.output(i), h, Wu[i], jitter, label=f"sparse GP output {i}")
        for i, h in enumerate(hyperparams)
    ]
    return SparseGpModel(
        hyperparams=tuple(hyperparams),
        inducing_inputs=Wu,
        dual_weights=np.array([p.alpha for p in parts]),
        kuu_inv=np.array([p.kuu_inv for p in parts]),
        s_inv=np.array([p.s_inv for p in parts]),
        variance_weight=np.array([p.variance_weight for p in parts]),
        n_source=data.n,
        input_indices=None if input_indices is None else tuple(int(k) for k in input_indices),
        jitter=jitter,
    )


def sparse_predict_batch(model: SparseGpModel, queries) -> Tuple[np.ndarray, np.ndarray]:
    """Sparse posterior mean and variance, each (n_queries, n_z), at GP inputs."""
    W = np.atleast_2d(np.asarray(queries, dtype=float))
    if W.shape[1] != model.n_inputs:
        raise ArgumentError(f"query dimension {W.shape[1]} does not match GP input dimension {model.n_inputs}")
    if not np.all(np.isfinite(W)):
        raise ArgumentError("query inputs must be finite")
    means = np.empty((W.shape[0], model.n_outputs))
    variances = np.empty_like(means)
    for i, h in enumerate(model.hyperparams):
        K = gram_matrix(h, model.inducing_inputs[i], W, jitter=model.jitter)  # (M, n_q)
        means[:, i] = K.T @ model.dual_weights[i]
        reduction = np.sum(K * (model.variance_weight[i] @ K), axis=0)
        variances[:, i] = np.maximum(h.signal_variance + h.noise_variance - reduction, h.noise_variance)
    return means, variances


def sparse_predict(model: SparseGpModel, w_star) -> Tuple[np.ndarray, np.ndarray]:
    """Sparse posterior mean and variance (each length n_z) at one GP input."""
    w = np.asarray(w_star, dtype=float)
    if w.ndim != 1:
        raise ArgumentError(f"w_star must be a vector, got shape {w.shape}")
    mean, var = sparse_predict_batch(model, w[None, :])
    return mean[0], var[0]


def _vfe_terms(W: np.ndarray, z: np.ndarray, h: Hyperparams, Wu: np.ndarray, jitter: float, with_grad: bool):
    N, M = W.shape[0], Wu.shape[0]
    gamma, s2 = h.noise_variance, h.signal_variance
    Kuu0 = gram_matrix(h, Wu)
    Kuf0 = gram_matrix(h, Wu, W)
    Kuu = Kuu0 + jitter * coincidence_mask(Wu, Wu)
    Kuf = Kuf0 + jitter * coincidence_mask(Wu, W)

    L, _ = stable_cholesky(Kuu, label="vfe")
    V = solve_triangular(L, Kuf, lower=True)
    A = V @ V.T
    LB = cholesky(np.eye(M) + A / gamma, lower=True)
    cB = solve_triangular(LB, V @ z, lower=True)
    zz = z @ z
    trace_term = N * (s2 + jitter) - np.trace(A)
    value = (
        np.sum(np.log(np.diag(LB))) + 0.5 * N * np.log(gamma)
        + 0.5 * (zz / gamma - (cB @ cB) / gamma ** 2)
        + 0.5 * trace_term / gamma
    )
    if not with_grad:
        return value, None, None

    Linv = solve_triangular(L, np.eye(M), lower=True)
    kuu_inv = Linv.T @ Linv
    s_inv = Linv.T @ cho_solve((LB, True), Linv)
    c = Kuf @ z
    beta = s_inv @ c
    T = Kuf @ Kuf.T
    G_S = 0.5 * (s_inv + np.outer(beta, beta) / gamma ** 2)
    G_uu = _sym(G_S - 0.5 * kuu_inv + 0.5 * kuu_inv @ T @ kuu_inv / gamma)
    G_uf = 2.0 * G_S @ Kuf / gamma - np.outer(beta, z) / gamma ** 2 - kuu_inv @ Kuf / gamma

    dgamma = (
        -np.sum(G_S * T) / gamma ** 2 + 0.5 * N / gamma - 0.5 * zz / gamma ** 2
        + (c @ beta) / gamma ** 3 - 0.5 * trace_term / gamma ** 2
    )
    Huu = G_uu * Kuu0
    Huf = G_uf * Kuf0
    grad_h = np.empty(2 + h.n_inputs)
    grad_h[0] = np.sum(Huu) + np.sum(Huf) + 0.5 * N * s2 / gamma
    grad_h[1] = gamma * dgamma
    grad_u = np.empty_like(Wu)
    for d in range(h.n_inputs):
        lam = h.lengthscales[d]
        diff_uu = Wu[:, None, d] - Wu[None, :, d]
        diff_uf = Wu[:, None, d] - W[None, :, d]
        grad_h[2 + d] = 0.5 / lam * (np.sum(Huu * diff_uu ** 2) + np.sum(Huf * diff_uf ** 2))
        grad_u[:, d] = -(np.sum(Huf * diff_uf, axis=1) + 2.0 * np.sum(Huu * diff_uu, axis=1)) / lam
    return value, grad_h, grad_u


def vfe_objective(
    data: Dataset,
    hyperparams: Hyperparams,
    inducing: np.ndarray,
    output_index: int,
    jitter: float = SPARSE_JITTER,
) -> float:
    """Negative VFE bound of one output, without the 2 pi constant."""
    Wu = _as_inducing_stack(inducing, 1, data.n_inputs)[0]
    check_hyperparams([hyperparams], data.n_inputs, 1)
    value, _, _ = _vfe_terms(data.inputs, data.output(output_index), hyperparams, Wu, jitter, with_grad=False)
    return float(value)


def vfe_objective_with_grad(
    data: Dataset,
    hyperparams: Hyperparams,
    inducing: np.ndarray,
    output_index: int,
    jitter: float = SPARSE_JITTER,
) -> Tuple[float, np.ndarray, np.ndarray]:
    """Objective with gradients w.r.t. ``hyperparams.to_log_vector()`` and the inducing inputs."""
    Wu = _as_inducing_stack(inducing, 1, data.n_inputs)[0]
    check_hyperparams([hyperparams], data.n_inputs, 1)
    value, grad_h, grad_u = _vfe_terms(data.inputs, data.output(output_index), hyperparams, Wu, jitter, with_grad=True)
    return float(value), grad_h, grad_u


def initial_inducing(inputs: np.ndarray, M: int, seed: int) -> np.ndarray:
    """k-means++ centres of the distinct training inputs; the inputs themselves when M = N.

    With at most M distinct rows every one of them is kept and the remaining
    points are seeded perturbations of those rows.
    """
    if M >= inputs.shape[0]:
        return np.array(inputs[:M], dtype=float)
    distinct = np.unique(inputs, axis=0)
    if distinct.shape[0] <= M:
        rng = np.random.default_rng(seed)
        picks = distinct[rng.integers(distinct.shape[0], size=M - distinct.shape[0])]
        extra = picks + INDUCING_FILL_SPREAD * inputs.std(axis=0) * rng.standard_normal(picks.shape)
        return np.vstack([distinct, extra])
    if distinct.shape[0] < inputs.shape[0]:
        inputs = distinct
    centres, _ = kmeans2(inputs, M, minit="++", seed=seed)
    return np.asarray(centres, dtype=float)


def inducing_box(inputs: np.ndarray, factor: float = INDUCING_BOX_FACTOR) -> Tuple[np.ndarray, np.ndarray]:
    """Bounding box of the inputs, scaled about its centre by ``factor``."""
    lo, hi = inputs.min(axis=0), inputs.max(axis=0)
    centre, half = 0.5 * (lo + hi), 0.5 * factor * (hi - lo)
    return centre - half, centre + half


@dataclass(frozen=True)
class SparseTrainingResult:
    model: SparseGpModel
    reports: List[ConvergenceReport]


class _Packing:
    """Maps the optimizer vector to per-output hyperparameters and inducing inputs."""

    def __init__(self, hyps: List[Hyperparams], Wu: np.ndarray, opts: TrainingOptions, box):
        self.hyps = hyps
        self.Wu = Wu  # (n_sets, M, n_g)
        self.opts = opts
        self.box = box
        self.n_h = 2 + hyps[0].n_inputs

    def x0(self) -> np.ndarray:
        parts = []
        if self.opts.optimize_hyperparams:
            parts.extend(h.to_log_vector() for h in self.hyps)
        if self.opts.optimize_inducing:
            parts.append(self.Wu.ravel())
        return np.concatenate(parts) if parts else np.zeros(0)

    def bounds(self, x0: np.ndarray):
        bounds = []
        if self.opts.optimize_hyperparams:
            k = len(self.hyps) * self.n_h
            bounds.extend(log_bounds(x0[:k], GP_LOG_BOUND))
        if self.opts.optimize_inducing:
            lo, hi = self.box
            bounds.extend(list(zip(lo, hi)) * (self.Wu.shape[0] * self.Wu.shape[1]))
        return bounds

    def unpack(self, x: np.ndarray) -> Tuple[List[Hyperparams], np.ndarray]:
        offset = 0
        hyps = self.hyps
        if self.opts.optimize_hyperparams:
            hyps = [
                Hyperparams.from_log_vector(x[j * self.n_h:(j + 1) * self.n_h]) for j in range(len(self.hyps))
            ]
            offset = len(self.hyps) * self.n_h
        Wu = self.Wu
        if self.opts.optimize_inducing:
            Wu = x[offset:].reshape(self.Wu.shape)
        return hyps, Wu

    def pack_grad(self, grads_h: List[np.ndarray], grad_u: np.ndarray) -> np.ndarray:
        parts = []
        if self.opts.optimize_hyperparams:
            parts.extend(grads_h)
        if self.opts.optimize_inducing:
            parts.append(grad_u.ravel())
        return np.concatenate(parts) if parts else np.zeros(0)


def _optimize(data: Dataset, outputs: List[int], packing: _Packing, jitter: float, label: str):
    shared = packing.Wu.shape[0] == 1 and len(outputs) > 1

    def objective(x):
        hyps, Wu = packing.unpack(x)
        total, grads_h, grad_u = 0.0, [], np.zeros_like(Wu)
        for j, i in enumerate(outputs):
            u_set = 0 if shared else j
            value, gh, gu = _vfe_terms(data.inputs, data.output(i), hyps[j], Wu[u_set], jitter, with_grad=True)
            total += value
            grads_h.append(gh)
            grad_u[u_set] += gu
        return total, packing.pack_grad(grads_h, grad_u)

    x0 = packing.x0()
    if x0.size == 0:
        value, _ = objective(x0)
        report = ConvergenceReport(label, True, "nothing to optimize", 0, 1, float(value), float(value))
        return packing.unpack(x0), report
    best, report = minimize_best(
        objective, x0, packing.bounds(x0), packing.opts.max_iter, packing.opts.gtol, label=label
    )
    return packing.unpack(best), report


def train_sparse(
    data: Dataset,
    M: int,
    init: Optional[Sequence[Hyperparams]] = None,
    opts: Optional[TrainingOptions] = None,
    input_indices: Optional[Sequence[int]] = None,
    inducing=None,
) -> SparseTrainingResult:
    """Jointly optimize hyperparameters and inducing inputs of every output.

    Args:
        data: Training set in GP-input coordinates.
        M: Inducing points per output, 1 <= M <= N.
        init: Starting hyperparameters; data-driven defaults when omitted.
        opts: Training options (iteration cap, shared inducing set, workers).
        input_indices: Recorded on the model for use inside a wider model input.
        inducing: Starting inducing inputs; k-means++ centres when omitted.

    Returns:
        The trained model plus one convergence report per optimizer run.
    """
    opts = opts or TrainingOptions()
    if not 1 <= M <= data.n:
        raise ArgumentError(f"M must satisfy 1 <= M <= N={data.n}, got {M}")
    hyps = check_hyperparams(init if init is not None else default_hyperparams(data), data.n_inputs, data.n_outputs)
    if inducing is None:
        start = initial_inducing(data.inputs, M, opts.seed)
    else:
        start = np.asarray(inducing, dtype=float)
        if start.shape != (M, data.n_inputs):
            raise ArgumentError(f"initial inducing inputs must be ({M}, {data.n_inputs}), got {start.shape}")
    box = inducing_box(data.inputs)
    start = np.clip(start, box[0], box[1])
    jitter = SPARSE_JITTER

    if opts.share_inducing:
        packing = _Packing(hyps, start[None].copy(), opts, box)
        (hyps_out, Wu), report = _optimize(data, list(range(data.n_outputs)), packing, jitter, "sparse GP shared")
        reports = [report]
        inducing_out = np.broadcast_to(Wu[0], (data.n_outputs,) + Wu[0].shape)
    else:
        def train_one(i: int):
            packing = _Packing([hyps[i]], start[None].copy(), opts, box)
            return _optimize(data, [i], packing, jitter, f"sparse GP output {i}")

        results = map_outputs(train_one, data.n_outputs, opts.workers)
        hyps_out = [r[0][0][0] for r in results]
        inducing_out = np.array([r[0][1][0] for r in results])
        reports = [r[1] for r in results]

    model = build_sparse_model(data, hyps_out, inducing_out, input_indices=input_indices, jitter=jitter)
    return SparseTrainingResult(model, reports)
