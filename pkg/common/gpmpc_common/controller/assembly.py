"""Multi-stage LPV-MPC quadratic program.

Decision vector ``[u(0..N-1) | mu_x(1..N) | vec Sigma_x(1..N) | slack]``; the
covariance block exists in ``cov`` mode only, the slack block only for soft
state constraints. ``mu_x(0)`` is the measured state and ``Sigma_x(0) = 0``.
"""

import logging
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np
import scipy.sparse as sp

from ..dto.controller_config import ControllerConfig
from ..errors import ArgumentError, InfeasibleTighteningError
from ..lpv import LpvStep, unvec, vec
from ..qp import QpProblem
from .cost import tighten_halfspace

logger = logging.getLogger(__name__)

# normals closer than this to exact negatives are merged into one two-sided row
PAIR_TOLERANCE = 1e-12


@dataclass(frozen=True)
class MpcLayout:
    """Column layout of the MPC decision vector."""

    horizon: int
    n_x: int
    n_u: int
    with_sigma: bool
    n_slack: int = 0

    @property
    def mu_offset(self) -> int:
        return self.horizon * self.n_u

    @property
    def sigma_offset(self) -> int:
        return self.mu_offset + self.horizon * self.n_x

    @property
    def slack_offset(self) -> int:
        return self.sigma_offset + (self.horizon * self.n_x**2 if self.with_sigma else 0)

    @property
    def n_var(self) -> int:
        return self.slack_offset + self.n_slack

    def u_col(self, i: int) -> int:
        return i * self.n_u

    def mu_col(self, i: int) -> int:
        """First column of mu_x(i), i = 1..N."""
        return self.mu_offset + (i - 1) * self.n_x

    def sigma_col(self, i: int) -> int:
        return self.sigma_offset + (i - 1) * self.n_x**2

    def inputs(self, z: np.ndarray) -> np.ndarray:
        return z[: self.mu_offset].reshape(self.horizon, self.n_u)

    def means(self, z: np.ndarray, x0) -> np.ndarray:
        """(N + 1, n_x) mean trajectory including the measured state."""
        mu = z[self.mu_offset : self.sigma_offset].reshape(self.horizon, self.n_x)
        return np.vstack([np.asarray(x0, dtype=float).reshape(1, -1), mu])

    def covariances(self, z: np.ndarray) -> Optional[np.ndarray]:
        if not self.with_sigma:
            return None
        sig = unvec(z[self.sigma_offset : self.slack_offset].reshape(self.horizon, self.n_x**2), self.n_x)
        sig = 0.5 * (sig + np.swapaxes(sig, -1, -2))
        return np.concatenate([np.zeros((1, self.n_x, self.n_x)), sig])

    def slack(self, z: np.ndarray) -> np.ndarray:
        return z[self.slack_offset :]


@dataclass(frozen=True)
class MpcQp:
    """Assembled QP plus the bookkeeping needed to read its solution."""

    problem: QpProblem
    layout: MpcLayout
    x0: np.ndarray = field(repr=False)
    tightened_bounds: np.ndarray = field(repr=False)
    soft: bool = False


def pair_halfspaces(alpha: np.ndarray) -> List[Tuple[int, Optional[int]]]:
    """Group ``alpha_j' v <= b_j`` rows into (upper, lower) pairs with opposite normals."""
    used = set()
    pairs = []
    for j in range(alpha.shape[0]):
        if j in used:
            continue
        used.add(j)
        partner = None
        for k in range(j + 1, alpha.shape[0]):
            if k not in used and np.max(np.abs(alpha[k] + alpha[j])) <= PAIR_TOLERANCE:
                partner = k
                used.add(k)
                break
        pairs.append((j, partner))
    return pairs


class _RowBuilder:
    """Accumulates sparse constraint rows ``l <= A z <= u``."""

    def __init__(self, n_var: int):
        self.n_var = n_var
        self.rows, self.cols, self.vals = [], [], []
        self.lower, self.upper = [], []

    @property
    def m(self) -> int:
        return len(self.lower)

    def add(self, blocks: Sequence[Tuple[int, np.ndarray]], lower, upper):
        """Add ``len(lower)`` rows; ``blocks`` are (first column, dense coefficients)."""
        lower = np.atleast_1d(np.asarray(lower, dtype=float))
        upper = np.atleast_1d(np.asarray(upper, dtype=float))
        first = self.m
        for col, coeffs in blocks:
            coeffs = np.atleast_2d(coeffs)
            r, c = np.nonzero(coeffs)
            self.rows.append(first + r)
            self.cols.append(col + c)
            self.vals.append(coeffs[r, c])
        self.lower.extend(lower)
        self.upper.extend(upper)

    def matrix(self) -> sp.csc_matrix:
        if not self.rows:
            return sp.csc_matrix((self.m, self.n_var))
        return sp.csc_matrix(
            (np.concatenate(self.vals), (np.concatenate(self.rows), np.concatenate(self.cols))),
            shape=(self.m, self.n_var),
        )


def _lower_triangle(n: int):
    """Column-major vec indices of entries (r, c) with r >= c, and of their transposes."""
    r, c = np.tril_indices(n)
    return c * n + r, r * n + c


def _state_rows(cfg: ControllerConfig, sigma_schedule: np.ndarray, soft: bool):
    """Tightened two-sided rows per prediction step 1..N.

    Returns the pairing, the (N, n_pairs, 2) tightened (lower, upper) bounds
    and the (N, n_h) tightened ``b`` of every half-space.
    """
    alpha, b = cfg.state_halfspaces()
    pairs = pair_halfspaces(alpha)
    N = cfg.horizon
    tightened = np.zeros((N, alpha.shape[0]))
    bounds = np.zeros((N, len(pairs), 2))
    for i in range(1, N + 1):
        for j in range(alpha.shape[0]):
            tightened[i - 1, j] = tighten_halfspace(alpha[j], b[j], sigma_schedule[i], cfg.p_x)
        for p, (j, k) in enumerate(pairs):
            low = -tightened[i - 1, k] if k is not None else -np.inf
            upp = tightened[i - 1, j]
            if low > upp and not soft:
                raise InfeasibleTighteningError(
                    f"tightened state constraints {j} and {k} leave no room at step {i} "
                    f"({low:.4g} > {upp:.4g})",
                    step=i,
                    halfspace=j,
                )
            bounds[i - 1, p] = low, upp
    return alpha, pairs, bounds, tightened


def qp_assemble_mpc(
    steps: Sequence[LpvStep],
    cfg: ControllerConfig,
    x0,
    u_prev,
    sigma_schedule,
    r_traj,
    soft: bool = False,
) -> MpcQp:
    """Build the LPV-MPC QP for one scheduling iterate.

    Args:
        steps: One factorized step per prediction step, all around (x0, u_prev).
        cfg: Controller configuration; ``covariance_mode`` must match the steps.
        x0: Measured state.
        u_prev: Previously applied input, the anchor of the factorization.
        sigma_schedule: (N + 1, n_x, n_x) scheduled covariances; tightening
            at step i uses ``sigma_schedule[i]``, the precov trace term too.
        r_traj: (N + 1, n_x) reference.
        soft: Relax tightened state rows with penalized nonnegative slack.

    Raises:
        ArgumentError: Inconsistent dimensions or modes.
        InfeasibleTighteningError: A tightened state pair crosses (hard mode).
    """
    N, n_x, n_u = cfg.horizon, cfg.n_x, cfg.n_u
    x0 = np.asarray(x0, dtype=float).reshape(-1)
    u_prev = np.asarray(u_prev, dtype=float).reshape(-1)
    sigma_schedule = np.asarray(sigma_schedule, dtype=float)
    r_traj = np.asarray(r_traj, dtype=float)
    if len(steps) != N:
        raise ArgumentError(f"need {N} factorized steps, got {len(steps)}")
    if x0.size != n_x or u_prev.size != n_u:
        raise ArgumentError(f"x0/u_prev must have {n_x}/{n_u} entries")
    if sigma_schedule.shape != (N + 1, n_x, n_x) or r_traj.shape != (N + 1, n_x):
        raise ArgumentError(
            f"schedule covariances {sigma_schedule.shape} and reference {r_traj.shape} must span N + 1 = {N + 1} steps"
        )
    with_sigma = cfg.covariance_mode == "cov"
    if any(step.covariance_mode != cfg.covariance_mode for step in steps):
        raise ArgumentError(f"steps were not factorized in {cfg.covariance_mode!r} mode")

    alpha_x, pairs, state_bounds, tightened = _state_rows(cfg, sigma_schedule, soft)
    n_slack = N * len(pairs) if soft else 0
    layout = MpcLayout(N, n_x, n_u, with_sigma, n_slack)
    builder = _RowBuilder(layout.n_var)

    eye_x = np.eye(n_x)
    low_idx, up_idx = _lower_triangle(n_x)
    for i, step in enumerate(steps):
        # mean dynamics: mu(i+1) - A mu(i) - B u(i) - C vecSigma(i) = const
        rhs = step.affine_theta - step.A_theta @ step.anchor.x_meas - step.B_theta @ step.anchor.u_prev
        blocks = [(layout.mu_col(i + 1), eye_x), (layout.u_col(i), -step.B_theta)]
        if i == 0:
            rhs = rhs + step.A_theta @ x0
        else:
            blocks.append((layout.mu_col(i), -step.A_theta))
        if with_sigma:
            if i > 0:
                blocks.append((layout.sigma_col(i), -step.C_theta))
        else:
            rhs = rhs + step.theta_sigma_term
        builder.add(blocks, rhs, rhs)

        if not with_sigma:
            continue
        # covariance dynamics on the lower triangle, symmetrized
        A_z = 0.5 * (step.A_zeta[low_idx] + step.A_zeta[up_idx])
        B_z = 0.5 * (step.B_zeta[low_idx] + step.B_zeta[up_idx])
        C_z = 0.5 * (step.C_zeta[low_idx] + step.C_zeta[up_idx])
        affine = 0.5 * (step.affine_zeta[low_idx] + step.affine_zeta[up_idx])
        rhs = affine - A_z @ step.anchor.x_meas - B_z @ step.anchor.u_prev
        select = np.zeros((low_idx.size, n_x * n_x))
        select[np.arange(low_idx.size), low_idx] = 1.0
        blocks = [(layout.sigma_col(i + 1), select), (layout.u_col(i), -B_z)]
        if i == 0:
            rhs = rhs + A_z @ x0
        else:
            blocks += [(layout.mu_col(i), -A_z), (layout.sigma_col(i), -C_z)]
        builder.add(blocks, rhs, rhs)

        strict = low_idx != up_idx
        n_sym = int(strict.sum())
        if n_sym:
            sym = np.zeros((n_sym, n_x * n_x))
            sym[np.arange(n_sym), up_idx[strict]] = 1.0
            sym[np.arange(n_sym), low_idx[strict]] = -1.0
            builder.add([(layout.sigma_col(i + 1), sym)], np.zeros(n_sym), np.zeros(n_sym))

    for i in range(1, N + 1):
        for p, (j, _) in enumerate(pairs):
            low, upp = state_bounds[i - 1, p]
            row = alpha_x[j][None, :]
            if not soft:
                builder.add([(layout.mu_col(i), row)], low, upp)
                continue
            s_col = layout.slack_offset + (i - 1) * len(pairs) + p
            builder.add([(layout.mu_col(i), row), (s_col, np.array([[-1.0]]))], -np.inf, upp)
            if np.isfinite(low):
                builder.add([(layout.mu_col(i), row), (s_col, np.array([[1.0]]))], low, np.inf)
    if soft:
        builder.add([(layout.slack_offset, np.eye(n_slack))], np.zeros(n_slack), np.full(n_slack, np.inf))

    alpha_u, b_u = cfg.input_halfspaces()
    for j, k in pair_halfspaces(alpha_u):
        low = -b_u[k] if k is not None else -np.inf
        if low > b_u[j]:
            raise ArgumentError(f"input polytope is empty along half-spaces {j} and {k}")
        for i in range(N):
            builder.add([(layout.u_col(i), alpha_u[j][None, :])], low, b_u[j])

    P, q, offset = _cost(cfg, layout, x0, sigma_schedule, r_traj)
    problem = QpProblem(
        P=P,
        q=q,
        A=builder.matrix(),
        l=np.asarray(builder.lower),
        u=np.asarray(builder.upper),
        objective_offset=offset,
    )
    soft_note = " (soft)" if soft else ""
    logger.debug(f"assembled {cfg.covariance_mode}-mode MPC QP: {problem.n} variables, {problem.m} rows{soft_note}")
    return MpcQp(problem=problem, layout=layout, x0=x0, tightened_bounds=tightened, soft=soft)


def _cost(cfg: ControllerConfig, layout: MpcLayout, x0, sigma_schedule, r_traj):
    """(P, q, constant) with 1/2 z'Pz + q'z + constant equal to the expected tracking cost."""
    Q, R = cfg.weights()
    u_ref = cfg.input_reference()
    N = layout.horizon
    blocks = [sp.kron(sp.eye(N), 2.0 * R), sp.kron(sp.eye(N), 2.0 * Q)]
    q_u = np.tile(-2.0 * R @ u_ref, N)
    q_mu = (-2.0 * r_traj[1:] @ Q).reshape(-1)
    parts = [q_u, q_mu]

    err0 = x0 - r_traj[0]
    offset = float(err0 @ Q @ err0)
    offset += float(np.einsum("ij,jk,ik->", r_traj[1:], Q, r_traj[1:]))
    offset += N * float(u_ref @ R @ u_ref)
    if layout.with_sigma:
        n_sig = N * layout.n_x**2
        blocks.append(sp.csc_matrix((n_sig, n_sig)))
        parts.append(np.tile(vec(Q.T), N))
    else:
        offset += float(np.einsum("jk,ikj->", Q, sigma_schedule[1:]))
    if layout.n_slack:
        blocks.append(sp.csc_matrix((layout.n_slack, layout.n_slack)))
        parts.append(np.full(layout.n_slack, cfg.slack_penalty))
    P = sp.block_diag(blocks, format="csc")
    return P, np.concatenate(parts), offset
