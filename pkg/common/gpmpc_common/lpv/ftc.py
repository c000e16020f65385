"""Exact LPV form of the moment maps by path-integrated Jacobians.

For g in {theta, zeta}, anchor rho~ and query rho,

    g(rho) = g(rho~) + [int_0^1 dg/drho(rho~ + lam (rho - rho~)) dlam] (rho - rho~),

with the integral taken by composite Simpson quadrature. Jacobians come from
complex-step directional derivatives, all directions of one node evaluated in
a single batched call.
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from ..config import COMPLEX_STEP, QUAD_NODES
from ..errors import ArgumentError, NumericalError
from .maps import StepMaps
from .quadrature import simpson_nodes_weights
from .scheduling import AnchorPoint, SchedulingPoint, unvec, vec

logger = logging.getLogger(__name__)

COVARIANCE_MODES = ("precov", "cov")


def _split_columns(matrix: np.ndarray, n_x: int, n_u: int):
    return matrix[:, :n_x], matrix[:, n_x : n_x + n_u], matrix[:, n_x + n_u :]


@dataclass(frozen=True)
class MapJacobians:
    """dtheta/drho (n_x, n_rho) and dvec(zeta)/drho (n_x**2, n_rho) at one point."""

    theta: np.ndarray
    zeta: Optional[np.ndarray]
    n_x: int
    n_u: int

    @property
    def A_theta(self) -> np.ndarray:
        return _split_columns(self.theta, self.n_x, self.n_u)[0]

    @property
    def B_theta(self) -> np.ndarray:
        return _split_columns(self.theta, self.n_x, self.n_u)[1]

    @property
    def C_theta(self) -> np.ndarray:
        return _split_columns(self.theta, self.n_x, self.n_u)[2]

    @property
    def A_zeta(self) -> np.ndarray:
        return _split_columns(self.zeta, self.n_x, self.n_u)[0]

    @property
    def B_zeta(self) -> np.ndarray:
        return _split_columns(self.zeta, self.n_x, self.n_u)[1]

    @property
    def C_zeta(self) -> np.ndarray:
        return _split_columns(self.zeta, self.n_x, self.n_u)[2]


@dataclass(frozen=True)
class LpvStep:
    """Affine-in-deviation model of one prediction step.

    In ``precov`` mode only the theta blocks for (mu_x, u) are kept and the
    covariance contribution is the constant ``theta_sigma_term`` for the
    scheduled covariance of ``query``; the zeta blocks are None.
    """

    A_theta: np.ndarray
    B_theta: np.ndarray
    C_theta: Optional[np.ndarray]
    A_zeta: Optional[np.ndarray]
    B_zeta: Optional[np.ndarray]
    C_zeta: Optional[np.ndarray]
    affine_theta: np.ndarray
    affine_zeta: Optional[np.ndarray]
    theta_sigma_term: np.ndarray
    anchor: AnchorPoint = field(repr=False)
    query: SchedulingPoint = field(repr=False)
    covariance_mode: str = "cov"
    n_nodes: int = 1

    @property
    def n_x(self) -> int:
        return self.A_theta.shape[0]

    def theta(self, mu_x, u, sigma_x=None) -> np.ndarray:
        """Next mean; ``sigma_x=None`` uses the scheduled covariance."""
        out = (
            self.affine_theta
            + self.A_theta @ (np.asarray(mu_x) - self.anchor.x_meas)
            + self.B_theta @ (np.asarray(u) - self.anchor.u_prev)
        )
        if sigma_x is None:
            return out + self.theta_sigma_term
        if self.C_theta is None:
            raise ArgumentError("precov factorization has no covariance block")
        return out + self.C_theta @ vec(np.asarray(sigma_x))

    def zeta(self, mu_x, u, sigma_x) -> np.ndarray:
        """Next covariance as an (n_x, n_x) matrix; ``cov`` mode only."""
        if self.A_zeta is None:
            raise ArgumentError("precov factorization does not carry the covariance map")
        out = (
            self.affine_zeta
            + self.A_zeta @ (np.asarray(mu_x) - self.anchor.x_meas)
            + self.B_zeta @ (np.asarray(u) - self.anchor.u_prev)
            + self.C_zeta @ vec(np.asarray(sigma_x))
        )
        return unvec(out, self.n_x)


def _node_derivatives(
    maps: StepMaps,
    points: np.ndarray,
    nodes: np.ndarray,
    directions: np.ndarray,
    with_zeta: bool,
    step_size: float,
):
    """Primal values and directional derivatives at every node.

    Returns theta (K, n_x), zeta (K, n_x**2) or None, dtheta (K, n_x, n_dir)
    and dzeta (K, n_x**2, n_dir) or None.
    """
    n_x, n_u = maps.n_x, maps.n_u
    thetas, zetas, d_thetas, d_zetas = [], [], [], []
    for lam, point in zip(nodes, points):
        rho = point + 1j * step_size * directions  # (n_dir, n_rho)
        try:
            theta, zeta = maps.evaluate(
                rho[:, :n_x], rho[:, n_x : n_x + n_u], unvec(rho[:, n_x + n_u :], n_x), with_zeta=with_zeta
            )
        except (ArithmeticError, np.linalg.LinAlgError) as e:
            raise NumericalError(f"moment map evaluation failed at lambda={lam:.4g}: {e}", node=float(lam)) from e
        if not np.all(np.isfinite(theta)) or (zeta is not None and not np.all(np.isfinite(zeta))):
            raise NumericalError(f"non-finite moment map value at lambda={lam:.4g}", node=float(lam))
        thetas.append(theta[0].real)
        d_thetas.append(theta.imag.T / step_size)
        if with_zeta:
            zetas.append(zeta[0].real)
            d_zetas.append(zeta.imag.T / step_size)
    if not with_zeta:
        return np.array(thetas), None, np.array(d_thetas), None
    return np.array(thetas), np.array(zetas), np.array(d_thetas), np.array(d_zetas)


def jacobians(
    maps: StepMaps, point: SchedulingPoint, with_zeta: bool = True, step_size: float = COMPLEX_STEP
) -> MapJacobians:
    """Jacobians of theta and vec(zeta) with respect to rho at one scheduling point."""
    if point.n_x != maps.n_x or point.n_u != maps.n_u:
        raise ArgumentError(f"point has (n_x, n_u) = ({point.n_x}, {point.n_u}), maps expect ({maps.n_x}, {maps.n_u})")
    n_rho = point.rho.size
    _, _, d_theta, d_zeta = _node_derivatives(
        maps, point.rho[None, :], np.zeros(1), np.eye(n_rho), with_zeta, step_size
    )
    return MapJacobians(d_theta[0], d_zeta[0] if with_zeta else None, maps.n_x, maps.n_u)


def ftc_factorize(
    maps: StepMaps,
    anchor: AnchorPoint,
    query: SchedulingPoint,
    quad_nodes: int = QUAD_NODES,
    covariance_mode: str = "cov",
    step_size: float = COMPLEX_STEP,
) -> LpvStep:
    """Factorize theta (and zeta) along the segment from ``anchor`` to ``query``.

    Raises:
        ArgumentError: Dimension mismatch, bad mode or node count.
        NumericalError: A map evaluation failed; ``node`` holds lambda.
    """
    if covariance_mode not in COVARIANCE_MODES:
        raise ArgumentError(f"unknown covariance mode {covariance_mode!r}, expected one of {COVARIANCE_MODES}")
    n_x, n_u = maps.n_x, maps.n_u
    if anchor.x_meas.size != n_x or anchor.u_prev.size != n_u or query.n_x != n_x or query.n_u != n_u:
        raise ArgumentError(f"anchor/query dimensions do not match maps (n_x={n_x}, n_u={n_u})")
    n_lin = n_x + n_u
    n_rho = n_lin + n_x * n_x

    rho_a, rho_q = anchor.rho, query.rho
    delta = rho_q - rho_a
    if np.any(delta != 0.0):
        nodes, weights = simpson_nodes_weights(quad_nodes)
    else:
        nodes, weights = np.zeros(1), np.ones(1)
    points = rho_a + nodes[:, None] * delta

    cov_mode = covariance_mode == "cov"
    if cov_mode:
        directions = np.eye(n_rho)
    else:
        sigma_direction = np.concatenate([np.zeros(n_lin), vec(query.sigma_x)])
        directions = np.vstack([np.eye(n_lin, n_rho), sigma_direction])
    theta_0, zeta_0, d_theta, d_zeta = _node_derivatives(maps, points, nodes, directions, cov_mode, step_size)

    int_theta = np.einsum("k,kij->ij", weights, d_theta)
    A_theta, B_theta = int_theta[:, :n_x], int_theta[:, n_x:n_lin]
    if not cov_mode:
        return LpvStep(
            A_theta=A_theta,
            B_theta=B_theta,
            C_theta=None,
            A_zeta=None,
            B_zeta=None,
            C_zeta=None,
            affine_theta=theta_0[0],
            affine_zeta=None,
            theta_sigma_term=int_theta[:, n_lin],
            anchor=anchor,
            query=query,
            covariance_mode=covariance_mode,
            n_nodes=nodes.size,
        )
    int_zeta = np.einsum("k,kij->ij", weights, d_zeta)
    C_theta = int_theta[:, n_lin:]
    return LpvStep(
        A_theta=A_theta,
        B_theta=B_theta,
        C_theta=C_theta,
        A_zeta=int_zeta[:, :n_x],
        B_zeta=int_zeta[:, n_x:n_lin],
        C_zeta=int_zeta[:, n_lin:],
        affine_theta=theta_0[0],
        affine_zeta=zeta_0[0],
        theta_sigma_term=C_theta @ vec(query.sigma_x),
        anchor=anchor,
        query=query,
        covariance_mode=covariance_mode,
        n_nodes=nodes.size,
    )


def factorize_horizon(
    maps: StepMaps,
    anchor: AnchorPoint,
    schedule: Sequence[SchedulingPoint],
    quad_nodes: int = QUAD_NODES,
    covariance_mode: str = "cov",
    workers: int = 1,
) -> List[LpvStep]:
    """One LpvStep per prediction step, all sharing ``anchor``."""

    def factorize(i: int) -> LpvStep:
        return ftc_factorize(maps, anchor, schedule[i], quad_nodes, covariance_mode)

    if workers <= 1 or len(schedule) <= 1:
        return [factorize(i) for i in range(len(schedule))]
    with ThreadPoolExecutor(max_workers=min(workers, len(schedule))) as pool:
        return list(pool.map(factorize, range(len(schedule))))


def lpv_rollout(
    steps: Sequence[LpvStep], x_k, u_prev, inputs
) -> Tuple[np.ndarray, Optional[np.ndarray]]:
    """Mean and covariance trajectories of the LPV model for fixed inputs.

    Starts from the deterministic state ``x_k``. Returns means (N + 1, n_x)
    and covariances (N + 1, n_x, n_x); covariances are None for ``precov``
    steps, whose covariance is taken from the schedule.
    """
    x_k = np.asarray(x_k, dtype=float).reshape(-1)
    u_prev = np.asarray(u_prev, dtype=float).reshape(-1)
    inputs = np.asarray(inputs, dtype=float)
    if inputs.shape[0] != len(steps):
        raise ArgumentError(f"need {len(steps)} inputs, got {inputs.shape[0]}")
    for step in steps:
        if not (np.array_equal(step.anchor.x_meas, x_k) and np.array_equal(step.anchor.u_prev, u_prev)):
            raise ArgumentError("every step must be factorized around the anchor (x_k, u_prev)")

    n_x = x_k.size
    means = [x_k]
    with_cov = all(step.covariance_mode == "cov" for step in steps)
    covs = [np.zeros((n_x, n_x))]
    for step, u in zip(steps, inputs):
        if with_cov:
            sigma = covs[-1]
            means.append(step.theta(means[-1], u, sigma))
            nxt = step.zeta(means[-2], u, sigma)
            covs.append(0.5 * (nxt + nxt.T))
        else:
            means.append(step.theta(means[-1], u))
    return np.array(means), (np.array(covs) if with_cov else None)
