"""Operator-splitting (ADMM) QP solver.

Iterates on the equilibrated problem with one sparse LU factorization of the
quasi-definite KKT matrix per step size. Residuals and infeasibility
certificates are evaluated in the original scaling.
"""

import logging
import time
from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .. import metrics
from ..config import QP_INFINITY
from ..dto.qp_settings import QpSettings
from ..errors import NumericalError
from .problem import QpProblem, QpSolution, QpStatus

logger = logging.getLogger(__name__)

RHO_MIN = 1e-6
RHO_MAX = 1e6
RHO_EQ_FACTOR = 1e3
SCALING_MIN = 1e-4
SCALING_MAX = 1e4


def _limit(v: np.ndarray) -> np.ndarray:
    v = np.where(v < SCALING_MIN, 1.0, v)
    return np.minimum(v, SCALING_MAX)


def _col_inf_norms(M: sp.csc_matrix, n: int) -> np.ndarray:
    if M.shape[0] == 0 or M.nnz == 0:
        return np.zeros(n)
    return abs(M).max(axis=0).toarray().ravel()


@dataclass
class _ScaledData:
    P: sp.csc_matrix
    q: np.ndarray
    A: sp.csc_matrix
    l: np.ndarray
    u: np.ndarray
    D: np.ndarray
    E: np.ndarray
    c: float
    l_inf: np.ndarray
    u_inf: np.ndarray

    @property
    def n(self) -> int:
        return self.q.size

    @property
    def m(self) -> int:
        return self.l.size


def _equilibrate(problem: QpProblem, iterations: int) -> _ScaledData:
    """Ruiz equilibration of the KKT matrix followed by cost scaling."""
    n, m = problem.n, problem.m
    P, A, q = problem.P.copy(), problem.A.copy(), problem.q.copy()
    D, E, c = np.ones(n), np.ones(m), 1.0
    for _ in range(iterations):
        d = 1.0 / np.sqrt(_limit(np.maximum(_col_inf_norms(P, n), _col_inf_norms(A, n))))
        e = 1.0 / np.sqrt(_limit(_col_inf_norms(A.T.tocsc(), m))) if m else np.ones(0)
        Dd = sp.diags(d)
        P = (Dd @ P @ Dd).tocsc()
        A = (sp.diags(e) @ A @ Dd).tocsc() if m else A
        q = d * q
        D, E = D * d, E * e
        gamma = 1.0 / float(_limit(np.array(max(np.mean(_col_inf_norms(P, n)), np.linalg.norm(q, np.inf)))))
        P, q, c = P * gamma, q * gamma, c * gamma

    l_inf = problem.l <= -QP_INFINITY
    u_inf = problem.u >= QP_INFINITY
    l = np.where(l_inf, -np.inf, E * problem.l)
    u = np.where(u_inf, np.inf, E * problem.u)
    return _ScaledData(P.tocsc(), q, A.tocsc(), l, u, D, E, c, l_inf, u_inf)


def _rho_vector(data: _ScaledData, rho: float) -> np.ndarray:
    vec = np.full(data.m, rho)
    vec[data.l == data.u] = RHO_EQ_FACTOR * rho
    vec[data.l_inf & data.u_inf] = RHO_MIN
    return vec


def _factorize(K: sp.spmatrix, label: str):
    try:
        return splu(K.tocsc())
    except RuntimeError as e:
        raise NumericalError(f"{label} KKT factorization failed: {e}") from e


def _kkt(data: _ScaledData, sigma: float, rho_vec: np.ndarray):
    upper = data.P + sigma * sp.eye(data.n, format="csc")
    if data.m == 0:
        return _factorize(upper, "ADMM")
    K = sp.bmat([[upper, data.A.T], [data.A, -sp.diags(1.0 / rho_vec)]], format="csc")
    return _factorize(K, "ADMM")


class _Residuals:
    """Unscaled residuals and tolerances of an iterate."""

    def __init__(self, data: _ScaledData, x, z, y, settings: QpSettings):
        Ax = data.A @ x
        Px = data.P @ x
        Aty = data.A.T @ y
        self.prim = float(np.linalg.norm((Ax - z) / data.E, np.inf)) if data.m else 0.0
        self.dual = float(np.linalg.norm((Px + data.q + Aty) / data.D, np.inf)) / data.c
        prim_scale = max(np.linalg.norm(Ax / data.E, np.inf), np.linalg.norm(z / data.E, np.inf)) if data.m else 0.0
        dual_scale = max(
            np.linalg.norm(Px / data.D, np.inf),
            np.linalg.norm(Aty / data.D, np.inf),
            np.linalg.norm(data.q / data.D, np.inf),
        ) / data.c
        self.eps_prim = settings.eps_abs + settings.eps_rel * prim_scale
        self.eps_dual = settings.eps_abs + settings.eps_rel * dual_scale
        # scaled ratios for step-size adaptation
        if data.m:
            self.prim_ratio = np.linalg.norm(Ax - z, np.inf) / (
                max(np.linalg.norm(Ax, np.inf), np.linalg.norm(z, np.inf)) + 1e-30
            )
        else:
            self.prim_ratio = 0.0
        self.dual_ratio = np.linalg.norm(Px + data.q + Aty, np.inf) / (
            max(np.linalg.norm(Px, np.inf), np.linalg.norm(Aty, np.inf), np.linalg.norm(data.q, np.inf)) + 1e-30
        )

    @property
    def converged(self) -> bool:
        return self.prim <= self.eps_prim and self.dual <= self.eps_dual


def _primal_infeasible(data: _ScaledData, delta_y: np.ndarray, eps: float) -> bool:
    dy = delta_y.copy()
    dy[data.l_inf] = np.maximum(dy[data.l_inf], 0.0)
    dy[data.u_inf] = np.minimum(dy[data.u_inf], 0.0)
    norm = np.linalg.norm(data.E * dy, np.inf)
    if norm <= eps:
        return False
    lhs = np.sum(data.u[~data.u_inf] * np.maximum(dy[~data.u_inf], 0.0)) + np.sum(
        data.l[~data.l_inf] * np.minimum(dy[~data.l_inf], 0.0)
    )
    if lhs >= -eps * norm:
        return False
    return np.linalg.norm((data.A.T @ dy) / data.D, np.inf) < eps * norm


def _dual_infeasible(data: _ScaledData, delta_x: np.ndarray, eps: float) -> bool:
    norm = np.linalg.norm(data.D * delta_x, np.inf)
    if norm <= eps:
        return False
    if data.q @ delta_x >= -data.c * eps * norm:
        return False
    if np.linalg.norm((data.P @ delta_x) / data.D, np.inf) >= data.c * eps * norm:
        return False
    Adx = (data.A @ delta_x) / data.E if data.m else np.zeros(0)
    bad_upper = ~data.u_inf & (Adx > eps * norm)
    bad_lower = ~data.l_inf & (Adx < -eps * norm)
    return not np.any(bad_upper | bad_lower)


def _active_set(data: _ScaledData, z, y):
    return np.nonzero(z - data.l < -y)[0], np.nonzero(data.u - z < y)[0]


def _polish(data: _ScaledData, x, z, y, settings: QpSettings):
    """Solve the equality QP on the guessed active set; returns (x, z, y)."""
    low, upp = _active_set(data, z, y)
    active = np.concatenate([low, upp])
    A_red = data.A.tocsr()[active].tocsc()
    n, n_act = data.n, active.size
    delta = settings.delta
    if n_act:
        K = sp.bmat(
            [[data.P + delta * sp.eye(n), A_red.T], [A_red, -delta * sp.eye(n_act)]], format="csc"
        )
        K0 = sp.bmat([[data.P, A_red.T], [A_red, None]], format="csc")
    else:
        K = (data.P + delta * sp.eye(n)).tocsc()
        K0 = data.P
    rhs = np.concatenate([-data.q, data.l[low], data.u[upp]])
    lu = _factorize(K, "polishing")
    sol = lu.solve(rhs)
    for _ in range(settings.polish_refine_iter):
        sol = sol + lu.solve(rhs - K0 @ sol)
    x_pol = sol[:n]
    y_pol = np.zeros(data.m)
    y_pol[active] = sol[n:]
    return x_pol, data.A @ x_pol, y_pol


def _polished_residuals(data: _ScaledData, x, z, y):
    violation = np.maximum(data.l - z, 0.0) + np.maximum(z - data.u, 0.0)
    prim = float(np.linalg.norm(violation / data.E, np.inf)) if data.m else 0.0
    dual = float(np.linalg.norm((data.P @ x + data.q + data.A.T @ y) / data.D, np.inf)) / data.c
    return prim, dual


def _accepted_iterate(
    data: _ScaledData, x, z, y, residuals: _Residuals, settings: QpSettings, polish: bool
):
    """Iterate whose residuals are below eps_abs, polished when that helps; None if neither is."""
    eps = settings.eps_abs
    raw_ok = residuals.prim < eps and residuals.dual < eps
    if polish:
        try:
            x_pol, z_pol, y_pol = _polish(data, x, z, y, settings)
        except NumericalError as e:
            logger.debug(f"polishing skipped: {e}")
        else:
            prim_pol, dual_pol = _polished_residuals(data, x_pol, z_pol, y_pol)
            improved = (
                (prim_pol < residuals.prim and dual_pol < residuals.dual)
                or (prim_pol < residuals.prim and residuals.dual < 1e-10)
                or (dual_pol < residuals.dual and residuals.prim < 1e-10)
            )
            if prim_pol < eps and dual_pol < eps and (improved or not raw_ok):
                return x_pol, z_pol, y_pol, prim_pol, dual_pol, True
    if raw_ok:
        return x, z, y, residuals.prim, residuals.dual, False
    return None


def qp_solve(
    problem: QpProblem, warm_start: Optional[QpSolution] = None, settings: Optional[QpSettings] = None
) -> QpSolution:
    """Solve a convex QP by ADMM.

    Infeasibility is reported through the status, never raised. ``solved``
    means both reported residuals are below ``settings.eps_abs``.

    Args:
        problem: QP data.
        warm_start: Previous solution of a problem with the same dimensions.
        settings: Solver options; defaults from :class:`QpSettings`.

    Raises:
        NumericalError: The KKT matrix could not be factorized.
    """
    settings = settings or QpSettings()
    started = time.perf_counter()
    data = _equilibrate(problem, settings.scaling_iter)
    n, m = data.n, data.m
    sigma, alpha = settings.sigma, settings.alpha

    rho = settings.rho
    use_warm = (
        settings.warm_start
        and warm_start is not None
        and warm_start.x.size == n
        and warm_start.y.size == m
    )
    if use_warm:
        x = warm_start.x / data.D
        y = data.c * warm_start.y / data.E if m else np.zeros(0)
        z = np.clip(data.A @ x, data.l, data.u) if m else np.zeros(0)
        rho = warm_start.rho or rho
    else:
        x, z, y = np.zeros(n), np.zeros(m), np.zeros(m)

    rho_vec = _rho_vector(data, rho)
    lu = _kkt(data, sigma, rho_vec)
    status = QpStatus.MAX_ITER
    residuals = None
    polished_on = None
    iteration = 0
    for iteration in range(1, settings.max_iter + 1):
        x_prev, y_prev = x, y
        if m:
            sol = lu.solve(np.concatenate([sigma * x - data.q, z - y / rho_vec]))
            x_tilde, nu = sol[:n], sol[n:]
            z_tilde = z + (nu - y) / rho_vec
            x = alpha * x_tilde + (1.0 - alpha) * x
            z_relaxed = alpha * z_tilde + (1.0 - alpha) * z
            z_next = np.clip(z_relaxed + y / rho_vec, data.l, data.u)
            y = y + rho_vec * (z_relaxed - z_next)
            z = z_next
        else:
            x_tilde = lu.solve(sigma * x - data.q)
            x = alpha * x_tilde + (1.0 - alpha) * x

        if iteration % settings.check_interval and iteration != settings.max_iter:
            continue
        residuals = _Residuals(data, x, z, y, settings)
        if residuals.converged:
            # re-polish only when the guessed active set moved
            active = np.concatenate(_active_set(data, z, y))
            polish = settings.polish and (polished_on is None or not np.array_equal(active, polished_on))
            if polish:
                polished_on = active
            accepted = _accepted_iterate(data, x, z, y, residuals, settings, polish)
            if accepted is not None:
                x, z, y, prim, dual, polished = accepted
                status = QpStatus.SOLVED
                break
        if m and _primal_infeasible(data, y - y_prev, settings.eps_prim_inf):
            status = QpStatus.PRIMAL_INFEASIBLE
            break
        if _dual_infeasible(data, x - x_prev, settings.eps_dual_inf):
            status = QpStatus.DUAL_INFEASIBLE
            break

        if settings.adaptive_rho and m and iteration % settings.adaptive_rho_interval == 0:
            ratio = np.sqrt(residuals.prim_ratio / (residuals.dual_ratio + 1e-30))
            new_rho = float(np.clip(rho * ratio, RHO_MIN, RHO_MAX))
            if new_rho > rho * settings.adaptive_rho_tolerance or new_rho < rho / settings.adaptive_rho_tolerance:
                logger.debug(f"ADMM iteration {iteration}: rho {rho:.3e} -> {new_rho:.3e}")
                rho = new_rho
                rho_vec = _rho_vector(data, rho)
                lu = _kkt(data, sigma, rho_vec)

    if status != QpStatus.SOLVED:
        prim, dual, polished = residuals.prim, residuals.dual, False

    metrics.QP_SOLVES.labels(status=status.value).inc()
    if status != QpStatus.SOLVED:
        logger.warning(
            f"QP finished with status {status.value} after {iteration} iterations "
            f"(primal {prim:.2e}, dual {dual:.2e})"
        )
    x_out = data.D * x
    y_out = data.E * y / data.c if m else np.zeros(0)
    return QpSolution(
        x=x_out,
        y=y_out,
        status=status,
        iterations=iteration,
        primal_residual=prim,
        dual_residual=dual,
        objective=problem.objective(x_out),
        polished=polished,
        rho=rho,
        solve_time=time.perf_counter() - started,
    )
