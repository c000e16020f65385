"""Convex QP data: minimize 1/2 x'Px + q'x subject to l <= Ax <= u."""

from dataclasses import dataclass, field
from enum import Enum
from typing import Optional

import numpy as np
import scipy.sparse as sp

from ..config import QP_INFINITY
from ..errors import ArgumentError

SYMMETRY_TOLERANCE = 1e-9
# dense eigenvalue check of P only below this size; larger P is checked on its diagonal
DENSE_PSD_CHECK_MAX = 400


class QpStatus(str, Enum):
    SOLVED = "solved"
    MAX_ITER = "max_iter"
    PRIMAL_INFEASIBLE = "primal_infeasible"
    DUAL_INFEASIBLE = "dual_infeasible"


@dataclass(frozen=True)
class QpProblem:
    """Immutable QP in CSC form.

    Bounds beyond ``QP_INFINITY`` are treated as infinite; equality rows have
    ``l == u``. ``objective_offset`` is a constant added to the reported
    objective (used by the MPC assembly for dropped constant cost terms).
    """

    P: sp.csc_matrix = field(repr=False)
    q: np.ndarray = field(repr=False)
    A: sp.csc_matrix = field(repr=False)
    l: np.ndarray = field(repr=False)
    u: np.ndarray = field(repr=False)
    objective_offset: float = 0.0

    def __post_init__(self):
        P = sp.csc_matrix(self.P, dtype=float)
        A = sp.csc_matrix(self.A, dtype=float)
        q = np.asarray(self.q, dtype=float).reshape(-1)
        l = np.clip(np.asarray(self.l, dtype=float).reshape(-1), -QP_INFINITY, QP_INFINITY)
        u = np.clip(np.asarray(self.u, dtype=float).reshape(-1), -QP_INFINITY, QP_INFINITY)
        n = q.size
        if n == 0:
            raise ArgumentError("QP needs at least one variable")
        if P.shape != (n, n):
            raise ArgumentError(f"P must be {n}x{n}, got {P.shape}")
        if A.shape[1] != n or l.size != A.shape[0] or u.size != A.shape[0]:
            raise ArgumentError(f"A {A.shape}, l {l.shape}, u {u.shape} inconsistent with n={n}")
        if not (np.all(np.isfinite(q)) and np.all(np.isfinite(P.data)) and np.all(np.isfinite(A.data))):
            raise ArgumentError("QP data must be finite")
        if np.any(np.isnan(l)) or np.any(np.isnan(u)):
            raise ArgumentError("bounds must not be NaN")
        if np.any(l > u):
            rows = np.nonzero(l > u)[0]
            raise ArgumentError(f"lower bound exceeds upper bound on rows {rows[:10].tolist()}")
        asym = abs(P - P.T)
        if asym.nnz and asym.max() > SYMMETRY_TOLERANCE:
            raise ArgumentError("P must be symmetric")
        if n <= DENSE_PSD_CHECK_MAX and n:
            if np.linalg.eigvalsh(P.toarray()).min() < -SYMMETRY_TOLERANCE:
                raise ArgumentError("P must be positive semidefinite")
        elif np.any(P.diagonal() < -SYMMETRY_TOLERANCE):
            raise ArgumentError("P must be positive semidefinite")
        P.sort_indices()
        A.sort_indices()
        object.__setattr__(self, "P", P)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "l", l)
        object.__setattr__(self, "u", u)

    @property
    def n(self) -> int:
        return self.q.size

    @property
    def m(self) -> int:
        return self.l.size

    def objective(self, x: np.ndarray) -> float:
        return float(0.5 * x @ (self.P @ x) + self.q @ x + self.objective_offset)


@dataclass(frozen=True)
class QpSolution:
    """Solver output.

    ``rho`` is the final step size, reused when the solution warm-starts the
    next solve.
    """

    x: np.ndarray
    y: np.ndarray
    status: QpStatus
    iterations: int
    primal_residual: float
    dual_residual: float
    objective: float
    polished: bool = False
    rho: Optional[float] = None
    solve_time: float = 0.0

    @property
    def solved(self) -> bool:
        return self.status == QpStatus.SOLVED
