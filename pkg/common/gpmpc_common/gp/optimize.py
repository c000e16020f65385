"""L-BFGS-B driver that keeps the best iterate seen."""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, List, Sequence, Tuple, TypeVar

import numpy as np
from scipy.optimize import minimize

logger = logging.getLogger(__name__)

T = TypeVar("T")


@dataclass(frozen=True)
class ConvergenceReport:
    """Outcome of one optimizer run; stagnation is reported here, never raised."""

    label: str
    success: bool
    message: str
    iterations: int
    evaluations: int
    initial_objective: float
    final_objective: float


class _BestSoFar:
    def __init__(self, fun: Callable[[np.ndarray], Tuple[float, np.ndarray]]):
        self._fun = fun
        self.best_value = np.inf
        self.best_x = None
        self.initial_value = None
        self.evaluations = 0

    def __call__(self, x: np.ndarray) -> Tuple[float, np.ndarray]:
        self.evaluations += 1
        try:
            value, grad = self._fun(x)
        except (ArithmeticError, np.linalg.LinAlgError) as e:
            # Steer the line search away from numerically broken regions.
            logger.debug(f"objective failed at trial point: {e}")
            return 1e300, np.zeros_like(x)
        if self.initial_value is None:
            self.initial_value = value
        if np.isfinite(value) and value < self.best_value:
            self.best_value = value
            self.best_x = np.array(x, copy=True)
        if not np.all(np.isfinite(grad)):
            grad = np.zeros_like(x)
        return value, grad


def minimize_best(
    fun: Callable[[np.ndarray], Tuple[float, np.ndarray]],
    x0: np.ndarray,
    bounds: Sequence[Tuple[float, float]],
    max_iter: int,
    gtol: float,
    label: str,
) -> Tuple[np.ndarray, ConvergenceReport]:
    """Minimize ``fun`` (returning value and gradient) and return the best point evaluated."""
    tracker = _BestSoFar(fun)
    result = minimize(
        tracker,
        np.asarray(x0, dtype=float),
        jac=True,
        method="L-BFGS-B",
        bounds=list(bounds),
        options={"maxiter": max_iter, "gtol": gtol},
    )
    if tracker.best_x is None:
        tracker.best_x = np.asarray(x0, dtype=float)
        tracker.best_value = tracker.initial_value if tracker.initial_value is not None else np.inf
    report = ConvergenceReport(
        label=label,
        success=bool(result.success),
        message=str(result.message),
        iterations=int(result.nit),
        evaluations=tracker.evaluations,
        initial_objective=float(tracker.initial_value) if tracker.initial_value is not None else float("nan"),
        final_objective=float(tracker.best_value),
    )
    if not result.success:
        logger.warning(
            f"{label}: optimizer stopped early ({report.message}); keeping best objective {report.final_objective:.6g}"
        )
    else:
        logger.info(
            f"{label}: objective {report.initial_objective:.6g} -> {report.final_objective:.6g} "
            f"in {report.iterations} iterations"
        )
    return tracker.best_x, report


def log_bounds(x0: np.ndarray, bound: float) -> List[Tuple[float, float]]:
    """Symmetric log-space box, widened to contain the starting point."""
    return [(min(v, -bound), max(v, bound)) for v in x0]


def map_outputs(fn: Callable[[int], T], n_outputs: int, workers: int) -> List[T]:
    """Run ``fn`` for every output index, optionally on a thread pool."""
    if workers <= 1 or n_outputs <= 1:
        return [fn(i) for i in range(n_outputs)]
    with ThreadPoolExecutor(max_workers=min(workers, n_outputs)) as pool:
        return list(pool.map(fn, range(n_outputs)))
