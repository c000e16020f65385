import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).resolve().parents[1]))

from gpmpc_common.controller import StepDiagnostics  # noqa: E402
from gpmpc_common.gp import Dataset  # noqa: E402
from gpmpc_common.quad import TrajectoryLog  # noqa: E402

from src.repositories import DatasetRepository, ModelRepository, ReportRepository, TableRepository  # noqa: E402


@pytest.fixture
def repos(tmp_path):
    return DatasetRepository(tmp_path), ModelRepository(tmp_path), ReportRepository(tmp_path), TableRepository(tmp_path)


def diagnostics(step, iterations=2, qp_iterations=30):
    return StepDiagnostics(
        step, iterations, qp_iterations, 1e-3, 2e-3, 4e-3, 1e-4, (0.1, 1e-4), 1.5, "converged", "solved", False, 0.0
    )


def fixture_log(n=6, T_s=0.02):
    """Closed-loop log with known position errors and a final state."""
    log = TrajectoryLog(T_s=T_s, reference_name="fixture")
    for k in range(n):
        ref = np.zeros(9)
        ref[:3] = [0.1 * k, -0.05 * k, 1.0]
        x = ref.copy()
        x[:3] += [0.01 * (k % 3), -0.002 * k, 0.004]
        log.times.append(k * T_s)
        log.truth.append(np.concatenate([x[:6], [0.0, 0.0, 0.0, 1.0], np.zeros(3)]))
        log.states.append(x)
        log.inputs.append(np.array([0.32, 0.0, 0.0, 0.0]))
        log.references.append(ref)
        log.disturbances.append(np.zeros(3))
        log.diagnostics.append(diagnostics(k, iterations=2 + k % 2))
    log.states.append(log.states[-1].copy())
    log.completed = True
    return log


def synthetic_residuals(n=60, seed=0) -> Dataset:
    """Residual-shaped data: drag-like outputs of velocity and thrust."""
    rng = np.random.default_rng(seed)
    v = rng.uniform(-2.0, 2.0, (n, 3))
    angles = rng.uniform(-0.3, 0.3, (n, 3))
    thrust = rng.uniform(0.25, 0.4, (n, 1))
    rates = rng.uniform(-1.0, 1.0, (n, 3))
    W = np.hstack([v, angles, thrust, rates])
    Z = -0.35 * v * thrust + 0.01 * rng.normal(size=(n, 3))
    return Dataset(W, Z)
