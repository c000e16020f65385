"""Closed-loop benchmark runs, executable in a process pool.

Jobs carry only picklable values (the GP as its JSON text) so the same
function runs inline or in a worker process.
"""

import asyncio
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

import numpy as np

from gpmpc_common.controller import config_for_variant
from gpmpc_common.dto import BenchmarkReport, ControllerConfig, Provenance, SimulationOptions
from gpmpc_common.errors import SimulationAbortedError
from gpmpc_common.gp import load_sparse_model
from gpmpc_common.quad import (
    TrajectoryLog,
    build_quadrotor_controller,
    load_quad_params,
    make_reference,
    quadrotor_controller_config,
    simulate_closed_loop,
)

logger = logging.getLogger(__name__)

VIOLATION_TOLERANCE = 1e-9


@dataclass(frozen=True)
class BenchJob:
    variant: str
    reference: str
    seed: int
    options: SimulationOptions
    controller_overrides: Dict[str, Any] = field(default_factory=dict)
    params_file: Optional[str] = None
    model_text: Optional[str] = None
    label: str = ""


@dataclass
class BenchOutcome:
    job: BenchJob
    log: TrajectoryLog
    failure: Optional[str]
    violations: int


def count_violations(log: TrajectoryLog, cfg: ControllerConfig) -> int:
    """Ticks whose measured state lies outside the (untightened) state polytope."""
    alpha, b = cfg.state_halfspaces()
    if log.n_ticks == 0 or alpha.shape[0] == 0:
        return 0
    X = np.asarray(log.states[: log.n_ticks])
    return int(np.sum(np.any(X @ alpha.T > b + VIOLATION_TOLERANCE, axis=1)))


def job_overrides(job: BenchJob) -> Dict[str, Any]:
    """Controller overrides with the failed-QP dump directory narrowed to this job."""
    overrides = dict(job.controller_overrides)
    if overrides.get("dump_failed_qp"):
        name = f"{job.variant}_{job.label.replace('=', '')}" if job.label else job.variant
        overrides["dump_failed_qp"] = str(Path(overrides["dump_failed_qp"]) / name)
    return overrides


def run_bench_job(job: BenchJob) -> BenchOutcome:
    params = load_quad_params(job.params_file)
    cfg = config_for_variant(quadrotor_controller_config(params, **job_overrides(job)), job.variant)
    gp = load_sparse_model(job.model_text) if cfg.use_gp else None
    controller = build_quadrotor_controller(cfg, params, gp)
    reference = make_reference(job.reference, job.options.duration, job.seed)
    logger.info(f"Running {job.variant} {job.label} on {job.reference}")
    try:
        log = simulate_closed_loop(controller, reference, params, job.options)
        failure = None
    except SimulationAbortedError as e:
        logger.error(f"{job.variant} {job.label} aborted: {e}")
        log, failure = e.log, f"{e.reason}: {e}"
    return BenchOutcome(job, log, failure, count_violations(log, cfg))


async def run_jobs(jobs: Sequence[BenchJob], workers: int) -> List[BenchOutcome]:
    """Run every job, in a process pool when ``workers > 1``; order is preserved."""
    if workers <= 1 or len(jobs) <= 1:
        return [await asyncio.to_thread(run_bench_job, job) for job in jobs]
    loop = asyncio.get_running_loop()
    with ProcessPoolExecutor(max_workers=workers) as pool:
        futures = [loop.run_in_executor(pool, run_bench_job, job) for job in jobs]
        return list(await asyncio.gather(*futures))


def _mean(values) -> float:
    return float(np.mean(values)) if len(values) else float("nan")


def build_report(outcome: BenchOutcome, provenance: Provenance) -> BenchmarkReport:
    """Tracking errors in mm, times in ms, iteration counts per step."""
    log, diags = outcome.log, outcome.log.diagnostics
    iterations = [d.lpv_iterations for d in diags]
    n_qps = sum(iterations)
    return BenchmarkReport(
        variant=outcome.job.variant,
        reference=outcome.job.reference,
        failed=outcome.failure is not None,
        failure_reason=outcome.failure,
        n_steps=len(diags),
        rmse_3d=1e3 * log.tracking_rmse(),
        rmse_xy=1e3 * log.tracking_rmse(lateral=True),
        avg_step_time=1e3 * _mean([d.step_time for d in diags]),
        avg_factorization_time=1e3 * _mean([d.factorization_time for d in diags]),
        avg_qp_time=1e3 * _mean([d.qp_time for d in diags]),
        avg_iterations=_mean(iterations),
        median_iterations=float(np.median(iterations)) if iterations else float("nan"),
        avg_qp_iterations=sum(d.qp_iterations for d in diags) / n_qps if n_qps else float("nan"),
        constraint_violations=outcome.violations,
        slack_steps=sum(d.slack_used for d in diags),
        saturations=log.saturations,
        provenance=provenance,
    )
