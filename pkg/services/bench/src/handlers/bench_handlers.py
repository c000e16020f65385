"""Handlers for closed-loop benchmarking and the inducing-point sweep."""

import asyncio
import logging
from typing import Any, Dict, List, Optional

import numpy as np

from gpmpc_common.dto import InducingSweepReport, Provenance, SweepRow, TrainingOptions, VariantComparison
from gpmpc_common.dto.run_config import BenchConfig, SweepInducingConfig
from gpmpc_common.errors import ArgumentError
from gpmpc_common.gp import SparseGpModel, load_sparse_model, sparse_predict_batch, train_sparse
from gpmpc_common.quad import GP_INPUT_INDICES, TRAJECTORY_FIELDS, load_quad_params, quadrotor_model, residual_dataset

from config import BENCH_WORKERS, PREDICTION_EXPORT_ROWS, SWEEP_RMSE_TOLERANCE, SWEEP_TIME_TOLERANCE
from ..provenance import git_describe
from ..repositories import DatasetRepository, ModelRepository, ReportRepository, TableRepository
from ..workers import BenchJob, BenchOutcome, build_report, run_jobs
from .data_handlers import split_holdout

logger = logging.getLogger(__name__)

PREDICTION_FIELDS = ("row", "output", "target", "mean", "lower", "upper")
SWEEP_FIELDS = tuple(SweepRow.model_fields)

# 95% two-sided band of a Gaussian
CONFIDENCE_Z = 1.959963984540054


def prediction_rows(model: SparseGpModel, outcome: BenchOutcome, params, limit: int) -> List[Dict[str, object]]:
    """GP mean and 95% band against the residuals measured during a run."""
    data = residual_dataset(outcome.log, quadrotor_model(params, outcome.log.T_s))
    n = min(limit, data.n)
    if n == 0:
        return []
    means, variances = sparse_predict_batch(model, data.inputs[:n])
    half = CONFIDENCE_Z * np.sqrt(variances)
    return [
        {
            "row": k,
            "output": i,
            "target": float(data.outputs[k, i]),
            "mean": float(means[k, i]),
            "lower": float(means[k, i] - half[k, i]),
            "upper": float(means[k, i] + half[k, i]),
        }
        for k in range(n)
        for i in range(data.n_outputs)
    ]


def rmse_saturated(rows: List[SweepRow], tolerance: float) -> Optional[bool]:
    """RMSE at M=8 within ``tolerance`` of M=4; None unless both ran and finished."""
    by_m = {r.inducing_points: r for r in rows if not r.failed}
    if 4 not in by_m or 8 not in by_m:
        return None
    return abs(by_m[8].rmse_3d - by_m[4].rmse_3d) <= tolerance * by_m[4].rmse_3d


def time_nondecreasing(rows: List[SweepRow], tolerance: float) -> bool:
    """Mean step time nondecreasing in M, allowing a relative drop of ``tolerance``."""
    times = [r.avg_step_time for r in sorted(rows, key=lambda r: r.inducing_points) if not r.failed]
    return all(later >= earlier * (1 - tolerance) for earlier, later in zip(times, times[1:]))


class BenchHandlers:
    """Handlers for the ``bench`` and ``sweep-inducing`` subcommands."""

    def __init__(
        self,
        datasets: DatasetRepository,
        models: ModelRepository,
        reports: ReportRepository,
        tables: TableRepository,
        workers: int = BENCH_WORKERS,
    ):
        self.datasets = datasets
        self.models = models
        self.reports = reports
        self.tables = tables
        self.workers = workers

    async def handle_bench(self, cfg: BenchConfig) -> Dict[str, Any]:
        """
        Fly every requested variant on the same reference and seed.

        Args:
            cfg: Benchmark settings

        Returns:
            Response with one report per variant, or error
        """
        try:
            model_text = self.models.read_text(cfg.model) if cfg.model else None
            model_digest = self.models.digest(cfg.model) if cfg.model else None
            options = cfg.simulation_options(disturbance=cfg.disturbance)
            jobs = [
                BenchJob(
                    variant=v,
                    reference=cfg.reference,
                    seed=cfg.seed,
                    options=options,
                    controller_overrides=cfg.controller_overrides(),
                    params_file=cfg.params_file,
                    model_text=model_text,
                )
                for v in cfg.variants
            ]
            outcomes = await run_jobs(jobs, cfg.sweep_workers or self.workers)

            provenance = Provenance(
                seed=cfg.seed,
                config_hash=cfg.config_hash(),
                model_hash=model_digest,
                git_describe=git_describe(),
            )
            reports = []
            for outcome in outcomes:
                report = build_report(outcome, provenance)
                reports.append(report)
                await self.reports.save(f"report_{report.variant}", report)
                await self.tables.save(f"trajectory_{report.variant}", (TRAJECTORY_FIELDS, outcome.log.rows()))
                logger.info(
                    f"{report.variant}: rmse_3d={report.rmse_3d:.1f} mm, rmse_xy={report.rmse_xy:.1f} mm, "
                    f"step={report.avg_step_time:.2f} ms, iterations={report.avg_iterations:.2f}"
                )

            if len(reports) > 1:
                comparison = VariantComparison(reports=reports)
                await self.reports.save("comparison", comparison)
                table = comparison.table()
                await self.tables.save("comparison", (list(table[0]), table))

            gp_outcome = next((o for o in outcomes if o.job.variant != "baseline"), None)
            if cfg.export_predictions and model_text is not None and gp_outcome is not None:
                params = load_quad_params(cfg.params_file)
                rows = prediction_rows(load_sparse_model(model_text), gp_outcome, params, PREDICTION_EXPORT_ROWS)
                await self.tables.save("gp_predictions", (PREDICTION_FIELDS, rows))

            failed = [r.variant for r in reports if r.failed]
            data = {"reports": [r.model_dump(mode="json") for r in reports]}
            if failed:
                return {
                    "success": False,
                    "error": f"runs aborted: {', '.join(failed)}",
                    "error_type": "SimulationAbortedError",
                    "data": data,
                }
            return {"success": True, "data": data}

        except Exception as e:
            logger.error(f"Error running benchmark: {e}", exc_info=True)
            return {"success": False, "error": str(e), "error_type": type(e).__name__}

    async def handle_sweep_inducing(self, cfg: SweepInducingConfig) -> Dict[str, Any]:
        """
        Train and benchmark one model per inducing-point count.

        Args:
            cfg: Sweep settings

        Returns:
            Response with the sweep table, or error
        """
        try:
            data = await self.datasets.load(cfg.dataset)
            dataset_hash = self.datasets.digest(cfg.dataset)
            train, _ = split_holdout(data, cfg.holdout_fraction, cfg.seed)
            options = cfg.simulation_options(disturbance=False)
            training_options = {"seed": cfg.seed}
            if cfg.max_iter is not None:
                training_options["max_iter"] = cfg.max_iter

            jobs, model_hashes = [], []
            for M in cfg.inducing_counts:
                if M > train.n:
                    raise ArgumentError(f"M={M} exceeds the {train.n} training rows")
                logger.info(f"Training sparse GP with M={M}")
                result = await asyncio.to_thread(
                    train_sparse, train, M, None, TrainingOptions(**training_options), GP_INPUT_INDICES
                )
                name = f"model_M{M}"
                await self.models.save_with_metadata(
                    name, result.model, {"dataset_hash": dataset_hash, "inducing_points": M, "seed": cfg.seed}
                )
                model_hashes.append(self.models.digest(name))
                jobs.append(
                    BenchJob(
                        variant=cfg.variant,
                        reference="lemniscate",
                        seed=cfg.seed,
                        options=options,
                        controller_overrides=cfg.controller_overrides(),
                        params_file=cfg.params_file,
                        model_text=self.models.read_text(name),
                        label=f"M={M}",
                    )
                )

            outcomes = await run_jobs(jobs, cfg.sweep_workers or self.workers)
            provenance = Provenance(
                seed=cfg.seed, config_hash=cfg.config_hash(), dataset_hash=dataset_hash, git_describe=git_describe()
            )
            rows = []
            for M, model_hash, outcome in zip(cfg.inducing_counts, model_hashes, outcomes):
                report = build_report(outcome, provenance)
                rows.append(
                    SweepRow(
                        inducing_points=M,
                        rmse_3d=report.rmse_3d,
                        rmse_xy=report.rmse_xy,
                        avg_step_time=report.avg_step_time,
                        avg_iterations=report.avg_iterations,
                        failed=report.failed,
                        model_hash=model_hash,
                    )
                )

            sweep = InducingSweepReport(
                variant=cfg.variant,
                rows=rows,
                rmse_saturated=rmse_saturated(rows, SWEEP_RMSE_TOLERANCE),
                time_nondecreasing=time_nondecreasing(rows, SWEEP_TIME_TOLERANCE),
                provenance=provenance,
            )
            await self.reports.save("inducing_sweep", sweep)
            await self.tables.save("inducing_sweep", (SWEEP_FIELDS, [r.model_dump() for r in rows]))

            if sweep.rmse_saturated is False:
                logger.warning(f"RMSE did not saturate between M=4 and M=8 (tolerance {SWEEP_RMSE_TOLERANCE:.0%})")
            if not sweep.time_nondecreasing:
                logger.warning("Mean step time decreased with M beyond the timing noise band")
            return {"success": True, "data": sweep.model_dump(mode="json")}

        except Exception as e:
            logger.error(f"Error running inducing-point sweep: {e}", exc_info=True)
            return {"success": False, "error": str(e), "error_type": type(e).__name__}
