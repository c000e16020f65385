"""Handlers for the data pipeline: collect flight data and train the residual GPs."""

import asyncio
import logging
from typing import Any, Dict, List, Optional, Tuple

import numpy as np

from gpmpc_common.controller import config_for_variant
from gpmpc_common.dto import OutputTrainingSummary, Provenance, TrainingReport
from gpmpc_common.dto.run_config import CollectConfig, TrainConfig
from gpmpc_common.errors import ArgumentError, SimulationAbortedError
from gpmpc_common.gp import Dataset, SparseGpModel, log_predictive_density, sparse_predict_batch, train_sparse
from gpmpc_common.gp.sparse_gp import SparseTrainingResult
from gpmpc_common.quad import (
    GP_INPUT_INDICES,
    TRAJECTORY_FIELDS,
    RandomPolynomialReference,
    build_quadrotor_controller,
    load_quad_params,
    quadrotor_controller_config,
    quadrotor_model,
    residual_dataset,
    simulate_closed_loop,
)

from ..provenance import git_describe
from ..repositories import DatasetRepository, ModelRepository, ReportRepository, TableRepository

logger = logging.getLogger(__name__)


def split_holdout(data: Dataset, fraction: float, seed: int) -> Tuple[Dataset, Optional[Dataset]]:
    """Seeded random split into (train, holdout); holdout is None when no rows are held out."""
    order = np.random.default_rng(seed).permutation(data.n)
    n_hold = int(round(fraction * data.n))
    if data.n - n_hold < 1:
        raise ArgumentError(f"holdout fraction {fraction} leaves no training rows out of {data.n}")
    train_rows, hold_rows = np.sort(order[n_hold:]), np.sort(order[:n_hold])
    train = Dataset(data.inputs[train_rows], data.outputs[train_rows])
    if n_hold == 0:
        return train, None
    return train, Dataset(data.inputs[hold_rows], data.outputs[hold_rows])


def holdout_densities(model: SparseGpModel, holdout: Dataset) -> Tuple[float, float]:
    """Mean held-out log density of the model and of the zero-mean prior."""
    means, variances = sparse_predict_batch(model, holdout.inputs)
    prior_var = np.broadcast_to(model.signal_variances + model.noise_variances, means.shape)
    return (
        log_predictive_density(means, variances, holdout.outputs),
        log_predictive_density(np.zeros_like(means), prior_var, holdout.outputs),
    )


def training_summaries(result: SparseTrainingResult) -> List[OutputTrainingSummary]:
    summaries = []
    for i, h in enumerate(result.model.hyperparams):
        # a shared inducing set is trained as one optimizer run
        run = result.reports[min(i, len(result.reports) - 1)]
        summaries.append(
            OutputTrainingSummary(
                output=i,
                success=run.success,
                message=run.message,
                iterations=run.iterations,
                initial_objective=run.initial_objective,
                final_objective=run.final_objective,
                signal_variance=h.signal_variance,
                noise_variance=h.noise_variance,
                lengthscales=h.lengthscales.tolist(),
            )
        )
    return summaries


class DataHandlers:
    """Handlers for the ``collect`` and ``train`` subcommands."""

    def __init__(
        self,
        datasets: DatasetRepository,
        models: ModelRepository,
        reports: ReportRepository,
        tables: TableRepository,
    ):
        self.datasets = datasets
        self.models = models
        self.reports = reports
        self.tables = tables

    async def handle_collect(self, cfg: CollectConfig) -> Dict[str, Any]:
        """
        Fly the nominal baseline on a random smooth reference and store (w, z) pairs.

        A crash keeps the transitions logged before it; the dataset is still
        written and the response reports the failure.

        Args:
            cfg: Collection settings

        Returns:
            Response with the dataset location and hash, or error
        """
        try:
            params = load_quad_params(cfg.params_file)
            controller_cfg = config_for_variant(
                quadrotor_controller_config(params, **cfg.controller_overrides()), "baseline"
            )
            controller = build_quadrotor_controller(controller_cfg, params)
            reference = RandomPolynomialReference(cfg.duration, cfg.seed, cfg.segment_time)
            options = cfg.simulation_options(disturbance=cfg.disturbance)

            aborted = None
            try:
                log = await asyncio.to_thread(simulate_closed_loop, controller, reference, params, options)
            except SimulationAbortedError as e:
                logger.error(f"Collection aborted after {e.log.n_ticks} ticks: {e}")
                log, aborted = e.log, e

            data = residual_dataset(log, quadrotor_model(params, controller_cfg.T_s))
            dataset_path = await self.datasets.save("dataset", data)
            trajectory_path = await self.tables.save("collect_trajectory", (TRAJECTORY_FIELDS, log.rows()))
            result = {
                "dataset": dataset_path,
                "trajectory": trajectory_path,
                "rows": data.n,
                "dataset_hash": self.datasets.digest("dataset"),
                "config_hash": cfg.config_hash(),
            }

            if aborted is not None:
                return {
                    "success": False,
                    "error": str(aborted),
                    "error_type": type(aborted).__name__,
                    "data": result,
                }

            logger.info(f"Collected {data.n} residual samples")
            return {"success": True, "data": result}

        except Exception as e:
            logger.error(f"Error collecting data: {e}", exc_info=True)
            return {"success": False, "error": str(e), "error_type": type(e).__name__}

    async def handle_train(self, cfg: TrainConfig) -> Dict[str, Any]:
        """
        Train one sparse GP per velocity residual and write the model JSON.

        Optimizer stagnation is reported in the training report, not raised.

        Args:
            cfg: Training settings

        Returns:
            Response with the model location, hash and held-out densities, or error
        """
        try:
            data = await self.datasets.load(cfg.dataset)
            dataset_hash = self.datasets.digest(cfg.dataset)
            train, holdout = split_holdout(data, cfg.holdout_fraction, cfg.seed)

            result = await asyncio.to_thread(
                train_sparse, train, cfg.inducing_points, None, cfg.training_options(), GP_INPUT_INDICES
            )
            metadata = {
                "dataset_hash": dataset_hash,
                "inducing_points": cfg.inducing_points,
                "seed": cfg.seed,
                "config_hash": cfg.config_hash(),
            }
            model_path = await self.models.save_with_metadata("model", result.model, metadata)
            model_digest = self.models.digest("model")

            held, prior = holdout_densities(result.model, holdout) if holdout is not None else (None, None)
            report = TrainingReport(
                inducing_points=cfg.inducing_points,
                n_train=train.n,
                n_holdout=0 if holdout is None else holdout.n,
                outputs=training_summaries(result),
                holdout_log_density=held,
                prior_log_density=prior,
                provenance=Provenance(
                    seed=cfg.seed,
                    config_hash=cfg.config_hash(),
                    model_hash=model_digest,
                    dataset_hash=dataset_hash,
                    git_describe=git_describe(),
                ),
            )
            report_path = await self.reports.save("training_report", report)

            logger.info(f"Trained sparse GP with M={cfg.inducing_points} on {train.n} rows")
            return {
                "success": True,
                "data": {
                    "model": model_path,
                    "model_hash": model_digest,
                    "report": report_path,
                    "holdout_log_density": held,
                    "prior_log_density": prior,
                },
            }

        except Exception as e:
            logger.error(f"Error training model: {e}", exc_info=True)
            return {"success": False, "error": str(e), "error_type": type(e).__name__}
