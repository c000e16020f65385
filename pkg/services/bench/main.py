"""Benchmark CLI - data collection, GP training and closed-loop benchmarks."""

import argparse
import asyncio
import logging
import sys
from typing import List, Optional

from prometheus_client import start_http_server

from gpmpc_common.dto.run_config import (
    BenchConfig,
    CollectConfig,
    SweepInducingConfig,
    TrainConfig,
    load_run_config,
)
from gpmpc_common.errors import ConfigError

from config import DEFAULT_OUT_DIR, LOG_LEVEL, METRICS_PORT, SERVICE_NAME
from src.handlers import BenchHandlers, DataHandlers
from src.repositories import DatasetRepository, ModelRepository, ReportRepository, TableRepository

# Setup logging
logging.basicConfig(
    level=getattr(logging, LOG_LEVEL),
    format='%(asctime)s - %(name)s - %(levelname)s - %(message)s'
)
logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_RUN_FAILURE = 1
EXIT_CONFIG_ERROR = 2

CONFIG_TYPES = {
    "collect": CollectConfig,
    "train": TrainConfig,
    "bench": BenchConfig,
    "sweep-inducing": SweepInducingConfig,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog=SERVICE_NAME, description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="Flat YAML run configuration")
    common.add_argument("--seed", type=int, help="Override the configured seed")
    common.add_argument("--out", dest="out_dir", help=f"Output directory (default: config, else {DEFAULT_OUT_DIR})")
    common.add_argument("--dump-failed-qp", dest="dump_failed_qp", help="Write unsolved MPC QPs under this directory")

    sub.add_parser("collect", parents=[common], help="Fly the baseline and log GP training data")

    train = sub.add_parser("train", parents=[common], help="Train the residual sparse GPs")
    train.add_argument("--dataset", help="Dataset CSV")
    train.add_argument("--inducing-points", dest="inducing_points", type=int, help="Inducing points per GP")

    bench = sub.add_parser("bench", parents=[common], help="Closed-loop benchmark of controller variants")
    bench.add_argument("--model", help="Sparse GP model JSON")
    bench.add_argument("--variants", help="'all' or a comma-separated list of variants")

    sweep = sub.add_parser("sweep-inducing", parents=[common], help="RMSE and step time against M")
    sweep.add_argument("--dataset", help="Dataset CSV")
    return parser


def overrides_from_args(args: argparse.Namespace) -> dict:
    values = {k: v for k, v in vars(args).items() if k not in ("command", "config")}
    variants = values.get("variants")
    if variants is not None and variants != "all":
        values["variants"] = [v.strip() for v in variants.split(",") if v.strip()]
    return values


async def dispatch(command: str, cfg) -> dict:
    """
    Run one subcommand.

    Args:
        command: Subcommand name
        cfg: Validated run configuration

    Returns:
        Handler response dict
    """
    datasets = DatasetRepository(cfg.out_dir)
    models = ModelRepository(cfg.out_dir)
    reports = ReportRepository(cfg.out_dir)
    tables = TableRepository(cfg.out_dir)

    if command == "collect":
        return await DataHandlers(datasets, models, reports, tables).handle_collect(cfg)

    elif command == "train":
        return await DataHandlers(datasets, models, reports, tables).handle_train(cfg)

    elif command == "bench":
        return await BenchHandlers(datasets, models, reports, tables).handle_bench(cfg)

    elif command == "sweep-inducing":
        return await BenchHandlers(datasets, models, reports, tables).handle_sweep_inducing(cfg)

    else:
        logger.warning(f"Unknown command: {command}")
        return {
            "success": False,
            "error": f"Unknown command: {command}",
            "error_type": "UnknownCommand"
        }


async def run(argv: Optional[List[str]] = None) -> int:
    """Parse arguments, run the subcommand and map the outcome to an exit code."""
    args = build_parser().parse_args(argv)

    logger.info("=" * 60)
    logger.info(f"{SERVICE_NAME} {args.command}")
    logger.info("=" * 60)

    try:
        cfg = load_run_config(args.config, CONFIG_TYPES[args.command], **overrides_from_args(args))
        if "out_dir" not in cfg.model_fields_set:
            cfg = cfg.model_copy(update={"out_dir": DEFAULT_OUT_DIR})
    except ConfigError as e:
        logger.error(f"Configuration error: {e}")
        return EXIT_CONFIG_ERROR

    if METRICS_PORT > 0:
        start_http_server(METRICS_PORT)
        logger.info(f"Serving metrics on port {METRICS_PORT}")

    try:
        response = await dispatch(args.command, cfg)
    except Exception as e:
        logger.error(f"Unexpected error in {args.command}: {e}", exc_info=True)
        return EXIT_RUN_FAILURE

    logger.info("=" * 60)
    if response.get("success"):
        logger.info(f"{args.command} finished successfully")
        logger.info("=" * 60)
        return EXIT_OK
    logger.error(f"{args.command} failed ({response.get('error_type')}): {response.get('error')}")
    logger.info("=" * 60)
    return EXIT_RUN_FAILURE


def cli() -> None:
    sys.exit(asyncio.run(run()))


if __name__ == "__main__":
    cli()
