"""Benchmark CLI configuration."""

import os

# Service settings
SERVICE_NAME: str = "gpmpc-bench"
DEFAULT_OUT_DIR: str = os.getenv("BENCH_OUT_DIR", "runs")

# Parallel closed-loop runs in bench and sweep mode
BENCH_WORKERS: int = int(os.getenv("BENCH_WORKERS", "1"))

# Relative band within which a smaller mean step time still counts as nondecreasing
SWEEP_TIME_TOLERANCE: float = float(os.getenv("SWEEP_TIME_TOLERANCE", "0.1"))
SWEEP_RMSE_TOLERANCE: float = float(os.getenv("SWEEP_RMSE_TOLERANCE", "0.15"))

# Rows of the GP prediction export
PREDICTION_EXPORT_ROWS: int = int(os.getenv("PREDICTION_EXPORT_ROWS", "500"))

# CSV layout version, written in the first line of every CSV artifact
CSV_SCHEMA_VERSION: int = 1

# Metrics: served over HTTP only when positive
METRICS_PORT: int = int(os.getenv("METRICS_PORT", "0"))

# Logging
LOG_LEVEL: str = os.getenv("LOG_LEVEL", "INFO")
