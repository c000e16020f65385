"""Subcommand handlers."""

from .bench_handlers import BenchHandlers
from .data_handlers import DataHandlers

__all__ = ["BenchHandlers", "DataHandlers"]
