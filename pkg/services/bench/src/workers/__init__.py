"""Closed-loop simulation workers."""

from .simulation import BenchJob, BenchOutcome, build_report, count_violations, job_overrides, run_bench_job, run_jobs

__all__ = ["BenchJob", "BenchOutcome", "build_report", "count_violations", "job_overrides", "run_bench_job", "run_jobs"]
