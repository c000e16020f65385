import json

import numpy as np
import pytest

from gpmpc_common.dto.run_config import BenchConfig, CollectConfig, SweepInducingConfig, TrainConfig
from gpmpc_common.dto.simulation_options import SimulationOptions

from conftest import synthetic_residuals
from src.handlers import BenchHandlers, DataHandlers
from src.repositories import DatasetRepository, ModelRepository, ReportRepository, TableRepository
from src.workers import BenchJob, job_overrides, run_bench_job


def data_handlers(repos):
    return DataHandlers(*repos)


def bench_handlers(repos):
    return BenchHandlers(*repos, workers=1)


async def train_model(repos, tmp_path, M=3, n=80, max_iter=40):
    await repos[0].save("dataset", synthetic_residuals(n))
    cfg = TrainConfig(dataset="dataset", inducing_points=M, max_iter=max_iter, out_dir=str(tmp_path))
    return await data_handlers(repos).handle_train(cfg)


@pytest.mark.asyncio
async def test_collect_writes_a_deterministic_dataset(tmp_path):
    hashes = []
    for run in ("a", "b"):
        root = tmp_path / run
        repos = (DatasetRepository(root), ModelRepository(root), ReportRepository(root), TableRepository(root))
        cfg = CollectConfig(duration=0.3, seed=5, out_dir=str(root))
        response = await data_handlers(repos).handle_collect(cfg)
        assert response["success"], response
        assert response["data"]["rows"] == 15
        assert (root / "collect_trajectory.csv").is_file()
        hashes.append(response["data"]["dataset_hash"])
    assert hashes[0] == hashes[1]
    assert (tmp_path / "a" / "dataset.csv").read_bytes() == (tmp_path / "b" / "dataset.csv").read_bytes()


@pytest.mark.asyncio
async def test_train_is_reproducible_and_beats_the_prior(repos, tmp_path):
    first = await train_model(repos, tmp_path)
    assert first["success"], first
    second = await train_model(repos, tmp_path)
    assert second["data"]["model_hash"] == first["data"]["model_hash"]
    assert first["data"]["holdout_log_density"] > first["data"]["prior_log_density"]

    report = json.loads((tmp_path / "training_report.json").read_text())
    assert report["inducing_points"] == 3
    assert report["n_train"] == 64 and report["n_holdout"] == 16
    assert len(report["outputs"]) == 3
    assert report["provenance"]["dataset_hash"] == repos[0].digest("dataset")

    doc = json.loads((tmp_path / "model.json").read_text())
    assert doc["metadata"]["inducing_points"] == 3
    assert doc["input_indices"] == list(range(3, 13))


@pytest.mark.asyncio
async def test_train_rejects_too_many_inducing_points(repos, tmp_path):
    response = await train_model(repos, tmp_path, M=100, n=20)
    assert not response["success"]
    assert response["error_type"] == "ArgumentError"


@pytest.mark.asyncio
async def test_bench_baseline_only(repos, tmp_path):
    cfg = BenchConfig(variants=["baseline"], reference="hover", duration=0.2, out_dir=str(tmp_path))
    response = await bench_handlers(repos).handle_bench(cfg)
    assert response["success"], response
    (report,) = response["data"]["reports"]
    assert report["variant"] == "baseline" and report["n_steps"] == 10
    assert report["rmse_3d"] < 1.0
    assert report["provenance"]["config_hash"] == cfg.config_hash()
    assert (tmp_path / "report_baseline.json").is_file()
    assert (tmp_path / "trajectory_baseline.csv").read_text().startswith("# schema_version=1")
    assert not (tmp_path / "comparison.json").exists()
    assert not (tmp_path / "gp_predictions.csv").exists()


@pytest.mark.asyncio
async def test_bench_with_missing_model_fails(repos, tmp_path):
    cfg = BenchConfig(variants=["lpv-mm-precov"], model="absent", duration=0.1, out_dir=str(tmp_path))
    response = await bench_handlers(repos).handle_bench(cfg)
    assert not response["success"]
    assert response["error_type"] == "FileNotFoundError"


def test_failed_qp_dumps_go_to_one_directory_per_job(tmp_path):
    options = SimulationOptions(duration=0.1)
    overrides = {"horizon": 4, "dump_failed_qp": str(tmp_path)}
    bench = BenchJob(variant="baseline", reference="hover", seed=0, options=options, controller_overrides=overrides)
    sweep = BenchJob(
        variant="lpv-mm-precov", reference="lemniscate", seed=0, options=options,
        controller_overrides=overrides, label="M=4",
    )
    assert job_overrides(bench)["dump_failed_qp"] == str(tmp_path / "baseline")
    assert job_overrides(sweep)["dump_failed_qp"] == str(tmp_path / "lpv-mm-precov_M4")
    assert job_overrides(sweep)["horizon"] == 4
    assert sweep.controller_overrides["dump_failed_qp"] == str(tmp_path)

    plain = BenchJob(variant="baseline", reference="hover", seed=0, options=options)
    assert "dump_failed_qp" not in job_overrides(plain)


def test_gp_off_runs_are_identical():
    job = BenchJob(
        variant="baseline", reference="lemniscate", seed=3,
        options=SimulationOptions(duration=0.2, disturbance=True, seed=3),
    )
    a, b = run_bench_job(job), run_bench_job(job)
    np.testing.assert_array_equal(np.asarray(a.log.states), np.asarray(b.log.states))
    np.testing.assert_array_equal(np.asarray(a.log.inputs), np.asarray(b.log.inputs))


@pytest.mark.slow
@pytest.mark.asyncio
async def test_bench_comparison_and_prediction_export(repos, tmp_path):
    trained = await train_model(repos, tmp_path)
    assert trained["success"], trained
    cfg = BenchConfig(
        variants=["baseline", "lpv-mm-precov"], model="model", duration=0.2, out_dir=str(tmp_path)
    )
    response = await bench_handlers(repos).handle_bench(cfg)
    assert response["success"], response
    comparison = json.loads((tmp_path / "comparison.json").read_text())
    assert [r["variant"] for r in comparison["reports"]] == ["baseline", "lpv-mm-precov"]
    assert (tmp_path / "comparison.csv").is_file()
    fields, rows = await repos[3].load("gp_predictions")
    assert fields == ["row", "output", "target", "mean", "lower", "upper"]
    assert len(rows) == 3 * 10


@pytest.mark.slow
@pytest.mark.asyncio
async def test_inducing_sweep_table(repos, tmp_path):
    await repos[0].save("dataset", synthetic_residuals(60))
    cfg = SweepInducingConfig(dataset="dataset", inducing_counts=[4, 2], max_iter=20, duration=0.2, out_dir=str(tmp_path))
    response = await bench_handlers(repos).handle_sweep_inducing(cfg)
    assert response["success"], response
    assert [r["inducing_points"] for r in response["data"]["rows"]] == [2, 4]
    assert response["data"]["rmse_saturated"] is None
    assert (tmp_path / "model_M2.json").is_file() and (tmp_path / "model_M4.json").is_file()
    hashes = [r["model_hash"] for r in response["data"]["rows"]]
    assert hashes == [repos[1].digest("model_M2"), repos[1].digest("model_M4")]
    assert response["data"]["provenance"]["dataset_hash"] == repos[0].digest("dataset")
    assert (tmp_path / "inducing_sweep.csv").is_file()
    fields, _ = await repos[3].load("inducing_sweep")
    assert "model_hash" in fields


@pytest.mark.slow
@pytest.mark.asyncio
async def test_learned_model_improves_lemniscate_tracking(repos, tmp_path):
    collected = await data_handlers(repos).handle_collect(CollectConfig(seed=1, out_dir=str(tmp_path)))
    assert collected["success"], collected
    trained = await data_handlers(repos).handle_train(
        TrainConfig(dataset="dataset", inducing_points=4, seed=1, out_dir=str(tmp_path))
    )
    assert trained["success"], trained
    cfg = BenchConfig(variants=["baseline", "lpv-mm-precov"], model="model", seed=1, out_dir=str(tmp_path))
    response = await bench_handlers(repos).handle_bench(cfg)
    assert response["success"], response
    baseline, gp = response["data"]["reports"]
    assert baseline["rmse_3d"] >= 3.0 * gp["rmse_3d"]
    assert gp["median_iterations"] <= 4
