import json

import pytest

from gpmpc_common.dto.run_config import BenchConfig, RunConfig, load_run_config
from gpmpc_common.errors import ConfigError

from main import EXIT_CONFIG_ERROR, EXIT_OK, EXIT_RUN_FAILURE, build_parser, overrides_from_args, run


def write(path, text):
    path.write_text(text)
    return str(path)


@pytest.mark.asyncio
@pytest.mark.parametrize(
    "text",
    [
        "variants: [lpv-foo-precov]\n",
        "nested:\n  horizon: 3\n",
        "unknown_key: 1\n",
        "- not\n- a mapping\n",
        "variants: [lpv-mm-precov]\n",
        "horizon: 0\n",
    ],
)
async def test_bad_config_exits_with_code_two(tmp_path, text):
    path = write(tmp_path / "bench.yaml", text)
    assert await run(["bench", "--config", path, "--out", str(tmp_path)]) == EXIT_CONFIG_ERROR


@pytest.mark.asyncio
async def test_missing_config_file_exits_with_code_two(tmp_path):
    assert await run(["collect", "--config", str(tmp_path / "missing.yaml")]) == EXIT_CONFIG_ERROR


@pytest.mark.asyncio
async def test_run_failure_exits_with_code_one(tmp_path):
    path = write(tmp_path / "train.yaml", "dataset: nowhere\n")
    assert await run(["train", "--config", path, "--out", str(tmp_path)]) == EXIT_RUN_FAILURE


@pytest.mark.asyncio
async def test_bench_baseline_from_cli(tmp_path):
    path = write(tmp_path / "bench.yaml", "duration: 0.1\nreference: hover\nvariants: [baseline]\n")
    code = await run(["bench", "--config", path, "--seed", "7", "--out", str(tmp_path / "out")])
    assert code == EXIT_OK
    report = json.loads((tmp_path / "out" / "report_baseline.json").read_text())
    assert report["provenance"]["seed"] == 7


def test_cli_overrides_take_precedence(tmp_path):
    path = write(tmp_path / "bench.yaml", "seed: 1\nvariants: all\nmodel: m.json\n")
    args = build_parser().parse_args(["bench", "--config", path, "--seed", "2", "--variants", "baseline, lpv-mm-cov"])
    cfg = load_run_config(args.config, BenchConfig, **overrides_from_args(args))
    assert cfg.seed == 2
    assert cfg.variants == ["baseline", "lpv-mm-cov"]
    assert cfg.model == "m.json"


def test_variants_all_expands():
    cfg = BenchConfig(variants="all", model="m.json")
    assert cfg.variants == ["lpv-taylor-precov", "lpv-taylor-cov", "lpv-mm-precov", "lpv-mm-cov", "baseline"]


def test_config_hash_tracks_values():
    assert RunConfig(seed=1).config_hash() == RunConfig(seed=1).config_hash()
    assert RunConfig(seed=1).config_hash() != RunConfig(seed=2).config_hash()


def test_nested_keys_are_rejected(tmp_path):
    path = write(tmp_path / "run.yaml", "controller:\n  horizon: 4\n")
    with pytest.raises(ConfigError):
        load_run_config(path, RunConfig)


def test_dump_failed_qp_reaches_the_controller(tmp_path):
    args = build_parser().parse_args(["bench", "--variants", "baseline", "--dump-failed-qp", str(tmp_path / "qps")])
    cfg = load_run_config(None, BenchConfig, **overrides_from_args(args))
    assert cfg.controller_overrides()["dump_failed_qp"] == str(tmp_path / "qps")
    assert "dump_failed_qp" not in BenchConfig(variants=["baseline"]).controller_overrides()
