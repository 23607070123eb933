import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from bridgeflow import analysis, cli, tensorio
from bridgeflow.config import OUT_ENV, from_dict

from conftest import CONFIGS, ROOT

SMOKE = str(CONFIGS / "smoke.toml")


def run(*args, out):
    return cli.main([*args, "--config", SMOKE, "--out", str(out)])


def rows(path):
    with open(path) as fh:
        return list(csv.reader(fh))


def test_train_and_forecast(tmp_path):
    assert run("forecast", out=tmp_path) == 0
    for stage in ("data", "codec", "train", "forecast"):
        assert (tmp_path / stage / "manifest.json").exists()
    table = rows(tmp_path / "forecast" / "forecast.csv")
    assert table[0] == ["step", "mse", "rfne", "psnr", "ssim", "pearson"] and len(table) == 4
    ens = tensorio.read(tmp_path / "forecast" / "ensemble")
    assert ens.shape == (2, 4, 3, 2)
    loss = rows(tmp_path / "train" / "loss.csv")
    assert loss[0] == ["iteration", "loss", "lr", "wall_ms"] and len(loss) == 31


def test_manifest_contents(tmp_path):
    assert run("train", "--set", "train.iterations=3", out=tmp_path) == 0
    man = json.loads((tmp_path / "train" / "manifest.json").read_text())
    assert man["stage"] == "train" and man["seed"] == 0 and set(man["versions"]) >= {"bridgeflow", "numpy"}
    cfg = from_dict(man["config"])
    assert cfg.digest() == man["config_hash"] and cfg.train["iterations"] == 3
    assert "model/model.json" in man["files_crc32"] and "loss.csv" in man["files_crc32"]


def test_manifest_rebuilds_identical_outputs(tmp_path):
    assert run("train", out=tmp_path / "a") == 0
    man = json.loads((tmp_path / "a" / "train" / "manifest.json").read_text())
    cfg = from_dict({**man["config"], "out": str(tmp_path / "b")})
    assert cli.execute("train", cfg, log=lambda msg: None) == 0
    for name in ("model/layer0_w.f64", "model/layer1_b.f64"):
        assert (tmp_path / "a" / "train" / name).read_bytes() == (tmp_path / "b" / "train" / name).read_bytes()


def test_upstream_stages_are_reused(tmp_path):
    assert run("train", out=tmp_path) == 0
    data_manifest = (tmp_path / "data" / "manifest.json").read_text()
    assert run("train", "--set", "train.iterations=2", out=tmp_path) == 0
    assert (tmp_path / "data" / "manifest.json").read_text() == data_manifest
    assert run("train", "--set", "system.n_train=6", out=tmp_path) == 0
    assert (tmp_path / "data" / "manifest.json").read_text() != data_manifest
    assert tensorio.read(tmp_path / "data" / "train").shape[0] == 6


def test_zero_iterations_writes_initialization(tmp_path):
    assert run("train", "--set", "train.iterations=0", out=tmp_path) == 0
    assert len(rows(tmp_path / "train" / "loss.csv")) == 1
    assert (tmp_path / "train" / "model" / "layer0_w.f64").exists()


def test_checkpoints(tmp_path):
    assert run("train", "--set", "train.checkpoint_every=10", out=tmp_path) == 0
    found = sorted(p.name for p in (tmp_path / "train" / "checkpoints").iterdir())
    assert found == ["iter0000010", "iter0000020", "iter0000030"]


def test_metrics_command(tmp_path):
    assert run("metrics", out=tmp_path) == 0
    table = rows(tmp_path / "metrics" / "metrics.csv")
    assert table[0] == ["metric", "horizon_mean", "first_step", "last_step", "ensemble_mean"]
    assert [r[0] for r in table[1:]] == ["mse", "rfne", "psnr", "ssim", "pearson"]


def test_sweep_table(tmp_path):
    assert run("sweep", "--jobs", "2", out=tmp_path) == 0
    table = rows(tmp_path / "sweep" / "sweep.csv")
    assert table[0] == ["sigma", "sampler", "steps", "mse", "rfne", "psnr", "ssim"]
    cells = {(r[0], r[1], r[2]) for r in table[1:]}
    assert len(table) - 1 == len(cells) == 2 * 2 * 2
    assert all(np.isfinite(float(v)) for r in table[1:] for v in r[3:])


def test_data_files_round_trip(tmp_path):
    assert run("gen-data", out=tmp_path) == 0
    train = tensorio.read(tmp_path / "data" / "train")
    assert train.shape == (8, 20, 2)
    assert tensorio.read_meta(tmp_path / "data" / "train")["dtype"] == "f64le"


def test_env_output_root(tmp_path, monkeypatch):
    monkeypatch.setenv(OUT_ENV, str(tmp_path / "env"))
    assert cli.main(["gen-data", "--config", SMOKE]) == 0
    assert (tmp_path / "env" / "data" / "manifest.json").exists()


@pytest.mark.parametrize("args", [
    ["train", "--set", "train.lr=-1"],
    ["train", "--set", "path.kind=cosine"],
    ["train", "--config", "/nonexistent.toml"],
    ["forecast", "--set", "train.kind=score"],
    ["sweep", "--set", "path.kind=ot"],
    ["train", "--jobs", "0"],
])
def test_config_errors_exit_one(tmp_path, capsys, args):
    argv = args if "--config" in args else [*args, "--config", SMOKE]
    assert cli.main([*argv, "--out", str(tmp_path)]) == 1
    assert "config error" in capsys.readouterr().err


def test_runtime_failure_exits_two(tmp_path, capsys):
    assert run("train", "--set", "train.max_loss=1e-12", out=tmp_path) == 2
    assert "TrainingDiverged" in capsys.readouterr().err


def test_verify_failure_exits_three(tmp_path, monkeypatch):
    monkeypatch.setattr(analysis, "verify_all", lambda seed, jobs: [
        analysis.CheckResult("x", analysis.PASS, 0.0, 1.0), analysis.CheckResult("y", analysis.FAIL, 2.0, 1.0)])
    assert run("verify", out=tmp_path) == 3
    assert "1 failed" in (tmp_path / "verify" / "summary.txt").read_text()


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "bridgeflow", "gen-data", "--config", SMOKE, "--out", str(tmp_path)],
                          capture_output=True, text=True, cwd=ROOT)
    assert proc.returncode == 0, proc.stderr


@pytest.mark.slow
def test_verify_passes(tmp_path):
    assert run("verify", "--jobs", "4", out=tmp_path) == 0
    table = rows(tmp_path / "verify" / "verify.csv")
    statuses = {r[0]: r[1] for r in table[1:]}
    assert all(s == "PASS" for name, s in statuses.items() if not name.startswith("alt_sde"))
    assert "0 failed" in (tmp_path / "verify" / "summary.txt").read_text()
