import json

import pytest
from click.testing import CliRunner

from matrir.cli import main


@pytest.fixture(scope="module")
def runner():
    return CliRunner()


class TestForge:
    def test_build_micro_dataset(self, runner, tmp_path_factory):
        out = tmp_path_factory.mktemp("cli_ds") / "ds"
        r = runner.invoke(main, [
            "forge", "build", "--seed", "3", "--out", str(out),
            "--scenes", "3,2", "--configs", "13,2,2",
            "--split-sizes", "70,4,4", "--image-size", "32",
            "--val-scenes", "1", "--room-xy", "3.2,4.5", "--room-z", "2.6,3.2",
        ])
        assert r.exit_code == 0, r.output
        body = json.loads(r.output[r.output.index("{"):])
        assert body["samples"]["train"] == 70
        assert (out / "manifest.json").exists()
        assert (out / "catalog.json").exists()


class TestTrainEval:
    def test_train_and_eval_cli(self, runner, small_dataset, tmp_path_factory):
        work = tmp_path_factory.mktemp("cli_run")
        cfg = {
            "dataset_root": str(small_dataset.root),
            "out_dir": str(work / "run"),
            "model": {
                "token_dim": 32, "ff_dim": 48, "decoder_layers": 1,
                "encoder_layers": 1, "n_heads": 4,
                "upsampler_channels": [16, 12, 10, 8, 6], "backbone_dim": 32,
                "backbone_patch": 8, "backbone_layers": 1,
                "backbone_tokens": 16, "image_size": 32,
            },
            "lr": 3e-4, "batch_size": 4, "max_steps": 2,
            "eval_every": 0, "checkpoint_every": 0, "no_matcher": True,
        }
        cfg_path = work / "train.json"
        cfg_path.write_text(json.dumps(cfg))
        r = runner.invoke(main, ["train", "--config", str(cfg_path)])
        assert r.exit_code == 0, r.output
        summary = json.loads(r.output[r.output.index("{"):])
        assert summary["steps"] == 2

        report = work / "report.json"
        r2 = runner.invoke(main, [
            "eval", "run", "--split", "uu",
            "--checkpoint", summary["checkpoint"],
            "--data", str(small_dataset.root),
            "--report", str(report),
        ])
        assert r2.exit_code == 0, r2.output
        assert "MatC" in r2.output
        assert report.exists()
        body = json.loads(report.read_text())
        assert body["n_samples"] == len(small_dataset.records("uu"))

    def test_data_root_env(self, runner, small_dataset, tmp_path_factory, monkeypatch):
        monkeypatch.delenv("MATRIR_DATA_ROOT", raising=False)
        r = runner.invoke(main, [
            "eval", "run", "--split", "uu", "--checkpoint", __file__,
        ])
        assert r.exit_code != 0
        assert "MATRIR_DATA_ROOT" in r.output
