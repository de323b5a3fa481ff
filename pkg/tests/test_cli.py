import json

import numpy as np
import pytest

from src.cli import EXIT_DATA, EXIT_OK, EXIT_SELFTEST, EXIT_USAGE, StereoCLI
from src.dataset.pfm import read_pfm
from src.numerics.checkpoint import read_manifest

TINY_CONFIG = """\
# tiny network for fast end-to-end runs
feature_channels = 16
groups = 8
max_disparity = 16
mca.state_dim = 4
hfdo.context_channels = 4
crop_height = 32
crop_width = 64
steps = 2
"""


def run(*argv):
    return StereoCLI().run([str(a) for a in argv])


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    """A synthetic dataset and a checkpoint trained on it for two steps."""
    root = tmp_path_factory.mktemp("cli")
    config = root / "tiny.cfg"
    config.write_text(TINY_CONFIG)
    data = root / "data"
    assert run("synth", "--config", config, "--out", data, "--count", 2, "--height", 32, "--width", 64, "--near", 8, "--far", 4) == EXIT_OK
    checkpoint = root / "tiny.ckpt"
    code = run("train", "--config", config, "--manifest", data / "manifest.tsv", "--checkpoint", checkpoint, "--out", root / "train")
    assert code == EXIT_OK
    return {"root": root, "config": config, "data": data, "checkpoint": checkpoint}


class TestSynthAndTrain:
    def test_synth_outputs(self, workspace):
        data = workspace["data"]
        lines = (data / "manifest.tsv").read_text().splitlines()
        assert lines[0].split("\t") == ["rds_000_left.png", "rds_000_right.png", "rds_000_disp.pfm", "rds_000.calib"]
        gt = read_pfm(data / "rds_000_disp.pfm")
        assert np.isinf(gt[:, :4]).all()
        assert set(np.unique(gt[np.isfinite(gt)])) <= {4.0, 8.0}

    def test_train_outputs(self, workspace):
        curve = (workspace["root"] / "train" / "loss_curve.tsv").read_text().splitlines()
        assert curve[0] == "step\tepoch\ttotal\tloss_f\tloss_cg\tloss_dr"
        assert len(curve) == 3
        meta = read_manifest(workspace["checkpoint"])["meta"]
        assert meta["model"]["groups"] == 8


class TestInferEvalBench:
    def test_infer_writes_all_outputs(self, workspace, tmp_path):
        data = workspace["data"]
        code = run(
            "infer",
            "--checkpoint", workspace["checkpoint"],
            "--left", data / "rds_000_left.png",
            "--right", data / "rds_000_right.png",
            "--gt", data / "rds_000_disp.pfm",
            "--calib", data / "rds_000.calib",
            "--out", tmp_path,
        )
        assert code == EXIT_OK
        disparity = read_pfm(tmp_path / "disparity.pfm")
        assert disparity.shape == (32, 64)
        assert disparity.min() >= 0.0
        assert read_pfm(tmp_path / "depth.pfm").shape == (32, 64)
        assert (tmp_path / "error_map.png").exists()
        rows = [json.loads(line) for line in (tmp_path / "report.jsonl").read_text().splitlines()]
        assert rows[-1]["sample"] == "__aggregate__"

    def test_eval_reports_every_sample(self, workspace, tmp_path, capsys):
        code = run("eval", "--checkpoint", workspace["checkpoint"], "--manifest", workspace["data"] / "manifest.tsv", "--out", tmp_path)
        assert code == EXIT_OK
        rows = [json.loads(line) for line in (tmp_path / "report.jsonl").read_text().splitlines()]
        assert [r["sample"] for r in rows] == ["rds_000_left", "rds_001_left", "__aggregate__"]
        assert "mae_px" in capsys.readouterr().out

    def test_bench_uses_checkpoint_size(self, workspace, capsys):
        code = run("bench", "--checkpoint", workspace["checkpoint"], "--height", 32, "--width", 64, "--iters", 10)
        assert code == EXIT_OK
        assert "parameters" in capsys.readouterr().out


class TestExitCodes:
    def test_selftest_passes(self):
        assert run("selftest") == EXIT_OK

    def test_corrupted_selftest(self):
        assert run("selftest", "--corrupt-haar") == EXIT_SELFTEST

    def test_missing_argument(self):
        with pytest.raises(SystemExit) as exc:
            run("infer", "--left", "a.png")
        assert exc.value.code == EXIT_USAGE

    def test_no_command(self):
        assert run() == EXIT_USAGE

    def test_malformed_override(self, tmp_path):
        assert run("synth", "--set", "no-equals-sign", "--out", tmp_path) == EXIT_USAGE

    def test_invalid_config_value(self, tmp_path):
        assert run("synth", "--set", "max_disparity=30", "--out", tmp_path) == EXIT_USAGE

    def test_train_needs_manifest(self, tmp_path):
        assert run("train", "--out", tmp_path) == EXIT_USAGE

    def test_missing_manifest_file(self, tmp_path):
        assert run("train", "--manifest", tmp_path / "absent.tsv", "--out", tmp_path) == EXIT_DATA

    def test_missing_checkpoint(self, tmp_path):
        code = run("infer", "--checkpoint", tmp_path / "absent.ckpt", "--left", "l.png", "--right", "r.png", "--out", tmp_path)
        assert code == EXIT_DATA

    def test_pattern_out_of_range(self, tmp_path):
        assert run("synth", "--set", "max_disparity=16", "--count", 1, "--height", 16, "--width", 32, "--out", tmp_path) == EXIT_DATA

    def test_bench_rejects_few_iterations(self):
        assert run("bench", "--height", 32, "--width", 64, "--iters", 3) == EXIT_DATA

    def test_malformed_ground_truth(self, workspace, tmp_path):
        data = workspace["data"]
        (tmp_path / "bad.pfm").write_bytes(b"Pf\n64 32\n--1\n" + np.zeros(32 * 64, dtype="<f4").tobytes())
        code = run(
            "infer",
            "--checkpoint", workspace["checkpoint"],
            "--left", data / "rds_000_left.png",
            "--right", data / "rds_000_right.png",
            "--gt", tmp_path / "bad.pfm",
            "--out", tmp_path,
        )
        assert code == EXIT_DATA


class TestDefaultCheckpoint:
    def test_train_writes_into_output_dir(self, workspace, tmp_path, monkeypatch):
        monkeypatch.setattr("src.models.run_config.CHECKPOINT_FILE", None)
        out = tmp_path / "run"
        code = run("train", "--config", workspace["config"], "--manifest", workspace["data"] / "manifest.tsv", "--steps", 1, "--out", out)
        assert code == EXIT_OK
        assert read_manifest(out / "rresm.ckpt")["meta"]["model"]["groups"] == 8
