"""Command-line surface through typer's test runner."""

import copy
import json

import pytest
from typer.testing import CliRunner

from avatar_fields.cli import app
from avatar_fields.config import config_from_dict, dump_run_config
from tests.conftest import TINY

runner = CliRunner()


@pytest.fixture
def tiny_file(tmp_path):
    data = copy.deepcopy(TINY)
    data["train"]["iterations"] = 0
    path = tmp_path / "tiny.json"
    path.write_text(json.dumps(data))
    return path


def test_help_lists_commands():
    result = runner.invoke(app, ["--help"])
    assert result.exit_code == 0
    for name in ("gen-data", "train", "render", "relight", "edit", "eval", "--print-config"):
        assert name in result.output


def test_print_config_is_canonical(tiny_file):
    result = runner.invoke(app, ["--config", str(tiny_file), "--seed", "99", "--print-config"])
    assert result.exit_code == 0
    expected = config_from_dict(json.loads(tiny_file.read_text())).model_copy(update={"seed": 99})
    assert result.stdout == dump_run_config(expected)


def test_bad_config_prints_one_error_line(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text(json.dumps({"train": {"iterations": "many"}}))
    result = runner.invoke(app, ["--config", str(path), "--print-config"])
    assert result.exit_code == 1
    assert "error: config: Invalid config" in result.output
    assert "train.iterations" in result.output


def test_eval_identical_dirs(tiny_dataset, tmp_path):
    out = tmp_path / "metrics"
    result = runner.invoke(app, ["--out", str(out), "eval", str(tiny_dataset), str(tiny_dataset)])
    assert result.exit_code == 0, result.output
    metrics = json.loads((out / "metrics.json").read_text())
    assert metrics["split"] == "val"
    assert [m["frame"] for m in metrics["frames"]] == [1, 5]
    assert metrics["mean_psnr"] == 99.0
    assert metrics["mean_ssim"] == pytest.approx(1.0)
    assert "mean" in (out / "metrics.txt").read_text()


def test_eval_unknown_split(tiny_dataset, tmp_path):
    result = runner.invoke(
        app, ["--out", str(tmp_path), "eval", str(tiny_dataset), str(tiny_dataset), "--split", "test"]
    )
    assert result.exit_code == 1
    assert "error: invalid: Unknown split" in result.output


def test_train_then_render(tiny_dataset, tiny_file, tmp_path):
    run_dir = tmp_path / "run"
    result = runner.invoke(app, ["-q", "--config", str(tiny_file), "--out", str(run_dir), "train", str(tiny_dataset)])
    assert result.exit_code == 0, result.output
    ckpt = run_dir / "checkpoints" / "latest.ckpt"
    assert ckpt.exists()

    renders = tmp_path / "renders"
    args = ["-q", "--out", str(renders), "render", str(ckpt), str(tiny_dataset / "poses.json"), str(tiny_dataset / "cameras.json")]
    result = runner.invoke(app, [*args, "--frames", "8"])
    assert result.exit_code == 0, result.output
    assert (renders / "frames" / "0008.png").exists()
    assert (renders / "shadow" / "0008.nfimg").exists()

    result = runner.invoke(app, [*args, "--frames", "999"])
    assert result.exit_code == 1
    assert "error: dataset: Frame 999 has no camera entry" in result.output

    result = runner.invoke(app, [*args, "--frames", "one"])
    assert result.exit_code == 1
    assert "error: invalid: --frames" in result.output


def test_missing_checkpoint(tiny_dataset, tmp_path):
    result = runner.invoke(
        app,
        ["--out", str(tmp_path), "render", str(tmp_path / "nope.ckpt"),
         str(tiny_dataset / "poses.json"), str(tiny_dataset / "cameras.json")],
    )
    assert result.exit_code == 1
    assert "error: checkpoint: Cannot read checkpoint" in result.output
