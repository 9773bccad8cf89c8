import csv
import json

import pytest

from awfnet.cli import main
from awfnet.metrics import REPORT_FIELDS

TINY = ["--stem-channels", "8,16", "--epochs", "1"]


@pytest.fixture(scope="module")
def data_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("data")
    assert main(["gen-data", "--num-samples", "80", "--image-size", "16", "--out", str(out)]) == 0
    return out


def test_unknown_flag_is_usage_error(capsys):
    assert main(["train", "--no-such-flag"]) == 1
    err = capsys.readouterr().err
    assert "usage" in err and "--no-such-flag" in err


def test_missing_command(capsys):
    assert main([]) == 1


def test_runtime_failure_exit_code(tmp_path, capsys):
    assert main(["train", "--data", str(tmp_path / "missing"), "--out", str(tmp_path / "r")]) == 2
    assert "DatasetError" in capsys.readouterr().err


def test_bad_value_is_runtime_config_error(tmp_path, data_dir):
    assert main(["train", "--data", str(data_dir), "--channel-mixer", "maybe", "--out", str(tmp_path)]) == 2


def test_train_and_eval(tmp_path, data_dir, capsys):
    run = tmp_path / "run"
    argv = ["train", "--data", str(data_dir), *TINY, "--loss", "bc", "--alpha", "0.5", "--lambda", "0.8",
            "--t", "2", "--out", str(run)]
    assert main(argv) == 0
    report = json.loads((run / "report").read_text())
    loss = report["config"]["train"]["loss"]
    assert (loss["kind"], loss["alpha"], loss["lam"], loss["t"]) == ("BC", 0.5, 0.8, 2.0)
    capsys.readouterr()
    assert main(["eval", "--run", str(run), "--data", str(data_dir)]) == 0
    evaluated = json.loads(capsys.readouterr().out)
    assert evaluated == report["test_report"]


def test_global_flags_before_subcommand(tmp_path, data_dir):
    run = tmp_path / "run"
    assert main(["--seed", "7", "--out", str(run), "train", "--data", str(data_dir), *TINY]) == 0
    assert "seed = 7" in (run / "config").read_text()


def test_config_file_relaunch(tmp_path, data_dir):
    first, second = tmp_path / "a", tmp_path / "b"
    assert main(["train", "--data", str(data_dir), *TINY, "--out", str(first)]) == 0
    assert main(["train", "--config", str(first / "config"), "--out", str(second)]) == 0
    assert (first / "metrics.csv").read_bytes() == (second / "metrics.csv").read_bytes()


def test_ablate_schema(tmp_path, data_dir, capsys):
    out = tmp_path / "ab"
    assert main(["ablate", "--data", str(data_dir), *TINY, "--blocks", "0,3", "--out", str(out)]) == 0
    rows = list(csv.DictReader((out / "ablation.csv").open()))
    assert len(rows) == 2 and [r["blocks"] for r in rows] == ["0", "3"]
    assert set(REPORT_FIELDS) <= set(rows[0])
    assert "blocks,loss,best_epoch" in capsys.readouterr().out


def test_ablate_zero_blocks_matches_direct_train(tmp_path, data_dir):
    out = tmp_path / "ab"
    assert main(["ablate", "--data", str(data_dir), *TINY, "--blocks", "0", "--out", str(out)]) == 0
    assert main(["train", "--data", str(data_dir), *TINY, "--blocks", "0", "--out", str(tmp_path / "t")]) == 0
    assert (out / "blocks0_bc" / "metrics.csv").read_bytes() == (tmp_path / "t" / "metrics.csv").read_bytes()


@pytest.mark.parametrize("argv", [["ablate"], ["ablate", "--blocks", "6"], ["ablate", "--losses", "XX"],
                                  ["ablate", "--blocks", "a,b"]])
def test_ablate_usage_errors(argv):
    assert main(argv) == 1


def test_gradcheck_quick(capsys):
    assert main(["gradcheck", "--seeds", "1", "--no-network"]) == 0
    assert "gradient checks passed" in capsys.readouterr().out
