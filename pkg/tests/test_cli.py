import csv
import json

import pytest

from gcreg import cli
from gcreg.report import LONG_COLUMNS

TINY = """\
model.depth = 2
model.width = 8
model.dropout = 0
data.classes = 3
data.per_class = 20
data.test_per_class = 5
data.dim = 6
run.epochs = 2
run.seeds = 0,1
"""


@pytest.fixture
def cfg_file(tmp_path):
    p = tmp_path / "tiny.cfg"
    p.write_text(TINY)
    return p


def run(*argv):
    return cli.main(["-q", *map(str, argv)])


def test_train_writes_outputs(tmp_path, cfg_file):
    out = tmp_path / "run"
    assert run("train", "-c", cfg_file, "--out", out) == 0
    for name in ("trace_seed0.csv", "trace_seed1.csv", "summary.json", "checkpoint_seed0.json"):
        assert (out / name).is_file()


def test_flags_override_file(tmp_path, cfg_file):
    out = tmp_path / "run"
    argv = ["train", "-c", cfg_file, "--out", out, "--reg", "l1", "--gate", "epoch",
            "--gamma", "5", "--lambda", "1e-3", "--set", "reg.lambda=0.5"]
    assert run(*argv) == 0
    echo = json.loads((out / "summary.json").read_text())["config"]
    assert (echo["reg.kind"], echo["reg.gate"], echo["reg.gamma"], echo["reg.lambda"]) == ("l1", "epoch", 5, 1e-3)
    assert echo["model.width"] == 8


def test_unknown_key_exit_2(tmp_path, capsys):
    bad = tmp_path / "bad.cfg"
    bad.write_text("lambda_strenght = 0.1\n")
    assert run("train", "-c", bad, "--out", tmp_path / "x") == 2
    assert "lambda_strenght" in capsys.readouterr().err


def test_bad_value_exit_2(tmp_path, cfg_file, capsys):
    assert run("train", "-c", cfg_file, "--out", tmp_path / "x", "--set", "opt.momentum=2") == 2
    assert "opt" in capsys.readouterr().err


def test_missing_config_exit_3(tmp_path):
    assert run("train", "-c", tmp_path / "nope.cfg", "--out", tmp_path / "x") == 3


def test_unwritable_output_exit_3(tmp_path, cfg_file):
    blocker = tmp_path / "file"
    blocker.write_text("")
    assert run("train", "-c", cfg_file, "--out", blocker / "sub") == 3


def test_rerun_from_summary_is_bitwise(tmp_path, cfg_file):
    a, b = tmp_path / "a", tmp_path / "b"
    assert run("train", "-c", cfg_file, "--out", a, "--reg", "l2", "--lambda", "0.01") == 0
    assert run("train", "--from-summary", a / "summary.json", "--out", b) == 0
    for name in ("trace_seed0.csv", "trace_seed1.csv", "layers_seed0.csv"):
        assert (a / name).read_bytes() == (b / name).read_bytes()


def test_sweep_lambdas(tmp_path, cfg_file, capsys):
    out = tmp_path / "sweep"
    assert run("sweep", "-c", cfg_file, "--out", out, "--lambdas", "1e-4,1e-3,1e-2", "--gate", "constant") == 0
    rows = list(csv.DictReader((out / "sweep.csv").open()))
    assert [float(r["lambda"]) for r in rows] == [1e-4, 1e-3, 1e-2]
    assert "tolerance_level" in rows[0]
    assert all((out / f"lambda_{lam}" / "summary.json").is_file() for lam in ("0.0001", "0.001", "0.01"))
    assert "tolerance_level=" in capsys.readouterr().out


def test_sweep_depths(tmp_path, cfg_file):
    out = tmp_path / "depth"
    assert run("sweep", "-c", cfg_file, "--out", out, "--lambdas", "1e-3,1e-1", "--depths", "1,2") == 0
    rows = list(csv.DictReader((out / "depth_tolerance.csv").open()))
    assert [r["depth"] for r in rows] == ["1", "2"]


@pytest.mark.parametrize("grid", ["", ",", "3e-3,1e-3"])
def test_bad_grid_exit_2(tmp_path, cfg_file, grid):
    assert run("sweep", "-c", cfg_file, "--out", tmp_path / "s", "--lambdas", grid) == 2


def test_argparse_errors_exit_2(tmp_path):
    with pytest.raises(SystemExit) as err:
        cli.main(["train"])
    assert err.value.code == 2


def test_report_merge_idempotent_and_svg(tmp_path, cfg_file):
    run_dir = tmp_path / "run"
    assert run("train", "-c", cfg_file, "--out", run_dir) == 0
    merged = tmp_path / "rep" / "long.csv"
    assert run("report", run_dir / "trace_seed0.csv", run_dir / "trace_seed1.csv", "--out", merged,
               "--svg", tmp_path / "charts") == 0
    rows = list(csv.DictReader(merged.open()))
    assert tuple(rows[0].keys()) == LONG_COLUMNS
    assert {r["run_id"] for r in rows} == {"run/trace_seed0", "run/trace_seed1"}
    keys = [(r["run_id"], r["epoch"], r["metric"]) for r in rows]
    assert len(keys) == len(set(keys))
    metrics = {r["metric"] for r in rows}
    charts = sorted(p.name for p in (tmp_path / "charts").glob("*.svg"))
    assert charts == sorted(f"{m}_vs_epoch.svg" for m in metrics
                            if any(r["metric"] == m and r["value"] for r in rows))

    again = tmp_path / "again.csv"
    assert run("report", merged, "--out", again) == 0
    assert again.read_bytes() == merged.read_bytes()


def test_report_sweep_table(tmp_path, cfg_file):
    out = tmp_path / "sweep"
    assert run("sweep", "-c", cfg_file, "--out", out, "--lambdas", "1e-3,1e-2") == 0
    assert run("report", out / "sweep.csv", "--out", tmp_path / "l.csv", "--svg") == 0
    assert (tmp_path / "test_acc_mean_vs_lambda.svg").is_file()


def test_report_missing_input_exit_3(tmp_path):
    assert run("report", tmp_path / "missing.csv", "--out", tmp_path / "o.csv") == 3


def test_report_unknown_csv_exit_3(tmp_path):
    odd = tmp_path / "odd.csv"
    odd.write_text("a,b\n1,2\n")
    assert run("report", odd, "--out", tmp_path / "o.csv") == 3
