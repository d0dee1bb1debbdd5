import json

import numpy as np
import pytest

from dula.cli import EXIT_CHECK_FAILED, EXIT_INVALID, EXIT_OK, EXIT_RUNTIME, EXIT_USAGE
from dula.cli import run as main
from dula.kinematics import JointLimits


@pytest.fixture(autouse=True)
def output_root(tmp_path, monkeypatch):
    monkeypatch.setenv("DULA_OUTPUT_DIR", str(tmp_path / "default-out"))
    monkeypatch.chdir(tmp_path)


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    assert main(["gen-data", "--count", "1400", "--seed", "3", "--out-dir", str(root / "gen")]) == EXIT_OK
    assert main(["train", "--data", str(root / "gen" / "train.dula"), "--epochs", "2",
                 "--out-dir", str(root / "train")]) == EXIT_OK
    return root


def q_arg(values):
    return ",".join(repr(float(v)) for v in values)


def test_no_arguments_is_usage_error(capsys):
    assert main([]) == EXIT_USAGE
    assert "usage" in capsys.readouterr().err


def test_unknown_flag_is_usage_error():
    assert main(["gen-data", "--bogus"]) == EXIT_USAGE
    assert main(["frobnicate"]) == EXIT_USAGE


def test_gen_data_outputs(workspace):
    gen = workspace / "gen"
    for name in ("train.dula", "test.dula", "summary.json", "manifest.json", "timing.json"):
        assert (gen / name).exists()
    summary = json.loads((gen / "summary.json").read_text())
    assert summary["schema_version"] == 1
    assert sum(summary["histogram"]) == 1400
    manifest = json.loads((gen / "manifest.json").read_text())
    assert manifest["command"] == "gen-data" and manifest["config"]["seed"] == 3
    assert set(manifest["outputs"]) >= {"train.dula", "test.dula", "summary.json"}


def test_train_and_eval(workspace):
    ckpt = workspace / "train" / "checkpoint.json"
    doc = json.loads(ckpt.read_text())
    assert doc["meta"]["train_config"]["epochs"] == 2
    out = workspace / "eval"
    assert main(["eval", "--model", str(ckpt), "--data", str(workspace / "gen" / "test.dula"),
                 "--out-dir", str(out)]) == EXIT_OK
    report = json.loads((out / "eval.json").read_text())
    assert 0.0 <= report["accuracy"] <= 1.0
    assert sum(map(sum, report["confusion_matrix"]["counts"])) == report["test_count"]


def test_grad_check_passes_and_flags_failure(workspace, tmp_path):
    ckpt = str(workspace / "train" / "checkpoint.json")
    assert main(["grad-check", "--model", ckpt, "--n", "30", "--out-dir", str(tmp_path / "a")]) == EXIT_OK
    report = json.loads((tmp_path / "a" / "grad_check.json").read_text())
    assert report["max_rel_error"] < 1e-4 and "skipped_near_kink" in report
    assert main(["grad-check", "--model", ckpt, "--n", "30", "--tolerance", "1e-30",
                 "--out-dir", str(tmp_path / "b")]) == EXIT_CHECK_FAILED


def test_optimize_writes_result(tmp_path):
    q0 = np.full(10, 0.3)
    assert main(["optimize", "--q0", q_arg(q0), "--out-dir", str(tmp_path / "o")]) == EXIT_OK
    result = json.loads((tmp_path / "o" / "result.json").read_text())
    assert result["result"]["constraint_value"] < 1e-4
    assert JointLimits.default().contains(np.array(result["result"]["q_star"]))


def test_optimize_rejects_bad_input(tmp_path):
    assert main(["optimize", "--q0", "1,2", "--out-dir", str(tmp_path / "o")]) == EXIT_INVALID
    assert main(["optimize", "--q0", q_arg(np.full(10, 9.0)), "--out-dir", str(tmp_path / "o")]) == EXIT_INVALID


def test_optimize_unreachable_target_is_runtime_failure(tmp_path):
    target = tmp_path / "target.json"
    target.write_text(json.dumps({"position": [4.0, 4.0, 4.0], "orientation": [1, 0, 0, 0]}))
    code = main(["optimize", "--q0", q_arg(np.zeros(10)), "--target-pose", str(target),
                 "--out-dir", str(tmp_path / "o")])
    assert code == EXIT_RUNTIME


def test_missing_data_file_is_invalid_input(tmp_path):
    assert main(["train", "--data", str(tmp_path / "nope.dula"), "--out-dir", str(tmp_path / "t")]) == EXIT_INVALID


def test_export_tables(tmp_path):
    assert main(["export-tables", "--out-dir", str(tmp_path / "x")]) == EXIT_OK
    tables = json.loads((tmp_path / "x" / "rula_tables.json").read_text())
    assert tables["table_c"]["values"][0][0] == 1 and tables["table_c"]["values"][7][6] == 7


def test_simulate_report_and_replay(tmp_path):
    sim = tmp_path / "sim"
    args = ["simulate", "--seeds", "0-1", "--correction", "none,grad", "--out-dir", str(sim)]
    assert main(args) == EXIT_OK
    lines = (sim / "episode_000_grad.jsonl").read_text().splitlines()
    assert lines and "suggested_rula" in json.loads(lines[0])
    assert main(["report", "--traces", str(sim), "--out-dir", str(tmp_path / "rep")]) == EXIT_OK
    header = (tmp_path / "rep" / "report_000_grad.csv").read_text().splitlines()[0]
    assert header == "step,time,suggested_rula,uncorrected_rula,corrected_rula"
    again = tmp_path / "again"
    assert main(["replay", str(sim / "manifest.json"), "--out-dir", str(again)]) == EXIT_OK
    for f in sim.iterdir():
        if f.name != "timing.json":
            assert (again / f.name).read_bytes() == f.read_bytes(), f.name


def test_default_output_dir_from_environment(tmp_path):
    assert main(["export-tables"]) == EXIT_OK
    assert (tmp_path / "default-out" / "rula_tables.json").exists()
