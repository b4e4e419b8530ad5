import json
import subprocess
import sys
from pathlib import Path

import pytest

from semidet.cli import load_config, main

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


@pytest.fixture
def small_cfg(tmp_path):
    p = tmp_path / "small.toml"
    p.write_text('model = "logistic_feller"\neps_grid = [0.1, 0.05]\nn_paths = 300\nseed = 4\n')
    return p


def test_no_command_and_unknown_command(capsys):
    assert main([]) == 1
    assert main(["frobnicate"]) == 1
    assert "usage" in capsys.readouterr().err


def test_console_script_usage_error():
    proc = subprocess.run([sys.executable, "-m", "semidet.cli", "nope"], capture_output=True, text=True)
    assert proc.returncode == 1
    assert "usage" in proc.stderr


def test_classify_json(tmp_path, capsys):
    code = main(["classify", "--model", "logistic_feller", "--epsilon", "0.1", "--out-dir", str(tmp_path)])
    assert code == 0
    summary = json.loads(capsys.readouterr().out.strip().splitlines()[-1])
    assert summary["left"] == "exit" and summary["right"] == "entrance"
    assert summary["left_label"] == "attracting+exit"
    assert (tmp_path / "report.json").exists() and (tmp_path / "scale_profile.csv").exists()


def test_verify_is_byte_identical(tmp_path, small_cfg):
    runs = []
    for i, workers in enumerate(("1", "3", "1")):
        out = tmp_path / f"r{i}"
        assert main(["verify", "gronwall", "--config", str(small_cfg), "--out-dir", str(out),
                     "--workers", workers]) in (0, 2)
        runs.append((out / "report.json").read_bytes())
    assert runs[0] == runs[1] == runs[2]


def test_seed_flag_overrides_config(tmp_path, small_cfg):
    main(["verify", "linearization", "--config", str(small_cfg), "--out-dir", str(tmp_path / "a")])
    main(["verify", "linearization", "--config", str(small_cfg), "--seed", "5", "--out-dir", str(tmp_path / "b")])
    a = json.loads((tmp_path / "a" / "report.json").read_text())
    b = json.loads((tmp_path / "b" / "report.json").read_text())
    assert a["config"]["seed"] == 4 and b["config"]["seed"] == 5
    assert a["metrics"] != b["metrics"]


def test_failing_verdict_exits_2(tmp_path):
    cfg = tmp_path / "bad.json"
    # at eps = 0.3 the critical time is short and the median at T/2 is far above 0.1 x_c
    cfg.write_text(json.dumps({"model": "kimura_fisher_wright", "epsilon": 0.3, "n_paths": 50, "n_points": 21}))
    assert main(["verify", "three-stages", "--config", str(cfg), "--out-dir", str(tmp_path)]) == 2
    assert json.loads((tmp_path / "report.json").read_text())["passed"] is False


def test_json_config_and_formats(tmp_path):
    out = tmp_path / "ga"
    assert main(["limit-law", "--config", str(CONFIGS / "gilpin_ayala.json"), "--n", "500", "--format", "json",
                 "--out-dir", str(out)]) == 0
    data = json.loads((out / "limit_law.json").read_text())
    assert len(data["columns"]["W"]) == 500
    rep = json.loads((out / "report.json").read_text())
    assert rep["config"]["model"]["name"] == "gilpin_ayala_pow"


def test_flow_simulate_branching(tmp_path):
    assert main(["flow", "--model", "logistic_feller", "--grid-size", "201", "--out-dir", str(tmp_path / "f")]) == 0
    assert (tmp_path / "f" / "flow.csv").exists()
    assert main(["simulate", "--model", "logistic_feller", "--epsilon", "0.1", "--n-paths", "5",
                 "--out-dir", str(tmp_path / "s")]) == 0
    assert (tmp_path / "s" / "paths.csv").exists()
    assert main(["branching", "--family", "k_ary", "--param", "k=3", "--s-max", "4", "--points", "41",
                 "--out-dir", str(tmp_path / "b")]) == 0
    rep = json.loads((tmp_path / "b" / "report.json").read_text())
    assert rep["metrics"]["residual"] < 1e-6


def test_errors_exit_1(tmp_path, capsys):
    assert main(["branching", "--family", "nope", "--out-dir", str(tmp_path)]) == 1
    assert main(["flow", "--config", str(tmp_path / "missing.toml"), "--out-dir", str(tmp_path)]) == 1
    bad = tmp_path / "bad.toml"
    bad.write_text("model = [\n")
    assert main(["flow", "--config", str(bad), "--out-dir", str(tmp_path)]) == 1
    assert "error" in capsys.readouterr().err


def test_report_summarises(tmp_path, capsys):
    main(["classify", "--model", "logistic_feller", "--out-dir", str(tmp_path / "one")])
    capsys.readouterr()
    assert main(["report", "--out-dir", str(tmp_path)]) == 0
    assert "PASS  classify" in capsys.readouterr().out


def test_load_config_toml_and_json(tmp_path):
    assert load_config(CONFIGS / "lf.toml")["eps_grid"] == [0.1, 0.05, 0.02, 0.01]
    assert load_config(str(CONFIGS / "gilpin_ayala.json"))["seed"] == 3
    assert load_config(None) == {}
