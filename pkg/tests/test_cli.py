import json
import subprocess
import sys

import pytest
import yaml

from tiucb.cli import EXIT_INVALID, EXIT_OK, EXIT_RUNTIME, main


@pytest.fixture
def config(tmp_path):
    data = {
        "horizon": 200,
        "replications": 2,
        "seed": 3,
        "output_dir": str(tmp_path / "out"),
        "environment": {
            "kind": "arms",
            "arms": [{"type": "constant", "value": 0.5}, {"type": "sequence", "values": [0.1, 0.9]}],
        },
        "policies": [{"name": "ti-ucb", "params": {"omega": 8}}, {"name": "kl-ucb"}],
    }
    path = tmp_path / "exp.yaml"
    path.write_text(yaml.safe_dump(data))
    return path


def test_validate(config, capsys):
    assert main(["validate", str(config)]) == EXIT_OK
    assert capsys.readouterr().out.strip() == "ok"


def test_run_writes_files(config, tmp_path, capsys):
    assert main(["run", str(config)]) == EXIT_OK
    out = tmp_path / "out"
    for name in ("regret_curves.csv", "detections.csv", "manifest.json", "plot_data.json", "timing.json"):
        assert (out / name).exists()
    assert "ti-ucb\tfinal_regret=" in capsys.readouterr().out


def test_flags_override_config(config, tmp_path):
    other = tmp_path / "elsewhere"
    assert main(["run", str(config), "--horizon", "40", "--replications", "1", "--out", str(other), "--debug"]) == 0
    manifest = json.loads((other / "manifest.json").read_text())
    assert manifest["config"]["horizon"] == 40 and manifest["config"]["replications"] == 1
    assert (other / "replications.npz").exists()


def test_sweep(config, tmp_path, capsys):
    assert main(["sweep", str(config), "--omegas", "1,2,4", "--horizon", "60"]) == EXIT_OK
    lines = (tmp_path / "out" / "sweep.csv").read_text().splitlines()
    assert lines[0] == "omega,mean_final_regret,stderr" and len(lines) == 4
    assert capsys.readouterr().out.count("omega=") == 3


def test_oracle(config, capsys):
    assert main(["oracle", str(config), "--horizon", "4"]) == EXIT_OK
    report = json.loads(capsys.readouterr().out)
    assert report["counts"] == [4, 0] and report["total_reward"] == pytest.approx(2.0)


def test_invalid_config_exit_two(tmp_path, capsys):
    path = tmp_path / "bad.yaml"
    path.write_text(yaml.safe_dump({"horizon": -1, "environment": {"kind": "arms"}, "policies": []}))
    assert main(["validate", str(path)]) == EXIT_INVALID
    err = capsys.readouterr().err
    assert "horizon" in err and "policies" in err


def test_bad_policy_parameter_exit_two(config, capsys):
    data = yaml.safe_load(config.read_text())
    data["policies"] = [{"name": "sw-ucb", "params": {"tau": 0}}]
    config.write_text(yaml.safe_dump(data))
    assert main(["run", str(config)]) == EXIT_INVALID


def test_missing_file_exit_one(tmp_path, capsys):
    assert main(["run", str(tmp_path / "nope.yaml")]) == EXIT_RUNTIME
    assert "error" in capsys.readouterr().err


def test_runtime_failure_exit_one(tmp_path, capsys):
    trace = tmp_path / "t.csv"
    trace.write_text("arm,pull_index,reward\n0,1,0.5\n0,2,0.5\n")
    path = tmp_path / "c.yaml"
    path.write_text(yaml.safe_dump({"horizon": 5, "environment": {"kind": "trace", "path": "t.csv"},
                                    "policies": [{"name": "sw-ucb"}], "output_dir": str(tmp_path / "o")}))
    assert main(["run", str(path)]) == EXIT_RUNTIME
    assert "trace has 2 entries" in capsys.readouterr().err


def test_oracle_without_means_exit_one(tmp_path, capsys):
    trace = tmp_path / "t.csv"
    trace.write_text("arm,pull_index,reward\n0,1,0.5\n")
    path = tmp_path / "c.yaml"
    path.write_text(yaml.safe_dump({"horizon": 1, "environment": {"kind": "trace", "path": "t.csv",
                                                                  "known_means": False},
                                    "policies": [{"name": "sw-ucb"}]}))
    assert main(["oracle", str(path)]) == EXIT_RUNTIME


def test_console_script_entry(config):
    proc = subprocess.run([sys.executable, "-m", "tiucb.cli", "validate", str(config)], capture_output=True, text=True)
    assert proc.returncode == 0 and proc.stdout.strip() == "ok"
