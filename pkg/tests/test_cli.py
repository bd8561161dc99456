import json
import subprocess
import sys

import pytest

from gevrey_forge.cli import ENV_VAR, ConfigError, RunConfig, main, read_config_file


def run(args, tmp_path, capsys):
    code = main(list(args) + ["--out", str(tmp_path)])
    return code, capsys.readouterr()


def test_params_output(tmp_path, capsys):
    code, cap = run(["params", "--n", "1", "--m", "2"], tmp_path, capsys)
    assert code == 0
    assert "theta = 4/3" in cap.out and "gamma = 1/3" in cap.out
    doc = json.loads((tmp_path / "params.json").read_text())
    assert doc["pass"] is True
    assert "timestamp" in doc["volatile"]


def test_coeffs_output(tmp_path, capsys):
    code, cap = run(["coeffs", "--n", "0", "--kmax", "8", "--imax", "6"], tmp_path, capsys)
    assert code == 0
    assert "delta oracle: 0 mismatches" in cap.out


def test_content_version_is_deterministic(tmp_path, capsys):
    run(["params", "--n", "0", "--m", "1"], tmp_path, capsys)
    first = json.loads((tmp_path / "params.json").read_text())
    run(["params", "--n", "0", "--m", "1"], tmp_path, capsys)
    second = json.loads((tmp_path / "params.json").read_text())
    assert first["content_version"] == second["content_version"]
    first.pop("volatile"), second.pop("volatile")
    assert first == second


def test_config_file_env_and_flags(tmp_path, monkeypatch, capsys):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# a comment\nn = 1\nm = 2\nR = 5/2  # rational\nR1 = 2\n")
    monkeypatch.setenv(ENV_VAR, str(cfg))
    code, _ = run(["params"], tmp_path, capsys)
    assert code == 0
    doc = json.loads((tmp_path / "params.json").read_text())
    assert doc["config"]["n"] == 1 and doc["config"]["R"] == "5/2"
    code, _ = run(["params", "--n", "2"], tmp_path, capsys)
    doc = json.loads((tmp_path / "params.json").read_text())
    assert doc["config"]["n"] == 2 and doc["config"]["m"] == 2


def test_read_config_file_errors(tmp_path):
    bad = tmp_path / "bad.cfg"
    bad.write_text("n 1\n")
    with pytest.raises(ConfigError):
        read_config_file(bad)
    bad.write_text("colour = red\n")
    with pytest.raises(ConfigError, match="unknown setting"):
        read_config_file(bad)
    bad.write_text("n = 1/2\n")
    with pytest.raises(ConfigError, match="integer"):
        read_config_file(bad)


@pytest.mark.parametrize("args, field", [(["--m", "0"], "m"), (["--R", "-1"], "R"),
                                         (["--rho-max", "20"], "build"), (["--n", "x"], "n"),
                                         (["--config", "/nonexistent.cfg"], "config")])
def test_config_errors_exit_2(args, field, tmp_path, capsys):
    code, cap = run(["params"] + args, tmp_path, capsys)
    assert code == 2
    assert field in cap.err


def test_validate_collects_all_errors():
    with pytest.raises(ConfigError) as info:
        RunConfig(n=-1, m=0, trace_points=3).validate()
    msg = str(info.value)
    assert "n:" in msg and "m:" in msg and "trace_points:" in msg


def test_console_entry_point(tmp_path):
    out = subprocess.run([sys.executable, "-m", "gevrey_forge.cli", "params", "--out", str(tmp_path)],
                         capture_output=True, text=True)
    assert out.returncode == 0
    assert "overall: PASS" in out.stdout
