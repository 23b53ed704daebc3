import json
import subprocess
import sys

import pytest

from loopforge import cli


def _run(tmp_path, *argv, name="out"):
    out = tmp_path / name
    code = cli.main(["run", *argv, "--out", str(out), "--quiet"])
    return code, out


def test_pass_writes_outputs(tmp_path):
    code, out = _run(tmp_path, "two-point", "--replicas", "4000", "--seed", "5")
    assert code == cli.EXIT_OK
    csv = (out / "two-point.csv").read_text().splitlines()
    assert csv[0].split(",")[:2] == ["experiment", "functional"]
    man = json.loads((out / "two-point.manifest.json").read_text())
    assert man["seed"] == 5
    assert man["command"][:3] == ["loopforge", "run", "two-point"]
    assert man["config"]["replicas"] == 4000
    assert "wall_seconds" in man
    assert "wall_seconds" not in (out / "two-point.json").read_text()


def test_rerun_is_byte_identical(tmp_path):
    args = ["parity", "--graph", "path4", "--replicas", "3000", "--option", "pmf_draws=20000", "--seed", "9"]
    _, a = _run(tmp_path, *args, name="a")
    _, b = _run(tmp_path, *args, "--jobs", "2", name="b")
    assert (a / "parity.csv").read_bytes() == (b / "parity.csv").read_bytes()


@pytest.mark.parametrize("argv", [
    ["two-point", "--graph", "nope"],
    ["two-point", "--x", "1", "--y", "1"],
    ["two-point", "--option", "justtext"],
    ["two-point", "--jobs", "0"],
])
def test_config_errors_exit_two(tmp_path, argv, capsys):
    code, _ = _run(tmp_path, *argv)
    assert code == cli.EXIT_CONFIG
    assert "config error" in capsys.readouterr().err


def test_bad_config_file(tmp_path):
    p = tmp_path / "c.json"
    p.write_text("[1, 2]")
    assert _run(tmp_path, "two-point", "--config", str(p))[0] == cli.EXIT_CONFIG


def test_negative_control_exits_one(tmp_path, capsys):
    code, _ = _run(tmp_path, "switching", "--negative-control", "mass-1.2", "--replicas", "20000", "--seed", "1")
    assert code == cli.EXIT_FAIL
    assert "FAILED" in capsys.readouterr().err


def test_config_file_and_flag_override(tmp_path):
    p = tmp_path / "c.json"
    p.write_text(json.dumps({"graph": "grid3", "replicas": 10, "seed": 4}))
    code, out = _run(tmp_path, "two-point", "--config", str(p), "--replicas", "3000")
    assert code == cli.EXIT_OK
    man = json.loads((out / "two-point.manifest.json").read_text())
    assert man["config"]["graph"] == "grid3"
    assert man["config"]["replicas"] == 3000
    assert man["seed"] == 4
    assert man["config"]["config_path"] == str(p)


def test_seed_from_environment(tmp_path, monkeypatch):
    monkeypatch.setenv("LOOPFORGE_SEED", "77")
    _, out = _run(tmp_path, "two-point", "--replicas", "2000")
    assert json.loads((out / "two-point.manifest.json").read_text())["seed"] == 77


def test_console_entry_point(tmp_path):
    res = subprocess.run([sys.executable, "-m", "loopforge.cli", "--version"], capture_output=True, text=True)
    assert res.returncode == 0 and res.stdout.strip()
