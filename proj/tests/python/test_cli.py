"""Exit-code contract of the softrecon CLI."""

import json
import os
import subprocess

import pytest


@pytest.fixture(scope="module")
def cli():
    path = os.environ.get("SOFTRECON_CLI")
    if not path or not os.path.exists(path):
        pytest.skip("SOFTRECON_CLI not set")
    return path


def run(cli, *args):
    return subprocess.run([cli, *args], capture_output=True, text=True)


def test_help_and_version_exit_zero(cli):
    assert run(cli, "--help").returncode == 0
    assert run(cli, "--version").returncode == 0
    assert run(cli, "simulate", "--help").returncode == 0


def test_bad_config_exits_two(cli, tmp_path):
    cfg = tmp_path / "bad.json"
    cfg.write_text("{]")
    r = run(cli, "simulate", "--config", str(cfg), "--out", str(tmp_path / "out"))
    assert r.returncode == 2
    assert "softrecon: error:" in r.stderr


def test_wrong_version_exits_two(cli, tmp_path):
    cfg = tmp_path / "v9.json"
    cfg.write_text(json.dumps({"format_version": 9, "task": "joint"}))
    r = run(cli, "simulate", "--config", str(cfg), "--out", str(tmp_path / "out"))
    assert r.returncode == 2


def test_missing_file_exits_three(cli, tmp_path):
    r = run(cli, "simulate", "--config", str(tmp_path / "absent.json"),
            "--out", str(tmp_path / "out"))
    assert r.returncode == 3
    assert "softrecon: error:" in r.stderr


def test_unreadable_model_exits_three(cli, tmp_path):
    r = run(cli, "replay", "--model", str(tmp_path / "nope.json"),
            "--log", str(tmp_path / "nope.csv"),
            "--stats", str(tmp_path / "nope2.json"),
            "--out", str(tmp_path / "out"))
    assert r.returncode == 3
