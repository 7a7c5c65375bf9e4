import json
import os
import subprocess

import pytest


def run_cli(cli, *args):
    subprocess.run([cli, *args], check=True, capture_output=True, text=True)


@pytest.fixture(scope="session")
def cli_artifacts(tmp_path_factory):
    """A tiny simulate -> prepare -> train pipeline driven through the CLI."""
    cli = os.environ.get("SOFTRECON_CLI")
    if not cli or not os.path.exists(cli):
        pytest.skip("SOFTRECON_CLI not set")
    root = tmp_path_factory.mktemp("cli")

    batches = []
    for name, role, seed in [("a", "train", 11), ("b", "validation", 12), ("c", "test", 13)]:
        scenario = {
            "format_version": 1,
            "task": "joint",
            "duration_s": 2,
            "seed": seed,
            "way_poses": {"count": 3},
            "noise": {"marker_mm": 0.2, "sensor": 0.005},
        }
        cfg = root / f"scenario_{name}.json"
        cfg.write_text(json.dumps(scenario))
        sim = root / f"sim_{name}"
        run_cli(cli, "simulate", "--config", str(cfg), "--out", str(sim))
        batches.append(
            {
                "name": name,
                "role": role,
                "sensors": str(sim / "sensors.csv"),
                "markers": str(sim / "markers.csv"),
                "truth": str(sim / "truth.csv"),
            }
        )

    prep = {
        "format_version": 1,
        "layout": str(root / "sim_a" / "layout.json"),
        "batches": batches,
    }
    prep_cfg = root / "prep.json"
    prep_cfg.write_text(json.dumps(prep))
    arch = root / "arch"
    run_cli(cli, "prepare", "--config", str(prep_cfg), "--out", str(arch))

    model_cfg = root / "mvlr.json"
    model_cfg.write_text(json.dumps({"format_version": 1, "kind": "mvlr"}))
    run = root / "run"
    run_cli(cli, "train", "--config", str(model_cfg), "--data", str(arch), "--out", str(run))

    return run / "model.json", arch / "norm_stats.json", arch / "test.csv"
