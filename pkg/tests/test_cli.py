import json
from pathlib import Path

import numpy as np
import pytest

from rigview.cli import main
from rigview.synthgen import Scenario


@pytest.fixture(scope="module")
def small_run(tmp_path_factory):
    """One end-to-end CLI run: synth -> run; shared by the checks below."""
    root = tmp_path_factory.mktemp("cli")
    spec = Scenario(
        width=240, height=180, fps=30.0, duration=60, n_cameras=3,
        misalignment=0.8,
    ).to_json()
    spec_path = root / "scenario.json"
    spec_path.write_text(json.dumps(spec))
    scene = root / "scene"
    assert main(["synth", "--spec", str(spec_path), "--out", str(scene), "--seed", "3"]) == 0

    cfg = {"doo_stride_seconds": 0.1, "cadence": 10, "dwell_min": 10}
    cfg_path = root / "config.json"
    cfg_path.write_text(json.dumps(cfg))
    out = root / "run"
    code = main(
        [
            "run",
            "--manifest", str(scene / "manifest.json"),
            "--out", str(out),
            "--config", str(cfg_path),
            "--seed", "1",
        ]
    )
    assert code == 0
    return root, scene, out, cfg_path


def test_run_outputs_exist(small_run):
    _, _, out, _ = small_run
    assert (out / "report.json").is_file()
    assert (out / "timeline.json").is_file()
    assert (out / "selection.json").is_file()
    assert (out / "metrics.json").is_file()
    assert (out / "atlas_000.json").is_file()
    frames = sorted((out / "frames").glob("*.png"))
    assert len(frames) == 60


def test_report_contents(small_run):
    _, _, out, _ = small_run
    report = json.loads((out / "report.json").read_text())
    assert report["timeline"]["segments"][0]["start"] == 1
    assert report["metrics"]["itf_db"] > 0
    assert "timings" not in report


def test_run_is_seed_deterministic(small_run, tmp_path):
    root, scene, out, cfg_path = small_run
    out2 = tmp_path / "run2"
    code = main(
        [
            "run",
            "--manifest", str(scene / "manifest.json"),
            "--out", str(out2),
            "--config", str(cfg_path),
            "--seed", "1",
        ]
    )
    assert code == 0
    assert (out / "report.json").read_bytes() == (out2 / "report.json").read_bytes()


def test_run_missing_manifest_fails(tmp_path, capsys):
    code = main(["run", "--manifest", str(tmp_path / "nope.json"), "--out", str(tmp_path / "o")])
    assert code == 1
    assert "error" in capsys.readouterr().err


def test_evaluate_identical_dirs(small_run, tmp_path, capsys):
    _, _, out, _ = small_run
    frames = out / "frames"
    result_path = tmp_path / "cmp.json"
    code = main(["evaluate", str(frames), str(frames), "--out", str(result_path)])
    assert code == 0
    result = json.loads(result_path.read_text())
    assert result["itf_ratio_a_over_b"] == pytest.approx(1.0)
    assert result["a"]["itf_db"] == result["b"]["itf_db"]


def test_evaluate_missing_dir_fails(tmp_path, capsys):
    code = main(["evaluate", str(tmp_path / "a"), str(tmp_path / "b")])
    assert code == 1
    assert "error" in capsys.readouterr().err


def test_synth_bad_spec_fails(tmp_path, capsys):
    spec = tmp_path / "bad.json"
    spec.write_text(json.dumps({"duration": 0}))
    code = main(["synth", "--spec", str(spec), "--out", str(tmp_path / "o")])
    assert code == 1
    assert "error" in capsys.readouterr().err
