"""Shared fixtures: rendered synthetic scenes and small image helpers."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
import pytest

from rigview.geometry import Homography
from rigview.ingest import from_hsv, HsvImage, load_manifest
from rigview.synthgen import Scenario, render


@pytest.fixture(scope="session")
def scene_factory(tmp_path_factory):
    """Render-and-cache helper: one directory per named scenario."""
    cache: dict[str, tuple[Path, Path]] = {}
    root = tmp_path_factory.mktemp("scenes")

    def build(name: str, scenario: Scenario, seed: int = 0) -> tuple[Path, Path]:
        if name not in cache:
            cache[name] = render(scenario, root / name, seed)
        return cache[name]

    return build


@pytest.fixture(scope="session")
def static_scene(scene_factory):
    """Small stationary 3-camera recording with a ground-truth sidecar."""
    sc = Scenario(
        width=320, height=240, fps=30.0, duration=12, n_cameras=3,
        noise_sigma=0.0, misalignment=0.8,
    )
    manifest_path, truth_path = scene_factory("static", sc, seed=17)
    return load_manifest(manifest_path), json.loads(truth_path.read_text())


def load_truth_homographies(truth: dict, segment: int = 0) -> dict[str, Homography]:
    return {
        cid: Homography(np.array(v, dtype=np.float64).reshape(3, 3))
        for cid, v in truth["segments"][segment]["to_reference"].items()
    }


def hsv_image(hue, saturation=200, value=180, shape=(60, 80)) -> np.ndarray:
    """BGR image with constant (or per-pixel) HSV planes."""
    h = np.broadcast_to(np.asarray(hue, dtype=np.uint8), shape).copy()
    s = np.broadcast_to(np.asarray(saturation, dtype=np.uint8), shape).copy()
    v = np.broadcast_to(np.asarray(value, dtype=np.uint8), shape).copy()
    return from_hsv(HsvImage(h, s, v))


# acceptance verdicts collected by tests/test_acceptance.py
ACCEPTANCE_VERDICTS: list[tuple[int, bool, str]] = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_VERDICTS:
        return
    terminalreporter.section("acceptance criteria")
    for num, ok, detail in sorted(ACCEPTANCE_VERDICTS):
        word = "PASS" if ok else "FAIL"
        terminalreporter.write_line(f"CRITERION {num}: {word} - {detail}")
