"""Video stability metrics: interframe fidelity and feature-point speed."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from . import features


class MetricsError(Exception):
    pass


@dataclass
class MetricsReport:
    itf_db: float
    avspeed: float | None
    frames_evaluated: int
    tracked_points: int

    def to_json(self) -> dict:
        return {
            "itf_db": self.itf_db,
            "avspeed_px_per_frame": self.avspeed,
            "frames_evaluated": self.frames_evaluated,
            "tracked_points": self.tracked_points,
        }

    def save(self, path: str | Path) -> None:
        with open(path, "w") as f:
            json.dump(self.to_json(), f, indent=1, sort_keys=True)


def psnr(a: np.ndarray, b: np.ndarray, cap: float = 100.0) -> float:
    """Peak signal-to-noise ratio in dB, capped for identical images."""
    if a.shape != b.shape:
        raise MetricsError(f"dimension mismatch: {a.shape} vs {b.shape}")
    diff = a.astype(np.float64) - b.astype(np.float64)
    mse = float(np.mean(diff * diff))
    if mse == 0.0:
        return cap
    return min(cap, 10.0 * np.log10(255.0**2 / mse))


def itf(frames: Sequence[np.ndarray], cap: float = 100.0) -> float:
    """Mean PSNR between consecutive frames."""
    if len(frames) < 2:
        raise MetricsError("fewer than 2 frames")
    total = 0.0
    for a, b in zip(frames, frames[1:]):
        total += psnr(a, b, cap)
    return total / (len(frames) - 1)


def avspeed(
    frames: Sequence[np.ndarray],
    max_points: int = 400,
    ratio: float = 0.8,
) -> tuple[float | None, int]:
    """Mean per-frame displacement of matched feature points.

    Points are matched between consecutive frames with the ratio test;
    returns (speed, number of tracked point observations).  Speed is None
    when nothing could be tracked.
    """
    if len(frames) < 2:
        raise MetricsError("fewer than 2 frames")
    total = 0.0
    count = 0
    prev_kps = features.detect(frames[0], max_points)
    for img in frames[1:]:
        kps = features.detect(img, max_points)
        for i, j in features.match(prev_kps, kps, ratio):
            pa = np.array(prev_kps[i].position)
            pb = np.array(kps[j].position)
            total += float(np.linalg.norm(pb - pa))
            count += 1
        prev_kps = kps
    if count == 0:
        return None, 0
    return total / count, count


def evaluate_frames(
    frames: Sequence[np.ndarray], cap: float = 100.0, max_points: int = 400
) -> MetricsReport:
    speed, tracked = avspeed(frames, max_points)
    return MetricsReport(itf(frames, cap), speed, len(frames), tracked)
