"""Pipeline configuration: every tunable with its default in one place."""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass
from pathlib import Path


@dataclass
class PipelineConfig:
    """All knobs of the align / select / enhance pipeline."""

    # movement detection
    m_seconds: float = 75.0          # voting-interval length
    exceed_count: int = 4            # exceedances needed inside one interval
    dom_stride_seconds: float = 1.0  # misalignment sampling period
    ma_window: int = 31              # moving-average window (samples, odd)
    segment_minutes: float = 10.0    # processing-segment length for thresholding
    forest_trees: int = 100
    forest_subsample: int = 256
    forest_contamination: float = 0.1
    dom_max_points: int = 400        # keypoint budget for misalignment sampling

    # occlusion gating
    tau_doo: float = 0.5             # occlusion-spread threshold
    doo_consecutive: int = 5         # consecutive low samples before calibrating
    doo_stride_seconds: float = 1.0  # occlusion sampling period

    # feature detection / match accumulation
    max_points: int = 1000
    ratio_test: float = 0.8
    min_matches: int = 12
    accum_window: int = 30           # frames pooled per calibration
    accum_stride: int = 5
    dedup_bin: float = 4.0           # spatial dedup bin (px)

    # calibration acceptance
    calib_dom_gate: float = 6.0      # max residual misalignment (px) to accept an atlas
    calib_max_retries: int = 3       # window slides before giving up

    # homography estimation
    ransac_threshold: float = 3.0
    ransac_max_iters: int = 2000
    ransac_confidence: float = 0.995

    # view selection
    cadence: int = 30                # frames between selection decisions
    dwell_min: int = 60              # minimum frames between switches

    # enhancement
    centering: bool = True
    filling: bool = True
    ema_alpha: float = 0.05
    fill_value_threshold: int = 10   # max-channel value separating content from holes
    fill_kernel: int = 49            # Gaussian kernel for the alpha seam
    temporal_blur_step: int = 10     # frames of staleness per px of fallback blur
    temporal_blur_cap: int = 25      # max fallback blur radius (px)

    # metrics
    psnr_cap: float = 100.0

    # misc
    seed: int = 0
    threads: int = 1

    def __post_init__(self) -> None:
        positive = [
            "m_seconds", "exceed_count", "dom_stride_seconds", "ma_window",
            "segment_minutes", "forest_trees", "forest_subsample", "tau_doo",
            "doo_consecutive", "doo_stride_seconds", "max_points", "ratio_test",
            "min_matches", "accum_window", "accum_stride", "dedup_bin",
            "ransac_threshold", "ransac_max_iters", "ransac_confidence",
            "cadence", "dwell_min", "ema_alpha", "fill_kernel", "calib_dom_gate",
            "temporal_blur_step", "temporal_blur_cap", "psnr_cap", "threads",
            "dom_max_points",
        ]
        for name in positive:
            if getattr(self, name) <= 0:
                raise ValueError(f"config field {name} must be positive")
        if self.ma_window % 2 == 0:
            raise ValueError("ma_window must be odd")
        if not 0.0 <= self.forest_contamination < 1.0:
            raise ValueError("forest_contamination must be in [0, 1)")
        if not 0.0 < self.ema_alpha <= 1.0:
            raise ValueError("ema_alpha must be in (0, 1]")
        if self.fill_kernel % 2 == 0:
            raise ValueError("fill_kernel must be odd")

    @classmethod
    def from_file(cls, path: str | Path) -> "PipelineConfig":
        with open(path) as f:
            data = json.load(f)
        return cls.from_dict(data)

    @classmethod
    def from_dict(cls, data: dict) -> "PipelineConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)

    def replace(self, **overrides) -> "PipelineConfig":
        return dataclasses.replace(self, **overrides)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)
