"""Hue-based field segmentation, occlusion spread, and calibration gating."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .ingest import HsvImage, Manifest, FrameStack, frame_stack, to_hsv

# hue windows (0-179 scale) counted as the surgical field
FIELD_HUE_LOW = (0, 30)
FIELD_HUE_HIGH = (150, 179)


@dataclass
class FieldMask:
    mask: np.ndarray            # bool, per pixel
    area: int
    centroid: tuple[float, float] | None


@dataclass
class DooSample:
    t: int
    areas: np.ndarray           # per-camera field areas
    value: float | None         # occlusion spread; None when no field seen


def segment_field(hsv: HsvImage) -> FieldMask:
    """Binary field mask from the hue channel.

    Zero-saturation pixels have undefined hue and are never field.
    """
    h = hsv.hue
    mask = (
        ((h >= FIELD_HUE_LOW[0]) & (h <= FIELD_HUE_LOW[1]))
        | ((h >= FIELD_HUE_HIGH[0]) & (h <= FIELD_HUE_HIGH[1]))
    ) & (hsv.saturation > 0)
    area = int(mask.sum())
    if area == 0:
        return FieldMask(mask, 0, None)
    ys, xs = np.nonzero(mask)
    return FieldMask(mask, area, (float(xs.mean()), float(ys.mean())))


def field_area(image: np.ndarray) -> int:
    return segment_field(to_hsv(image)).area


def doo_from_areas(areas: np.ndarray) -> float | None:
    """Occlusion spread: (max - min) / mean of per-camera field areas."""
    areas = np.asarray(areas, dtype=np.float64)
    mean = areas.mean()
    if mean <= 0:
        return None
    return float((areas.max() - areas.min()) / mean)


def doo_at(stack: FrameStack) -> DooSample:
    """Occlusion spread over the raw camera views of one frame stack."""
    areas = np.array([field_area(im) for im in stack.images], dtype=np.float64)
    return DooSample(stack.t, areas, doo_from_areas(areas))


def find_calibration_frame(
    manifest: Manifest,
    start: int,
    tau_doo: float = 0.5,
    n: int = 5,
    stride: int = 30,
    doo_fn=None,
) -> int | None:
    """First frame opening a run of ``n`` consecutive low-occlusion samples.

    Samples are taken every ``stride`` frames from ``start``.  Returns the
    frame index of the first sample of the qualifying run, or None when the
    stream ends first.  ``doo_fn`` overrides the per-frame measurement
    (frame index -> occlusion value or None), mainly for caching.
    """
    if doo_fn is None:
        def doo_fn(t):
            return doo_at(frame_stack(manifest, t)).value

    run_start = None
    run_len = 0
    t = start
    while t <= manifest.frame_count:
        value = doo_fn(t)
        if value is not None and value < tau_doo:
            if run_len == 0:
                run_start = t
            run_len += 1
            if run_len >= n:
                return run_start
        else:
            run_len = 0
            run_start = None
        t += stride
    return None
