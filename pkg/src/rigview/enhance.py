"""Optional visibility aids: recentering and missing-pixel filling."""

from __future__ import annotations

from dataclasses import dataclass, field

import cv2
import numpy as np

from .occlusion import FieldMask
from .selector import (
    PROV_CROSS_VIEW,
    PROV_NONE,
    PROV_SELECTED,
    PROV_TEMPORAL,
    RenderedFrame,
)


@dataclass
class CenterTrack:
    offsets: np.ndarray             # (N, 2) float, (dx, dy) per frame
    alpha: float


class CenteringTracker:
    """Exponential moving average of (frame center - field centroid)."""

    def __init__(self, frame_shape: tuple[int, int], alpha: float):
        if not 0.0 < alpha <= 1.0:
            raise ValueError("alpha must be in (0, 1]")
        self.height, self.width = frame_shape[:2]
        self.alpha = alpha
        self.state = np.zeros(2)

    def update(self, centroid: tuple[float, float] | None) -> tuple[float, float]:
        """Next offset; zero-area frames inherit the previous offset."""
        if centroid is not None:
            target = np.array(
                [self.width / 2.0 - centroid[0], self.height / 2.0 - centroid[1]]
            )
            self.state = self.alpha * target + (1.0 - self.alpha) * self.state
        dx = float(np.clip(self.state[0], -self.width / 2.0, self.width / 2.0))
        dy = float(np.clip(self.state[1], -self.height / 2.0, self.height / 2.0))
        return dx, dy


def centering_offsets(
    masks: list[FieldMask], frame_shape: tuple[int, int], alpha: float
) -> CenterTrack:
    """Offset track for a sequence of field masks of the selected view."""
    tracker = CenteringTracker(frame_shape, alpha)
    offsets = np.array([tracker.update(m.centroid) for m in masks])
    return CenterTrack(offsets, alpha)


def apply_centering(frame: RenderedFrame, offset: tuple[float, float]) -> RenderedFrame:
    """Shift content (and masks) by an integer offset; exposed pixels invalid.

    Equivalent to placing the frame on a double-size canvas, shifting, and
    cropping back to the original size.
    """
    h, w = frame.image.shape[:2]
    dx = int(round(offset[0]))
    dy = int(round(offset[1]))
    if abs(dx) > w // 2 + 1 or abs(dy) > h // 2 + 1:
        raise ValueError("offset exceeds half the frame size")
    if dx == 0 and dy == 0:
        return frame

    def shift(arr, fill=0):
        out = np.full_like(arr, fill)
        sy0, sy1 = max(0, -dy), min(h, h - dy)
        sx0, sx1 = max(0, -dx), min(w, w - dx)
        dy0, dx0 = max(0, dy), max(0, dx)
        out[dy0 : dy0 + (sy1 - sy0), dx0 : dx0 + (sx1 - sx0)] = arr[sy0:sy1, sx0:sx1]
        return out

    return RenderedFrame(
        frame.t,
        shift(frame.image),
        shift(frame.validity, False),
        frame.source_camera,
        frame.segment_id,
        frame.stale,
        (frame.shift[0] + dx, frame.shift[1] + dy),
        shift(frame.fill_provenance, PROV_NONE),
    )


@dataclass
class FillState:
    """Carry-over between frames for the temporal fallback."""

    history: np.ndarray | None = None   # last completed frame
    staleness: np.ndarray | None = None # frames since each pixel was observed


def fill_missing(
    frame: RenderedFrame,
    reference_view: tuple[np.ndarray, np.ndarray],
    state: FillState,
    value_threshold: int = 10,
    kernel: int = 49,
    blur_step: int = 10,
    blur_cap: int = 25,
) -> RenderedFrame:
    """Composite cross-view and temporal pixels into the frame's holes.

    The alpha seam is a Gaussian-blurred binary mask of frame pixels whose
    max channel exceeds ``value_threshold``; pixels covered by neither the
    frame nor the aligned reference view fall back to the previous completed
    frame, blurred more the longer they have gone unobserved.
    """
    fg = frame.image
    bg, bg_valid = reference_view
    h, w = fg.shape[:2]

    content = (fg.max(axis=2) > value_threshold).astype(np.float32)
    sigma = kernel / 6.0
    alpha = cv2.GaussianBlur(content, (kernel, kernel), sigma)
    alpha = np.clip(alpha, 0.0, 1.0)

    bg_usable = bg_valid & (bg.max(axis=2) > value_threshold)
    blend = alpha[..., None] * fg.astype(np.float64) + (1.0 - alpha[..., None]) * bg.astype(np.float64)
    out = np.where((alpha >= 1.0)[..., None], fg, np.rint(blend).astype(np.uint8))
    # never dilute content into regions the reference view cannot supply
    out = np.where(bg_usable[..., None], out, fg)

    observed = (content > 0) | bg_usable
    prov = np.where(
        content > 0, PROV_SELECTED, np.where(bg_usable, PROV_CROSS_VIEW, PROV_NONE)
    ).astype(np.uint8)

    missing = ~observed
    if state.staleness is None:
        state.staleness = np.zeros((h, w), dtype=np.int32)
    if missing.any() and state.history is not None:
        stale = state.staleness[missing]
        radii = np.minimum(blur_cap, 1 + stale // blur_step)
        filled = out.copy()
        for r in np.unique(radii):
            k = 2 * int(r) + 1
            blurred = cv2.GaussianBlur(state.history, (k, k), k / 6.0)
            sel = missing & (np.minimum(blur_cap, 1 + state.staleness // blur_step) == r)
            filled[sel] = blurred[sel]
        out = filled
        prov[missing] = PROV_TEMPORAL

    state.staleness = np.where(observed, 0, state.staleness + 1)
    state.history = out

    validity = prov != PROV_NONE
    return RenderedFrame(
        frame.t,
        out,
        validity,
        frame.source_camera,
        frame.segment_id,
        frame.stale,
        frame.shift,
        prov,
    )
