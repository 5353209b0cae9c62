"""Per-frame least-occluded camera choice and single-view rendering."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator

import numpy as np

from .geometry import HomographyAtlas, warp
from .ingest import FrameStack, Manifest, read_frame
from .motion import Timeline
from .occlusion import field_area

# fill_provenance codes
PROV_NONE = 0
PROV_SELECTED = 1
PROV_CROSS_VIEW = 2
PROV_TEMPORAL = 3


@dataclass
class RenderedFrame:
    """One output frame with its provenance bookkeeping."""

    t: int
    image: np.ndarray
    validity: np.ndarray            # bool
    source_camera: str
    segment_id: int
    stale: bool
    shift: tuple[int, int] = (0, 0)
    fill_provenance: np.ndarray | None = None

    def __post_init__(self) -> None:
        if self.fill_provenance is None:
            prov = np.where(self.validity, PROV_SELECTED, PROV_NONE)
            self.fill_provenance = prov.astype(np.uint8)


@dataclass
class SelectionPlan:
    choice: np.ndarray              # camera index per frame, length N
    switch_events: list[int]        # frame indices where the choice changes
    cadence: int
    dwell_min: int

    def camera_at(self, t: int) -> int:
        return int(self.choice[t - 1])

    def to_json(self, camera_ids: tuple[str, ...]) -> dict:
        return {
            "cadence": self.cadence,
            "dwell_min": self.dwell_min,
            "switches": self.switch_events,
            "choice": [camera_ids[c] for c in self.choice.tolist()],
        }


def score_views(stack: FrameStack) -> np.ndarray:
    """Per-camera occlusion score; larger means less occluded.

    Surrogate scoring: the visible field area of each raw view.  Swap point
    for any detector that ranks views by visibility.
    """
    return np.array([field_area(im) for im in stack.images], dtype=np.float64)


def plan_selection(
    scores: np.ndarray,
    tick_frames: np.ndarray,
    frame_count: int,
    cadence: int,
    dwell_min: int,
) -> SelectionPlan:
    """Hold-and-switch plan from per-tick scores.

    ``scores`` is (n_ticks, n_cameras) evaluated at ``tick_frames``.  At each
    tick the best camera wins (ties keep the incumbent, else lowest index);
    switches closer than ``dwell_min`` frames are suppressed.
    """
    if cadence < 1:
        raise ValueError("cadence must be >= 1")
    scores = np.asarray(scores, dtype=np.float64)
    choice = np.zeros(frame_count, dtype=np.int64)
    switches: list[int] = []
    current = None
    last_switch = None
    for k, t in enumerate(tick_frames):
        row = scores[k]
        best = float(row.max())
        winners = np.nonzero(row == best)[0]
        if current is not None and current in winners:
            pick = current
        else:
            pick = int(winners[0])
        if current is None:
            current = pick
        elif pick != current:
            if last_switch is None or t - last_switch >= dwell_min:
                current = pick
                last_switch = int(t)
                switches.append(int(t))
        choice[t - 1 :] = current
    return SelectionPlan(choice, switches, cadence, dwell_min)


def render_frame(
    manifest: Manifest,
    timeline: Timeline,
    atlases: dict[int, HomographyAtlas],
    plan: SelectionPlan,
    t: int,
) -> RenderedFrame:
    """Render one output frame from the selected aligned view."""
    seg = timeline.segment_for(t)
    atlas = atlases[seg.atlas_id]
    cam = plan.camera_at(t)
    img = read_frame(manifest, cam, t)
    warped, mask = warp(img, atlas.by_index(cam))
    return RenderedFrame(
        t, warped, mask, manifest.camera_ids[cam], seg.atlas_id, seg.stale
    )


def render_selection(
    manifest: Manifest,
    timeline: Timeline,
    atlases: dict[int, HomographyAtlas],
    plan: SelectionPlan,
) -> Iterator[RenderedFrame]:
    """Yield the full single-view sequence in frame order."""
    for t in range(1, manifest.frame_count + 1):
        yield render_frame(manifest, timeline, atlases, plan, t)
