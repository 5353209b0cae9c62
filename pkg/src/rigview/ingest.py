"""Manifest loading, synchronized frame access, and color-space helpers.

Images are kept in OpenCV's BGR byte order throughout the package.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
import json

import cv2
import numpy as np


class IngestError(Exception):
    pass


@dataclass(frozen=True)
class Manifest:
    """Validated description of one synchronized multi-camera recording."""

    camera_ids: tuple[str, ...]
    frame_dirs: tuple[Path, ...]
    fps: float
    reference_camera: str
    frame_count: int

    @property
    def n_cameras(self) -> int:
        return len(self.camera_ids)

    @property
    def reference_index(self) -> int:
        return self.camera_ids.index(self.reference_camera)

    def frame_path(self, camera_index: int, t: int) -> Path:
        return self.frame_dirs[camera_index] / f"{t:06d}.png"


@dataclass
class FrameStack:
    """All camera images at one frame index."""

    t: int
    images: list[np.ndarray]

    def __post_init__(self) -> None:
        shapes = {im.shape for im in self.images}
        if len(shapes) > 1:
            raise IngestError(f"frame {self.t}: image dimensions differ: {shapes}")


@dataclass
class HsvImage:
    """Per-channel HSV planes; hue on the 0-179 scale, S and V on 0-255."""

    hue: np.ndarray
    saturation: np.ndarray
    value: np.ndarray


def load_manifest(path: str | Path) -> Manifest:
    """Read and validate a manifest file.

    The manifest is JSON with keys ``cameras`` (list of {id, dir}), ``fps``,
    ``reference`` and ``frames``.  Frame files are ``<index:06d>.png``,
    1-based, one directory per camera.
    """
    path = Path(path)
    if not path.is_file():
        raise IngestError(f"manifest not found: {path}")
    try:
        with open(path) as f:
            data = json.load(f)
    except json.JSONDecodeError as e:
        raise IngestError(f"manifest does not parse: {e}") from e

    try:
        cameras = data["cameras"]
        fps = float(data.get("fps", 30.0))
        reference = data["reference"]
        frames = int(data["frames"])
    except KeyError as e:
        raise IngestError(f"manifest missing key {e}") from e

    if fps <= 0:
        raise IngestError("fps must be positive")
    if frames <= 0:
        raise IngestError("frame count must be positive")
    if len(cameras) < 2:
        raise IngestError("manifest needs at least 2 cameras")

    ids = []
    dirs = []
    for cam in cameras:
        cid = cam["id"]
        if cid in ids:
            raise IngestError(f"duplicate camera id {cid!r}")
        cdir = path.parent / cam["dir"]
        if not cdir.is_dir():
            raise IngestError(f"camera {cid!r}: missing directory {cdir}")
        ids.append(cid)
        dirs.append(cdir)

    if reference not in ids:
        raise IngestError(f"unknown reference camera {reference!r}")

    for cid, cdir in zip(ids, dirs):
        n = sum(1 for p in cdir.iterdir() if p.suffix == ".png")
        if n != frames:
            raise IngestError(
                f"camera {cid!r}: frame count mismatch (found {n}, expected {frames})"
            )
        for t in (1, frames):
            if not (cdir / f"{t:06d}.png").is_file():
                raise IngestError(f"camera {cid!r}: missing frame {t:06d}.png")

    return Manifest(tuple(ids), tuple(dirs), fps, reference, frames)


def frame_stack(manifest: Manifest, t: int) -> FrameStack:
    """Decode all camera images for frame index ``t`` (1-based)."""
    if not 1 <= t <= manifest.frame_count:
        raise IngestError(
            f"frame index {t} outside [1, {manifest.frame_count}]"
        )
    images = []
    for c, cid in enumerate(manifest.camera_ids):
        p = manifest.frame_path(c, t)
        img = cv2.imread(str(p), cv2.IMREAD_COLOR)
        if img is None:
            raise IngestError(f"camera {cid!r}: failed to decode frame {t}")
        images.append(img)
    return FrameStack(t, images)


def read_frame(manifest: Manifest, camera_index: int, t: int) -> np.ndarray:
    """Decode a single camera's image for frame index ``t``."""
    if not 1 <= t <= manifest.frame_count:
        raise IngestError(f"frame index {t} outside [1, {manifest.frame_count}]")
    p = manifest.frame_path(camera_index, t)
    img = cv2.imread(str(p), cv2.IMREAD_COLOR)
    if img is None:
        cid = manifest.camera_ids[camera_index]
        raise IngestError(f"camera {cid!r}: failed to decode frame {t}")
    return img


def to_hsv(image: np.ndarray) -> HsvImage:
    """Convert a 3-channel 8-bit BGR image to HSV planes (hue 0-179)."""
    if image.ndim != 3 or image.shape[2] != 3 or image.dtype != np.uint8:
        raise IngestError("to_hsv expects a 3-channel 8-bit image")
    hsv = cv2.cvtColor(image, cv2.COLOR_BGR2HSV)
    return HsvImage(hsv[:, :, 0], hsv[:, :, 1], hsv[:, :, 2])


def from_hsv(hsv: HsvImage) -> np.ndarray:
    """Inverse of :func:`to_hsv`.

    Round-trips well-saturated pixels within +-1 per channel; quantization
    of hue makes dull pixels a little lossier.
    """
    merged = np.stack([hsv.hue, hsv.saturation, hsv.value], axis=-1).astype(np.uint8)
    return cv2.cvtColor(merged, cv2.COLOR_HSV2BGR)
