"""Synthetic multi-camera rig simulator with ground-truth sidecars.

Renders a textured plane seen by a ring of cameras as pure homography
views, with scripted rig moves (new homography sets) and disc occluders
sized to cover a requested fraction of the visible field.
"""

from __future__ import annotations

import dataclasses
import json
import os
from dataclasses import dataclass, field
from pathlib import Path

import cv2
import numpy as np

from .ingest import to_hsv
from .occlusion import segment_field


class ScenarioError(Exception):
    pass


@dataclass(frozen=True)
class Occluder:
    camera: int                 # camera index
    coverage: float             # target fraction of the field to hide
    start: int                  # first active frame (inclusive)
    end: int                    # last active frame (inclusive)
    modulus: int | None = None  # when set, active only if (t-start) % modulus == phase
    phase: int = 0
    hue: int = 90               # outside the field hue windows

    def active(self, t: int) -> bool:
        if not self.start <= t <= self.end:
            return False
        if self.modulus is None:
            return True
        return (t - self.start) % self.modulus == self.phase


@dataclass(frozen=True)
class Scenario:
    width: int = 320
    height: int = 240
    fps: float = 30.0
    duration: int = 120         # frames
    n_cameras: int = 5
    rig_moves: tuple[int, ...] = ()
    occluders: tuple[Occluder, ...] = ()
    noise_sigma: float = 0.0
    misalignment: float = 1.0   # scale of inter-camera view differences
    field_center: tuple[float, float] = (0.5, 0.5)   # fraction of the view
    field_radius: float = 0.35  # fraction of min(width, height)
    texture_smoothness: float = 1.2  # blur sigma of the plane texture

    def __post_init__(self) -> None:
        if self.duration < 1 or self.n_cameras < 1:
            raise ScenarioError("duration and n_cameras must be positive")
        moves = tuple(sorted(self.rig_moves))
        if moves != self.rig_moves:
            object.__setattr__(self, "rig_moves", moves)
        for f in self.rig_moves:
            if not 1 < f <= self.duration:
                raise ScenarioError(f"rig move at frame {f} outside (1, duration]")
        for o in self.occluders:
            if not 0.0 <= o.coverage <= 1.0:
                raise ScenarioError("occluder coverage must be in [0, 1]")
            if not 0 <= o.camera < self.n_cameras:
                raise ScenarioError(f"occluder camera {o.camera} out of range")

    @property
    def camera_ids(self) -> tuple[str, ...]:
        return tuple(f"cam{c + 1}" for c in range(self.n_cameras))

    def segment_bounds(self) -> list[tuple[int, int]]:
        """Stationary intervals [(start, end), ...] split at rig moves."""
        edges = [1, *self.rig_moves, self.duration + 1]
        return [(a, b - 1) for a, b in zip(edges, edges[1:])]

    def to_json(self) -> dict:
        d = dataclasses.asdict(self)
        d["occluders"] = [dataclasses.asdict(o) for o in self.occluders]
        return d

    @classmethod
    def from_json(cls, data: dict) -> "Scenario":
        data = dict(data)
        occ = tuple(Occluder(**o) for o in data.pop("occluders", []))
        data["rig_moves"] = tuple(data.get("rig_moves", ()))
        data["field_center"] = tuple(data.get("field_center", (0.5, 0.5)))
        return cls(occluders=occ, **data)


def inject_occluder(
    scenario: Scenario,
    camera: int,
    coverage: float,
    interval: tuple[int, int],
    modulus: int | None = None,
    phase: int = 0,
) -> Scenario:
    """Scenario with one more disc occluder; coverage 0 is a no-op."""
    if not 0.0 <= coverage <= 1.0:
        raise ScenarioError("coverage must be in [0, 1]")
    if coverage == 0.0:
        return scenario
    occ = Occluder(camera, coverage, interval[0], interval[1], modulus, phase)
    return dataclasses.replace(scenario, occluders=scenario.occluders + (occ,))


# ---------------------------------------------------------------------------
# rendering internals

def _world_texture(sc: Scenario, margin: int, rng: np.random.Generator) -> np.ndarray:
    ww = sc.width + 2 * margin
    wh = sc.height + 2 * margin

    noise = rng.random((wh, ww), dtype=np.float64)
    value = cv2.GaussianBlur(noise.astype(np.float32), (0, 0), sc.texture_smoothness)
    value = cv2.normalize(value, None, 40, 255, cv2.NORM_MINMAX)

    sigma = sc.texture_smoothness
    jitter = cv2.GaussianBlur(
        rng.uniform(-1.0, 1.0, (wh, ww)).astype(np.float32), (0, 0), sigma
    )
    hue = np.full((wh, ww), 100, dtype=np.int32)
    hue += np.round(8.0 * jitter / max(1e-9, np.abs(jitter).max())).astype(np.int32)

    # skin-like field blob, hue inside the low window
    cx = margin + sc.field_center[0] * sc.width
    cy = margin + sc.field_center[1] * sc.height
    r = sc.field_radius * min(sc.width, sc.height)
    ys, xs = np.mgrid[0:wh, 0:ww]
    blob = (xs - cx) ** 2 + (ys - cy) ** 2 <= r * r
    hue[blob] = rng.integers(2, 29, size=int(blob.sum()))

    sat = cv2.GaussianBlur(rng.random((wh, ww)).astype(np.float32), (0, 0), sigma)
    sat = cv2.normalize(sat, None, 140, 220, cv2.NORM_MINMAX)
    hsv = np.stack(
        [np.clip(hue, 0, 179), np.clip(sat, 0, 255), np.clip(value, 0, 255)], axis=-1
    ).astype(np.uint8)
    return cv2.cvtColor(hsv, cv2.COLOR_HSV2BGR)


def _perturbation(
    sc: Scenario, seg: int, cam: int, rng: np.random.Generator
) -> np.ndarray:
    """View-space transform of camera ``cam`` relative to the reference view."""
    if seg == 0 and cam == 0:
        return np.eye(3)
    s = sc.misalignment
    theta = np.deg2rad(rng.uniform(-6.0, 6.0)) * s
    tx = rng.uniform(-25.0, 25.0) * s
    ty = rng.uniform(-25.0, 25.0) * s
    scale = 1.0 + rng.uniform(-0.04, 0.04) * s
    px = rng.uniform(-1.0, 1.0) * 2e-5 * s
    py = rng.uniform(-1.0, 1.0) * 2e-5 * s
    if cam == 0:
        # the reference moves with the rig, but only mildly
        theta *= 0.3
        tx *= 0.3
        ty *= 0.3
        scale = 1.0 + (scale - 1.0) * 0.3
    cx, cy = sc.width / 2.0, sc.height / 2.0
    core = np.array(
        [
            [scale * np.cos(theta), -scale * np.sin(theta), tx],
            [scale * np.sin(theta), scale * np.cos(theta), ty],
            [px, py, 1.0],
        ]
    )
    recenter = np.array([[1, 0, cx], [0, 1, cy], [0, 0, 1.0]])
    decenter = np.array([[1, 0, -cx], [0, 1, -cy], [0, 0, 1.0]])
    return recenter @ core @ decenter


def _occluder_radius(
    field_mask: np.ndarray, center: tuple[float, float], coverage: float
) -> tuple[float, float]:
    """Disc radius hiding ``coverage`` of the field; returns (radius, actual)."""
    ys, xs = np.nonzero(field_mask)
    total = len(xs)
    if total == 0:
        return 0.0, 0.0
    d = np.sqrt((xs - center[0]) ** 2 + (ys - center[1]) ** 2)
    d.sort()
    k = int(round(coverage * total))
    if k <= 0:
        return 0.0, 0.0
    if k >= total:
        return float(d[-1]) + 2.0, 1.0
    r = float(d[k - 1])
    actual = float(np.searchsorted(d, r, side="right")) / total
    return r, actual


def render(scenario: Scenario, out_dir: str | Path, seed: int = 0) -> tuple[Path, Path]:
    """Write frame directories, a manifest, and a ground-truth sidecar.

    Deterministic for a fixed seed; identical frames are hardlinked to keep
    long static scenarios cheap.
    """
    sc = scenario
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    margin = int(round(0.4 * max(sc.width, sc.height)))

    root = np.random.SeedSequence([int(seed), 0x51]).generate_state(1)[0]
    tex_rng = np.random.default_rng(np.random.SeedSequence([root, 1]))
    cam_rng = np.random.default_rng(np.random.SeedSequence([root, 2]))

    world = _world_texture(sc, margin, tex_rng)
    base = np.array([[1, 0, -margin], [0, 1, -margin], [0, 0, 1.0]])

    segments = sc.segment_bounds()
    # per-segment view maps, drawn in a fixed order for determinism
    perturb = {
        (s, c): _perturbation(sc, s, c, cam_rng)
        for s in range(len(segments))
        for c in range(sc.n_cameras)
    }

    views: dict[tuple[int, int], np.ndarray] = {}
    masks: dict[tuple[int, int], np.ndarray] = {}
    centers: dict[tuple[int, int], tuple[float, float]] = {}
    for (s, c), P in perturb.items():
        G = P @ base
        img = cv2.warpPerspective(world, G, (sc.width, sc.height), flags=cv2.INTER_LINEAR)
        views[(s, c)] = img
        fm = segment_field(to_hsv(img))
        masks[(s, c)] = fm.mask
        centers[(s, c)] = fm.centroid if fm.centroid else (sc.width / 2, sc.height / 2)

    occ_color = tuple(
        int(v)
        for v in cv2.cvtColor(np.uint8([[[90, 200, 180]]]), cv2.COLOR_HSV2BGR)[0, 0]
    )
    radius_cache: dict[tuple[int, int, float], tuple[float, float]] = {}

    cam_dirs = []
    for cid in sc.camera_ids:
        d = out / cid
        d.mkdir(exist_ok=True)
        cam_dirs.append(d)

    occ_log: dict[str, list[list]] = {cid: [] for cid in sc.camera_ids}
    link_cache: dict[tuple, Path] = {}

    seg_of_frame = np.zeros(sc.duration + 1, dtype=int)
    for s, (a, b) in enumerate(segments):
        seg_of_frame[a : b + 1] = s

    for t in range(1, sc.duration + 1):
        s = int(seg_of_frame[t])
        for c in range(sc.n_cameras):
            active = tuple(o for o in sc.occluders if o.camera == c and o.active(t))
            key = (c, s, tuple(sorted((o.coverage, o.start, o.hue) for o in active)))
            path = cam_dirs[c] / f"{t:06d}.png"

            frame_cov = 0.0
            for o in active:
                rkey = (c, s, o.coverage)
                if rkey not in radius_cache:
                    radius_cache[rkey] = _occluder_radius(
                        masks[(s, c)], centers[(s, c)], o.coverage
                    )
                frame_cov = min(1.0, frame_cov + radius_cache[rkey][1])
            if active:
                occ_log[sc.camera_ids[c]].append([t, round(frame_cov, 4)])

            if sc.noise_sigma == 0.0 and key in link_cache:
                os.link(link_cache[key], path)
                continue

            img = views[(s, c)].copy()
            for o in active:
                r, _ = radius_cache[(c, s, o.coverage)]
                if r > 0:
                    cx, cy = centers[(s, c)]
                    cv2.circle(img, (int(round(cx)), int(round(cy))), int(np.ceil(r)), occ_color, -1)
            if sc.noise_sigma > 0.0:
                nrng = np.random.default_rng(np.random.SeedSequence([root, 3, c, t]))
                noise = nrng.normal(0.0, sc.noise_sigma, img.shape)
                img = np.clip(img.astype(np.float64) + noise, 0, 255).astype(np.uint8)
            cv2.imwrite(str(path), img)
            if sc.noise_sigma == 0.0:
                link_cache[key] = path

    manifest_path = out / "manifest.json"
    with open(manifest_path, "w") as f:
        json.dump(
            {
                "cameras": [{"id": cid, "dir": cid} for cid in sc.camera_ids],
                "fps": sc.fps,
                "reference": sc.camera_ids[0],
                "frames": sc.duration,
            },
            f,
            indent=1,
        )

    truth = {
        "width": sc.width,
        "height": sc.height,
        "fps": sc.fps,
        "frames": sc.duration,
        "t_mov": list(sc.rig_moves),
        "segments": [],
        "occlusion": {cid: log for cid, log in occ_log.items() if log},
    }
    for s, (a, b) in enumerate(segments):
        ref_map = perturb[(s, 0)]
        maps = {}
        for c, cid in enumerate(sc.camera_ids):
            # camera view -> reference view, both in this segment's poses
            h = ref_map @ np.linalg.inv(perturb[(s, c)])
            maps[cid] = (h / h[2, 2]).reshape(-1).tolist()
        truth["segments"].append({"start": a, "end": b, "to_reference": maps})
    truth_path = out / "truth.json"
    with open(truth_path, "w") as f:
        json.dump(truth, f, indent=1)

    return manifest_path, truth_path
