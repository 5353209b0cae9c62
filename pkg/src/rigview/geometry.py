"""Robust homography estimation (normalized DLT + RANSAC + LM) and warping."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import cv2
import numpy as np
from scipy.optimize import least_squares

from .features import MatchSet
from .ingest import FrameStack


class GeometryError(Exception):
    pass


class DegenerateError(GeometryError):
    pass


@dataclass(frozen=True)
class Homography:
    """A 3x3 planar warp, normalized so the bottom-right entry is 1."""

    matrix: np.ndarray

    def __post_init__(self) -> None:
        m = np.asarray(self.matrix, dtype=np.float64)
        if m.shape != (3, 3):
            raise GeometryError("homography must be 3x3")
        if abs(np.linalg.det(m)) < 1e-9:
            raise GeometryError("homography is singular")
        if abs(m[2, 2]) > 1e-12:
            m = m / m[2, 2]
        object.__setattr__(self, "matrix", m)

    @classmethod
    def identity(cls) -> "Homography":
        return cls(np.eye(3))

    @property
    def is_identity(self) -> bool:
        return np.array_equal(self.matrix, np.eye(3))

    def apply(self, points: np.ndarray) -> np.ndarray:
        """Map (N, 2) points through the warp."""
        pts = np.asarray(points, dtype=np.float64)
        single = pts.ndim == 1
        pts = np.atleast_2d(pts)
        ph = np.hstack([pts, np.ones((len(pts), 1))])
        q = ph @ self.matrix.T
        out = q[:, :2] / q[:, 2:3]
        return out[0] if single else out

    def inverse(self) -> "Homography":
        return Homography(np.linalg.inv(self.matrix))

    def compose(self, other: "Homography") -> "Homography":
        """Warp that applies ``other`` first, then this one."""
        return Homography(self.matrix @ other.matrix)


@dataclass
class HomographyAtlas:
    """Per-segment map of camera -> reference warps."""

    segment_id: int
    camera_ids: tuple[str, ...]
    reference_camera: str
    to_reference: dict[str, Homography]
    inlier_stats: dict[tuple[str, str], tuple[int, float]] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not self.to_reference.get(self.reference_camera, Homography.identity()).is_identity:
            raise GeometryError("reference camera must map to identity")
        missing = set(self.camera_ids) - set(self.to_reference)
        if missing:
            raise GeometryError(f"atlas missing cameras: {sorted(missing)}")

    def by_index(self, camera_index: int) -> Homography:
        return self.to_reference[self.camera_ids[camera_index]]

    def between(self, c: int, cp: int) -> Homography:
        """Warp from camera index ``c`` into camera index ``cp`` coordinates."""
        return self.by_index(cp).inverse().compose(self.by_index(c))

    def to_json(self) -> dict:
        return {
            "segment_id": self.segment_id,
            "reference": self.reference_camera,
            "cameras": {
                cid: self.to_reference[cid].matrix.reshape(-1).tolist()
                for cid in self.camera_ids
            },
            "inlier_stats": [
                {"pair": list(k), "inliers": v[0], "mean_error_px": v[1]}
                for k, v in sorted(self.inlier_stats.items())
            ],
        }

    @classmethod
    def from_json(cls, data: dict) -> "HomographyAtlas":
        cams = tuple(data["cameras"].keys())
        maps = {
            cid: Homography(np.array(vals, dtype=np.float64).reshape(3, 3))
            for cid, vals in data["cameras"].items()
        }
        stats = {
            tuple(e["pair"]): (e["inliers"], e["mean_error_px"])
            for e in data.get("inlier_stats", [])
        }
        return cls(data["segment_id"], cams, data["reference"], maps, stats)

    def save(self, path: str | Path) -> None:
        with open(path, "w") as f:
            json.dump(self.to_json(), f, indent=1, sort_keys=True)

    @classmethod
    def load(cls, path: str | Path) -> "HomographyAtlas":
        with open(path) as f:
            return cls.from_json(json.load(f))


def _normalize_points(pts: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Hartley normalization: centroid at origin, mean distance sqrt(2)."""
    centroid = pts.mean(axis=0)
    d = np.linalg.norm(pts - centroid, axis=1).mean()
    s = np.sqrt(2.0) / d if d > 1e-12 else 1.0
    T = np.array([[s, 0, -s * centroid[0]], [0, s, -s * centroid[1]], [0, 0, 1.0]])
    ph = np.hstack([pts, np.ones((len(pts), 1))])
    return (ph @ T.T)[:, :2], T


def _dlt(src: np.ndarray, dst: np.ndarray) -> np.ndarray:
    """Direct linear transform on pre-normalized points."""
    n = len(src)
    A = np.zeros((2 * n, 9))
    x, y = src[:, 0], src[:, 1]
    xp, yp = dst[:, 0], dst[:, 1]
    A[0::2, 0] = -x
    A[0::2, 1] = -y
    A[0::2, 2] = -1
    A[0::2, 6] = x * xp
    A[0::2, 7] = y * xp
    A[0::2, 8] = xp
    A[1::2, 3] = -x
    A[1::2, 4] = -y
    A[1::2, 5] = -1
    A[1::2, 6] = x * yp
    A[1::2, 7] = y * yp
    A[1::2, 8] = yp
    _, _, vt = np.linalg.svd(A)
    return vt[-1].reshape(3, 3)


def _fit_normalized(src: np.ndarray, dst: np.ndarray) -> np.ndarray:
    ns, Ts = _normalize_points(src)
    nd, Td = _normalize_points(dst)
    Hn = _dlt(ns, nd)
    return np.linalg.inv(Td) @ Hn @ Ts


def _reprojection_errors(H: np.ndarray, src: np.ndarray, dst: np.ndarray) -> np.ndarray:
    ph = np.hstack([src, np.ones((len(src), 1))])
    q = ph @ H.T
    w = q[:, 2]
    bad = np.abs(w) < 1e-12
    w = np.where(bad, 1.0, w)
    proj = q[:, :2] / w[:, None]
    err = np.linalg.norm(proj - dst, axis=1)
    err[bad] = np.inf
    return err


def _collinear(pts: np.ndarray, tol: float = 1e-6) -> bool:
    """True when the points have no 2D extent (all on one line)."""
    c = pts - pts.mean(axis=0)
    s = np.linalg.svd(c, compute_uv=False)
    return len(s) < 2 or s[1] < tol * max(s[0], 1.0)


def _refine(H: np.ndarray, src: np.ndarray, dst: np.ndarray) -> np.ndarray:
    """Levenberg-Marquardt refinement of the reprojection error."""
    h0 = (H / H[2, 2]).reshape(-1)[:8]

    def resid(h):
        M = np.append(h, 1.0).reshape(3, 3)
        ph = np.hstack([src, np.ones((len(src), 1))])
        q = ph @ M.T
        proj = q[:, :2] / q[:, 2:3]
        return (proj - dst).reshape(-1)

    try:
        res = least_squares(resid, h0, method="lm", max_nfev=200)
        return np.append(res.x, 1.0).reshape(3, 3)
    except Exception:
        return H


def estimate_homography(
    src: np.ndarray,
    dst: np.ndarray,
    threshold: float = 3.0,
    max_iters: int = 2000,
    confidence: float = 0.995,
    rng: np.random.Generator | None = None,
) -> tuple[Homography, np.ndarray]:
    """RANSAC + normalized DLT + LM refinement.

    Returns the homography and a boolean inlier mask over the input pairs.
    """
    src = np.asarray(src, dtype=np.float64).reshape(-1, 2)
    dst = np.asarray(dst, dtype=np.float64).reshape(-1, 2)
    if len(src) != len(dst) or len(src) < 4:
        raise GeometryError("need at least 4 correspondences")
    rng = rng or np.random.default_rng(0)
    n = len(src)

    best_mask = None
    best_count = 0
    iters = max_iters
    i = 0
    while i < iters:
        i += 1
        idx = rng.choice(n, 4, replace=False) if n > 4 else np.arange(4)
        if _collinear(src[idx], tol=1e-4) or _collinear(dst[idx], tol=1e-4):
            continue
        try:
            Hc = _fit_normalized(src[idx], dst[idx])
        except np.linalg.LinAlgError:
            continue
        if abs(np.linalg.det(Hc)) < 1e-12:
            continue
        err = _reprojection_errors(Hc, src, dst)
        mask = err <= threshold
        count = int(mask.sum())
        if count > best_count:
            best_count = count
            best_mask = mask
            # adaptive iteration bound from the current inlier ratio
            w = count / n
            if w > 0:
                denom = np.log(max(1e-12, 1.0 - w**4))
                if denom < 0:
                    iters = min(max_iters, int(np.ceil(np.log(1.0 - confidence) / denom)))
        if n == 4 and best_count == 4:
            break

    if best_mask is None or best_count < 4:
        raise DegenerateError("degenerate: no valid homography model found")

    inl_src, inl_dst = src[best_mask], dst[best_mask]
    if _collinear(inl_src, tol=1e-4) or _collinear(inl_dst, tol=1e-4):
        raise DegenerateError("degenerate: inliers are collinear")

    H = _fit_normalized(inl_src, inl_dst)
    H = _refine(H, inl_src, inl_dst)
    err = _reprojection_errors(H, src, dst)
    mask = err <= threshold
    if mask.sum() < 4:
        mask = best_mask
        H = _fit_normalized(src[mask], dst[mask])
    return Homography(H), mask


def build_atlas(
    matches: MatchSet,
    camera_ids: tuple[str, ...],
    reference_camera: str,
    segment_id: int = 0,
    threshold: float = 3.0,
    max_iters: int = 2000,
    confidence: float = 0.995,
    min_matches: int = 12,
    rng: np.random.Generator | None = None,
) -> HomographyAtlas:
    """Estimate per-camera warps to the reference view.

    Cameras without enough direct matches to the reference are chained
    through one intermediate camera.
    """
    rng = rng or np.random.default_rng(0)
    n = len(camera_ids)
    ref = camera_ids.index(reference_camera)
    maps: dict[int, Homography] = {ref: Homography.identity()}
    stats: dict[tuple[str, str], tuple[int, float]] = {}

    def try_pair(c: int, cp: int) -> Homography | None:
        a, b = matches.get(c, cp)
        if len(a) < max(4, min_matches):
            return None
        try:
            h, mask = estimate_homography(a, b, threshold, max_iters, confidence, rng)
        except GeometryError:
            return None
        err = _reprojection_errors(h.matrix, a[mask], b[mask])
        key = (camera_ids[c], camera_ids[cp])
        stats[key] = (int(mask.sum()), float(err.mean()) if mask.any() else 0.0)
        return h

    # direct links to the reference first
    for c in range(n):
        if c == ref:
            continue
        h = try_pair(c, ref)
        if h is not None:
            maps[c] = h

    # chain through already-solved cameras until no progress
    progress = True
    while progress:
        progress = False
        for c in range(n):
            if c in maps:
                continue
            for k in list(maps):
                if k == c:
                    continue
                h_ck = try_pair(c, k)
                if h_ck is not None:
                    maps[c] = maps[k].compose(h_ck)
                    progress = True
                    break

    for c in range(n):
        if c not in maps:
            raise GeometryError(f"calibration failed for camera {camera_ids[c]!r}")

    return HomographyAtlas(
        segment_id,
        tuple(camera_ids),
        reference_camera,
        {camera_ids[c]: maps[c] for c in range(n)},
        stats,
    )


def warp(
    image: np.ndarray, h: Homography, canvas: tuple[int, int] | None = None
) -> tuple[np.ndarray, np.ndarray]:
    """Bilinear warp onto a canvas; returns (image, validity mask).

    ``canvas`` is (width, height) and defaults to the source size.  The mask
    marks pixels fully covered by the source image.
    """
    hgt, wid = image.shape[:2]
    cw, ch = canvas if canvas is not None else (wid, hgt)
    if cw < wid or ch < hgt:
        raise GeometryError("canvas smaller than source image")
    if h.is_identity and (cw, ch) == (wid, hgt):
        return image.copy(), np.ones((hgt, wid), dtype=bool)
    out = cv2.warpPerspective(image, h.matrix, (cw, ch), flags=cv2.INTER_LINEAR)
    ones = np.ones((hgt, wid), dtype=np.float32)
    cover = cv2.warpPerspective(ones, h.matrix, (cw, ch), flags=cv2.INTER_LINEAR)
    return out, cover >= 0.999


def apply_atlas(
    stack: FrameStack, atlas: HomographyAtlas
) -> list[tuple[np.ndarray, np.ndarray]]:
    """Warp every view of a stack into reference coordinates."""
    out = []
    for c, img in enumerate(stack.images):
        out.append(warp(img, atlas.by_index(c)))
    return out
