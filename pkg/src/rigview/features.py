"""Keypoint detection, descriptor matching, and multi-frame match accumulation.

Detection is a classical corner detector (Shi-Tomasi / Harris response) with
sub-pixel refinement; descriptors are gradient-orientation histograms
(OpenCV SIFT descriptors computed at the corner locations).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import cv2
import numpy as np

from .ingest import Manifest, frame_stack


class MatchError(Exception):
    pass


@dataclass
class Keypoint:
    position: tuple[float, float]
    response: float
    descriptor: np.ndarray


@dataclass
class MatchSet:
    """Point correspondences accumulated per camera pair over a frame window.

    ``pairs`` is keyed by ordered camera-index pair (c, c'); each value is a
    pair of (N, 2) float arrays with matching rows.
    """

    pairs: dict[tuple[int, int], tuple[np.ndarray, np.ndarray]] = field(default_factory=dict)
    window: tuple[int, int] = (0, 0)

    @property
    def per_pair_count(self) -> dict[tuple[int, int], int]:
        return {k: len(v[0]) for k, v in self.pairs.items()}

    @property
    def total(self) -> int:
        return sum(len(v[0]) for v in self.pairs.values())

    def get(self, c: int, cp: int) -> tuple[np.ndarray, np.ndarray]:
        """Correspondences from camera ``c`` to camera ``cp`` (either order)."""
        if (c, cp) in self.pairs:
            return self.pairs[(c, cp)]
        if (cp, c) in self.pairs:
            b, a = self.pairs[(cp, c)]
            return a, b
        return np.empty((0, 2)), np.empty((0, 2))


_DESCRIPTOR_PATCH = 12.0  # support size handed to the descriptor extractor


def detect(image: np.ndarray, max_points: int = 1000) -> list[Keypoint]:
    """Detect corner keypoints, strongest first, with sub-pixel positions."""
    if image.ndim == 3:
        gray = cv2.cvtColor(image, cv2.COLOR_BGR2GRAY)
    else:
        gray = image
    corners = cv2.goodFeaturesToTrack(
        gray, maxCorners=max_points, qualityLevel=0.01, minDistance=4, blockSize=3
    )
    if corners is None or len(corners) == 0:
        return []
    corners = cv2.cornerSubPix(
        gray,
        corners.astype(np.float32),
        winSize=(5, 5),
        zeroZone=(-1, -1),
        criteria=(cv2.TERM_CRITERIA_EPS + cv2.TERM_CRITERIA_MAX_ITER, 30, 0.01),
    )
    pts = corners.reshape(-1, 2)
    h, w = gray.shape[:2]
    inside = (pts[:, 0] >= 0) & (pts[:, 0] <= w - 1) & (pts[:, 1] >= 0) & (pts[:, 1] <= h - 1)
    pts = pts[inside]
    if len(pts) == 0:
        return []

    response_map = cv2.cornerMinEigenVal(gray, blockSize=3)
    xi = np.clip(np.round(pts[:, 0]).astype(int), 0, w - 1)
    yi = np.clip(np.round(pts[:, 1]).astype(int), 0, h - 1)
    responses = response_map[yi, xi]

    cv_kps = [
        cv2.KeyPoint(float(x), float(y), _DESCRIPTOR_PATCH) for x, y in pts
    ]
    sift = cv2.SIFT_create()
    cv_kps, desc = sift.compute(gray, cv_kps)
    if desc is None or len(cv_kps) == 0:
        return []

    kps = [
        Keypoint((kp.pt[0], kp.pt[1]), float(r), d)
        for kp, r, d in zip(cv_kps, responses, desc)
    ]
    kps.sort(key=lambda k: -k.response)
    return kps[:max_points]


def match(a: list[Keypoint], b: list[Keypoint], ratio: float = 0.8) -> list[tuple[int, int]]:
    """One-to-one matches passing the ratio test and a mutual-best check."""
    if not a or not b:
        return []
    da = np.stack([k.descriptor for k in a]).astype(np.float32)
    db = np.stack([k.descriptor for k in b]).astype(np.float32)

    def best_two(q, t):
        # squared L2 distances; returns (best index, best d2, second d2)
        d2 = (
            np.sum(q * q, axis=1)[:, None]
            - 2.0 * q @ t.T
            + np.sum(t * t, axis=1)[None, :]
        )
        order = np.argsort(d2, axis=1)
        best = order[:, 0]
        bd = d2[np.arange(len(q)), best]
        sd = d2[np.arange(len(q)), order[:, 1]] if t.shape[0] > 1 else np.full(len(q), np.inf)
        return best, bd, sd

    fwd, fwd_d, fwd_s = best_two(da, db)
    bwd, bwd_d, bwd_s = best_two(db, da)

    # ratio test applied in both directions keeps matching symmetric
    out = []
    r2 = ratio * ratio
    for i, j in enumerate(fwd):
        if bwd[j] != i:
            continue
        if np.isfinite(fwd_s[i]) and fwd_d[i] > r2 * fwd_s[i]:
            continue
        if np.isfinite(bwd_s[j]) and bwd_d[j] > r2 * bwd_s[j]:
            continue
        out.append((i, int(j)))
    return out


def accumulate_matches(
    manifest: Manifest,
    window: tuple[int, int],
    stride: int = 5,
    max_points: int = 1000,
    ratio: float = 0.8,
    min_matches: int = 12,
    dedup_bin: float = 4.0,
) -> MatchSet:
    """Pool pairwise matches over a frame window, deduplicated by spatial bin.

    Raises :class:`MatchError` when some camera cannot be linked to the
    reference camera (directly or through one intermediate) with at least
    ``min_matches`` correspondences.
    """
    start, end = window
    n = manifest.n_cameras
    buckets: dict[tuple[int, int], dict[tuple, tuple]] = {
        (i, j): {} for i in range(n) for j in range(i + 1, n)
    }

    for t in range(start, end + 1, stride):
        stack = frame_stack(manifest, t)
        kps = [detect(im, max_points) for im in stack.images]
        for i in range(n):
            for j in range(i + 1, n):
                for ia, ib in match(kps[i], kps[j], ratio):
                    pa = kps[i][ia].position
                    pb = kps[j][ib].position
                    key = (
                        int(pa[0] // dedup_bin), int(pa[1] // dedup_bin),
                        int(pb[0] // dedup_bin), int(pb[1] // dedup_bin),
                    )
                    buckets[(i, j)].setdefault(key, (pa, pb))

    pairs = {}
    for key, bucket in buckets.items():
        if bucket:
            a = np.array([p[0] for p in bucket.values()], dtype=np.float64)
            b = np.array([p[1] for p in bucket.values()], dtype=np.float64)
            pairs[key] = (a, b)
    ms = MatchSet(pairs, window)

    ref = manifest.reference_index
    counts = ms.per_pair_count
    direct = {c for c in range(n) if c != ref and _count(counts, c, ref) >= min_matches}
    for c in range(n):
        if c == ref or c in direct:
            continue
        reachable = any(
            _count(counts, c, k) >= min_matches for k in direct
        )
        if not reachable:
            cid = manifest.camera_ids[c]
            rid = manifest.reference_camera
            raise MatchError(
                f"insufficient correspondences for camera pair ({cid!r}, {rid!r})"
            )
    return ms


def _count(counts: dict, a: int, b: int) -> int:
    return counts.get((min(a, b), max(a, b)), 0)
