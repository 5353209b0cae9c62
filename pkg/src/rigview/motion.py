"""Misalignment time series, movement-event detection, and the timeline."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import features
from .geometry import HomographyAtlas
from .ingest import FrameStack, Manifest


@dataclass
class DomSeries:
    """Sampled misalignment values with outlier flags and smoothed track."""

    t: np.ndarray               # frame indices, int
    values: np.ndarray          # misalignment, px
    stride: int                 # frames between samples
    inlier_mask: np.ndarray | None = None
    smoothed: np.ndarray | None = None  # NaN outside the inlier support


@dataclass
class Segment:
    start: int
    end: int
    atlas_id: int
    stale: bool = False


@dataclass
class Timeline:
    movement_events: list[int]
    calibration_points: list[int]
    segments: list[Segment]
    fps: float
    frame_count: int
    warnings: list[str] = field(default_factory=list)
    flags: list[str] = field(default_factory=list)

    def __post_init__(self) -> None:
        cursor = 1
        for seg in self.segments:
            if seg.start != cursor or seg.end < seg.start:
                raise ValueError("timeline segments must partition [1, N]")
            cursor = seg.end + 1
        if cursor != self.frame_count + 1:
            raise ValueError("timeline segments must cover all frames")

    def segment_for(self, t: int) -> Segment:
        for seg in self.segments:
            if seg.start <= t <= seg.end:
                return seg
        raise ValueError(f"frame {t} outside timeline")

    def to_json(self) -> dict:
        def clock(t: int) -> str:
            s = (t - 1) / self.fps
            return f"{int(s // 3600):02d}:{int(s % 3600 // 60):02d}:{s % 60:06.3f}"

        events = [
            {"frame": t, "time": clock(t), "type": "move"}
            for t in self.movement_events
        ] + [
            {"frame": t, "time": clock(t), "type": "calibration"}
            for t in self.calibration_points
        ]
        events.sort(key=lambda e: e["frame"])
        return {
            "events": events,
            "segments": [
                {
                    "start": s.start,
                    "end": s.end,
                    "atlas_id": s.atlas_id,
                    "stale": s.stale,
                }
                for s in self.segments
            ],
            "warnings": self.warnings,
            "flags": self.flags,
        }

    def save(self, path: str | Path) -> None:
        with open(path, "w") as f:
            json.dump(self.to_json(), f, indent=1, sort_keys=True)


# ---------------------------------------------------------------------------
# degree of misalignment

def misalignment_from_matches(
    pair_points: dict[tuple[int, int], tuple[np.ndarray, np.ndarray]],
    atlas: HomographyAtlas,
) -> float | None:
    """Mean reprojection error over correspondences of all camera pairs.

    ``pair_points`` maps ordered camera-index pairs (c, c') to matching
    (N, 2) point arrays in the two views; the error for each pair is
    ||H_{c->c'}(p) - p'||.  Returns None when there are no correspondences.
    """
    total = 0.0
    count = 0
    for (c, cp), (pa, pb) in pair_points.items():
        if len(pa) == 0:
            continue
        h = atlas.between(c, cp)
        proj = h.apply(pa)
        total += float(np.linalg.norm(proj - pb, axis=1).sum())
        count += len(pa)
    if count == 0:
        return None
    return total / count


def dom_at(
    stack: FrameStack,
    atlas: HomographyAtlas,
    max_points: int = 400,
    ratio: float = 0.8,
) -> float | None:
    """Misalignment of one frame stack under the current atlas.

    Fresh keypoints are detected and matched per camera pair; both
    directions of every pair contribute, mirroring the symmetric double sum.
    """
    n = len(stack.images)
    kps = [features.detect(im, max_points) for im in stack.images]
    pair_points: dict[tuple[int, int], tuple[np.ndarray, np.ndarray]] = {}
    for c in range(n):
        for cp in range(c + 1, n):
            m = features.match(kps[c], kps[cp], ratio)
            if not m:
                continue
            pa = np.array([kps[c][i].position for i, _ in m])
            pb = np.array([kps[cp][j].position for _, j in m])
            pair_points[(c, cp)] = (pa, pb)
            pair_points[(cp, c)] = (pb, pa)
    return misalignment_from_matches(pair_points, atlas)


# ---------------------------------------------------------------------------
# isolation forest (1-D)

@dataclass
class _TreeNode:
    split: float | None         # None marks an external node
    size: int                   # samples that reached an external node
    left: "_TreeNode | None" = None
    right: "_TreeNode | None" = None


def _avg_path_length(n: int) -> float:
    if n <= 1:
        return 0.0
    h = np.log(n - 1) + np.euler_gamma
    return 2.0 * h - 2.0 * (n - 1) / n


def _grow_tree(values: np.ndarray, depth: int, limit: int, rng: np.random.Generator) -> _TreeNode:
    lo, hi = values.min(), values.max()
    if depth >= limit or len(values) <= 1 or lo == hi:
        return _TreeNode(None, len(values))
    split = rng.uniform(lo, hi)
    left = values[values < split]
    right = values[values >= split]
    if len(left) == 0 or len(right) == 0:
        return _TreeNode(None, len(values))
    return _TreeNode(
        float(split),
        len(values),
        _grow_tree(left, depth + 1, limit, rng),
        _grow_tree(right, depth + 1, limit, rng),
    )


@dataclass
class IsolationForestModel:
    tree_count: int
    subsample_size: int
    trees: list[_TreeNode]
    contamination: float

    def path_length(self, x: float) -> float:
        total = 0.0
        for tree in self.trees:
            node = tree
            depth = 0
            while node.split is not None:
                node = node.left if x < node.split else node.right
                depth += 1
            total += depth + _avg_path_length(node.size)
        return total / len(self.trees)

    def scores(self, values: np.ndarray) -> np.ndarray:
        c = _avg_path_length(self.subsample_size)
        if c <= 0:
            return np.full(len(values), 0.5)
        return np.array([2.0 ** (-self.path_length(v) / c) for v in values])

    def outlier_mask(self, values: np.ndarray) -> np.ndarray:
        """True for the top ``contamination`` fraction by anomaly score."""
        values = np.asarray(values, dtype=np.float64)
        n = len(values)
        out = np.zeros(n, dtype=bool)
        k = int(np.floor(self.contamination * n))
        if k == 0 or n <= 1:
            return out
        s = self.scores(values)
        if s.max() - s.min() < 1e-12:
            return out
        # stable top-k so equal scores resolve deterministically
        order = np.argsort(-s, kind="stable")
        out[order[:k]] = True
        return out


def fit_isolation_forest(
    values: np.ndarray,
    tree_count: int = 100,
    subsample: int = 256,
    contamination: float = 0.1,
    rng: np.random.Generator | None = None,
) -> IsolationForestModel:
    """Fit a 1-D isolation forest over the sample values."""
    values = np.asarray(values, dtype=np.float64)
    if len(values) == 0:
        raise ValueError("values must be non-empty")
    rng = rng or np.random.default_rng(0)
    psi = min(subsample, len(values))
    limit = int(np.ceil(np.log2(max(2, psi))))
    trees = []
    for _ in range(tree_count):
        idx = rng.choice(len(values), size=psi, replace=False)
        trees.append(_grow_tree(values[idx], 0, limit, rng))
    return IsolationForestModel(tree_count, psi, trees, contamination)


# ---------------------------------------------------------------------------
# smoothing / thresholding / event detection

def smooth(series: DomSeries, window: int) -> DomSeries:
    """Centered moving average over inlier samples only."""
    if window < 1 or window % 2 == 0:
        raise ValueError("window must be odd and >= 1")
    inliers = (
        series.inlier_mask
        if series.inlier_mask is not None
        else np.ones(len(series.values), dtype=bool)
    )
    vals = series.values
    smoothed = np.full(len(vals), np.nan)
    idx = np.nonzero(inliers)[0]
    half = window // 2
    compact = vals[idx]
    for pos, i in enumerate(idx):
        lo = max(0, pos - half)
        hi = min(len(compact), pos + half + 1)
        smoothed[i] = compact[lo:hi].mean()
    return DomSeries(series.t, vals, series.stride, inliers, smoothed)


def threshold(values: np.ndarray) -> float:
    """min(max + 1, 2 * mean) over a processing segment's samples."""
    values = np.asarray(values, dtype=np.float64)
    values = values[np.isfinite(values)]
    if len(values) == 0:
        return np.inf
    return float(min(values.max() + 1.0, 2.0 * values.mean()))


def detect_movements(
    series: DomSeries,
    fps: float,
    m_seconds: float = 75.0,
    exceed_count: int = 4,
    segment_minutes: float = 10.0,
) -> list[int]:
    """Movement events from a smoothed misalignment series.

    The threshold is computed per ten-minute processing segment; every
    m-second interval with at least ``exceed_count`` exceedances votes,
    and consecutive qualifying intervals merge into a single event whose
    index is the median of all exceeding samples.
    """
    if series.smoothed is None:
        series = smooth(series, 1)
    sm = series.smoothed
    t = series.t
    valid = np.isfinite(sm)

    seg_frames = max(1, int(round(segment_minutes * 60.0 * fps)))
    m_frames = max(1, int(round(m_seconds * fps)))

    # per-sample threshold from the containing processing segment
    tau = np.full(len(t), np.inf)
    start_frame = int(t[0]) if len(t) else 1
    for s0 in range(start_frame, int(t[-1]) + 1 if len(t) else 1, seg_frames):
        in_seg = (t >= s0) & (t < s0 + seg_frames)
        vals = sm[in_seg & valid]
        if len(vals):
            tau[in_seg] = threshold(vals)

    exceed = valid & (sm > tau)

    # vote per m-second interval
    qualifying: list[tuple[int, np.ndarray]] = []  # (interval index, exceeding t's)
    if len(t):
        first = int(t[0])
        last = int(t[-1])
        n_intervals = (last - first) // m_frames + 1
        for k in range(n_intervals):
            lo = first + k * m_frames
            hi = lo + m_frames
            in_bin = (t >= lo) & (t < hi) & exceed
            if int(in_bin.sum()) >= exceed_count:
                qualifying.append((k, t[in_bin]))

    # merge consecutive qualifying intervals into one event
    events: list[int] = []
    group: list[np.ndarray] = []
    prev_k = None
    for k, ts in qualifying:
        if prev_k is not None and k == prev_k + 1:
            group.append(ts)
        else:
            if group:
                events.append(int(np.median(np.concatenate(group))))
            group = [ts]
        prev_k = k
    if group:
        events.append(int(np.median(np.concatenate(group))))
    return events


def build_timeline(
    manifest: Manifest,
    movement_events: list[int],
    calibration_points: list[int],
) -> Timeline:
    """Segment table from the detected events.

    Frames between a movement and its recalibration keep the previous
    atlas with a stale flag; a missing recalibration before stream end is
    recorded as a warning.
    """
    n = manifest.frame_count
    moves = sorted(movement_events)
    calibs = sorted(calibration_points)
    warnings: list[str] = []
    flags: list[str] = []

    design_gap = int(round(10 * 60 * manifest.fps))
    for a, b in zip(moves, moves[1:]):
        if b - a < design_gap:
            flags.append(f"movement at frame {b} below design rate (previous at {a})")

    segments: list[Segment] = []
    atlas_id = 0
    cursor = 1
    for mv in moves:
        if mv < cursor:
            continue
        segments.append(Segment(cursor, min(mv, n), atlas_id))
        cursor = mv + 1
        if cursor > n:
            break
        t_hom = next((c for c in calibs if c > mv), None)
        if t_hom is None or t_hom > n:
            warnings.append(
                f"no calibration frame after movement at {mv}; stale atlas persists"
            )
            segments.append(Segment(cursor, n, atlas_id, stale=True))
            cursor = n + 1
            break
        if t_hom > cursor:
            segments.append(Segment(cursor, t_hom - 1, atlas_id, stale=True))
        cursor = t_hom
        atlas_id += 1
    if cursor <= n:
        segments.append(Segment(cursor, n, atlas_id))

    return Timeline(moves, calibs, segments, manifest.fps, n, warnings, flags)
