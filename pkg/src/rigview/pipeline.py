"""Offline orchestration: align -> select -> enhance -> metrics."""

from __future__ import annotations

import json
import os
import time
from dataclasses import dataclass, field
from pathlib import Path

import cv2
import numpy as np

from .config import PipelineConfig
from .enhance import CenteringTracker, FillState, apply_centering, fill_missing
from .features import accumulate_matches
from .geometry import HomographyAtlas, build_atlas
from .ingest import Manifest, frame_stack, load_manifest, read_frame, to_hsv
from .metrics import MetricsReport, evaluate_frames, itf, psnr
from .motion import (
    DomSeries,
    Timeline,
    build_timeline,
    dom_at,
    fit_isolation_forest,
    smooth,
    threshold,
)
from .occlusion import doo_at, find_calibration_frame, segment_field
from .selector import (
    PROV_CROSS_VIEW,
    PROV_NONE,
    PROV_SELECTED,
    PROV_TEMPORAL,
    SelectionPlan,
    plan_selection,
    render_frame,
    score_views,
)


class PipelineError(Exception):
    def __init__(self, stage: str, message: str):
        super().__init__(f"[{stage}] {message}")
        self.stage = stage


def _stack_key(manifest: Manifest, t: int) -> tuple:
    """Content key for one frame stack; hardlinked frames share inodes."""
    key = []
    for c in range(manifest.n_cameras):
        st = os.stat(manifest.frame_path(c, t))
        key.append((st.st_dev, st.st_ino, st.st_size))
    return tuple(key)


@dataclass
class AlignmentResult:
    timeline: Timeline
    atlases: dict[int, HomographyAtlas]
    dom_series: DomSeries
    notes: list[str] = field(default_factory=list)


def analyze_alignment(
    manifest: Manifest, cfg: PipelineConfig, rng: np.random.Generator
) -> AlignmentResult:
    """Detect rig movements and calibrate one atlas per stationary segment.

    Scans the misalignment series with the current atlas; when an m-second
    voting interval accumulates enough exceedances, a movement event is
    placed at the median exceeding index, the next occlusion-free frame is
    sought, and a fresh atlas takes over from there.
    """
    fps = manifest.fps
    n = manifest.frame_count
    dom_stride = max(1, int(round(fps * cfg.dom_stride_seconds)))
    doo_stride = max(1, int(round(fps * cfg.doo_stride_seconds)))
    interval = max(1, int(round(cfg.m_seconds * fps / dom_stride)))
    window_limit = max(interval, int(round(cfg.segment_minutes * 60 * fps / dom_stride)))

    doo_cache: dict[tuple, float | None] = {}

    def doo_fn(t: int) -> float | None:
        key = _stack_key(manifest, t)
        if key not in doo_cache:
            doo_cache[key] = doo_at(frame_stack(manifest, t)).value
        return doo_cache[key]

    def calibrate_once(t_hom: int, segment_id: int) -> HomographyAtlas:
        end = min(n, t_hom + cfg.accum_window - 1)
        matches = accumulate_matches(
            manifest,
            (t_hom, end),
            cfg.accum_stride,
            cfg.max_points,
            cfg.ratio_test,
            cfg.min_matches,
            cfg.dedup_bin,
        )
        return build_atlas(
            matches,
            manifest.camera_ids,
            manifest.reference_camera,
            segment_id,
            cfg.ransac_threshold,
            cfg.ransac_max_iters,
            cfg.ransac_confidence,
            cfg.min_matches,
            rng,
        )

    def calibrate(t_hom: int, segment_id: int) -> tuple[int, HomographyAtlas]:
        """Calibrate at t_hom, sliding forward while the window looks unstable.

        A window straddling a residual rig motion yields an atlas that
        misaligns its own last frame; gate on that residual and retry.
        """
        start = t_hom
        atlas = None
        for attempt in range(cfg.calib_max_retries + 1):
            atlas = calibrate_once(start, segment_id)
            probe = min(n, start + cfg.accum_window - 1)
            residual = dom_at(
                frame_stack(manifest, probe), atlas, cfg.dom_max_points, cfg.ratio_test
            )
            if residual is None or residual <= cfg.calib_dom_gate:
                return start, atlas
            if start + cfg.accum_window > n:
                break
            start = min(n, start + cfg.accum_window)
        notes.append(
            f"calibration at {t_hom} never stabilized; keeping last attempt"
        )
        return start, atlas

    notes: list[str] = []
    t_hom0 = find_calibration_frame(
        manifest, 1, cfg.tau_doo, cfg.doo_consecutive, doo_stride, doo_fn
    )
    if t_hom0 is None:
        raise PipelineError("align", "no calibration frame found at stream start")
    t_hom0, atlas0 = calibrate(t_hom0, 0)
    atlases = {0: atlas0}
    calibration_points = [t_hom0]
    movement_events: list[int] = []

    all_t: list[int] = []
    all_v: list[float] = []
    dom_cache: dict[tuple, float | None] = {}

    seg_t: list[int] = []
    seg_v: list[float] = []
    current_atlas = atlases[0]
    pending = 0  # samples since the last interval evaluation

    t = t_hom0
    while t <= n:
        key = (_stack_key(manifest, t), current_atlas.segment_id)
        if key not in dom_cache:
            dom_cache[key] = dom_at(
                frame_stack(manifest, t), current_atlas, cfg.dom_max_points, cfg.ratio_test
            )
        value = dom_cache[key]
        if value is not None:
            seg_t.append(t)
            seg_v.append(value)
            all_t.append(t)
            all_v.append(value)
            pending += 1

        if pending >= interval and len(seg_v) >= 2 * interval:
            pending = 0
            lo = max(0, len(seg_v) - window_limit)
            wt = np.array(seg_t[lo:], dtype=np.int64)
            wv = np.array(seg_v[lo:], dtype=np.float64)
            forest = fit_isolation_forest(
                wv, cfg.forest_trees, cfg.forest_subsample, cfg.forest_contamination, rng
            )
            inliers = ~forest.outlier_mask(wv)
            series = smooth(DomSeries(wt, wv, dom_stride, inliers), cfg.ma_window)
            tau = threshold(series.smoothed[np.isfinite(series.smoothed)])
            # vote one interval behind the scan so onset samples are fully
            # smoothed and survive the outlier filter
            span = interval * dom_stride
            recent = (wt > wt[-1] - 2 * span) & (wt <= wt[-1] - span)
            exceed = recent & np.isfinite(series.smoothed) & (series.smoothed > tau)
            if int(exceed.sum()) >= cfg.exceed_count:
                t_mov = int(np.median(wt[exceed]))
                movement_events.append(t_mov)
                t_hom = find_calibration_frame(
                    manifest, t_mov + 1, cfg.tau_doo, cfg.doo_consecutive, doo_stride, doo_fn
                )
                if t_hom is None:
                    notes.append(
                        f"no calibration frame after movement at {t_mov}; "
                        "stale atlas kept to stream end"
                    )
                    break
                segment_id = len(atlases)
                t_hom, atlases[segment_id] = calibrate(t_hom, segment_id)
                calibration_points.append(t_hom)
                current_atlas = atlases[segment_id]
                seg_t, seg_v = [], []
                t = t_hom
                continue
        t += dom_stride

    timeline = build_timeline(manifest, movement_events, calibration_points)
    timeline.warnings.extend(notes)
    dom_series = DomSeries(
        np.array(all_t, dtype=np.int64), np.array(all_v, dtype=np.float64), dom_stride
    )
    return AlignmentResult(timeline, atlases, dom_series, notes)


def plan_views(manifest: Manifest, cfg: PipelineConfig) -> SelectionPlan:
    """Score views at the selection cadence and build the switch plan."""
    ticks = np.arange(1, manifest.frame_count + 1, cfg.cadence, dtype=np.int64)
    cache: dict[tuple, np.ndarray] = {}
    rows = []
    for t in ticks:
        key = _stack_key(manifest, int(t))
        if key not in cache:
            cache[key] = score_views(frame_stack(manifest, int(t)))
        rows.append(cache[key])
    return plan_selection(
        np.stack(rows), ticks, manifest.frame_count, cfg.cadence, cfg.dwell_min
    )


def _shift_pair(
    img: np.ndarray, mask: np.ndarray, dx: int, dy: int
) -> tuple[np.ndarray, np.ndarray]:
    if dx == 0 and dy == 0:
        return img, mask
    h, w = img.shape[:2]
    out_i = np.zeros_like(img)
    out_m = np.zeros_like(mask)
    sy0, sy1 = max(0, -dy), min(h, h - dy)
    sx0, sx1 = max(0, -dx), min(w, w - dx)
    dy0, dx0 = max(0, dy), max(0, dx)
    out_i[dy0 : dy0 + (sy1 - sy0), dx0 : dx0 + (sx1 - sx0)] = img[sy0:sy1, sx0:sx1]
    out_m[dy0 : dy0 + (sy1 - sy0), dx0 : dx0 + (sx1 - sx0)] = mask[sy0:sy1, sx0:sx1]
    return out_i, out_m


@dataclass
class RenderStats:
    provenance_counts: dict[str, int]
    centroid_track: list[tuple[int, float, float]]
    switch_frames: list[int]
    none_per_frame: list[int] = field(default_factory=list)


def render_outputs(
    manifest: Manifest,
    timeline: Timeline,
    atlases: dict[int, HomographyAtlas],
    plan: SelectionPlan,
    cfg: PipelineConfig,
    frames_dir: Path,
    dump_debug: bool = False,
) -> RenderStats:
    """Render, optionally recenter and fill, and write the output frames."""
    frames_dir.mkdir(parents=True, exist_ok=True)
    debug_dir = frames_dir.parent / "provenance" if dump_debug else None
    if debug_dir:
        debug_dir.mkdir(parents=True, exist_ok=True)

    ref_idx = manifest.reference_index
    tracker = None
    fill_state = FillState()
    prov_counts = {"none": 0, "selected": 0, "cross_view": 0, "temporal": 0}
    centroid_track: list[tuple[int, float, float]] = []
    none_per_frame: list[int] = []

    for t in range(1, manifest.frame_count + 1):
        frame = render_frame(manifest, timeline, atlases, plan, t)
        offset = (0, 0)
        if cfg.centering:
            if tracker is None:
                tracker = CenteringTracker(frame.image.shape[:2], cfg.ema_alpha)
            fm = segment_field(to_hsv(frame.image))
            dx, dy = tracker.update(fm.centroid)
            offset = (int(round(dx)), int(round(dy)))
            frame = apply_centering(frame, offset)
        if cfg.filling:
            ref_img = read_frame(manifest, ref_idx, t)
            ref_mask = np.ones(ref_img.shape[:2], dtype=bool)
            ref_img, ref_mask = _shift_pair(ref_img, ref_mask, offset[0], offset[1])
            frame = fill_missing(
                frame,
                (ref_img, ref_mask),
                fill_state,
                cfg.fill_value_threshold,
                cfg.fill_kernel,
                cfg.temporal_blur_step,
                cfg.temporal_blur_cap,
            )
        if cfg.centering:
            fm_out = segment_field(to_hsv(frame.image))
            if fm_out.centroid:
                centroid_track.append((t, fm_out.centroid[0], fm_out.centroid[1]))

        prov = frame.fill_provenance
        none_per_frame.append(int((prov == PROV_NONE).sum()))
        prov_counts["none"] += int((prov == PROV_NONE).sum())
        prov_counts["selected"] += int((prov == PROV_SELECTED).sum())
        prov_counts["cross_view"] += int((prov == PROV_CROSS_VIEW).sum())
        prov_counts["temporal"] += int((prov == PROV_TEMPORAL).sum())

        cv2.imwrite(str(frames_dir / f"{t:06d}.png"), frame.image)
        if debug_dir:
            cv2.imwrite(str(debug_dir / f"{t:06d}.png"), prov * 80)

    return RenderStats(prov_counts, centroid_track, plan.switch_events, none_per_frame)


def load_frame_dir(path: str | Path) -> list[np.ndarray]:
    """Read a directory of PNG frames in index order."""
    path = Path(path)
    if not path.is_dir():
        raise PipelineError("evaluate", f"not a directory: {path}")
    files = sorted(p for p in path.iterdir() if p.suffix == ".png")
    if not files:
        raise PipelineError("evaluate", f"no frames in {path}")
    frames = []
    for p in files:
        img = cv2.imread(str(p), cv2.IMREAD_COLOR)
        if img is None:
            raise PipelineError("evaluate", f"failed to decode {p}")
        frames.append(img)
    return frames


def run(
    manifest_path: str | Path,
    cfg: PipelineConfig,
    out_dir: str | Path,
    dump_debug: bool = False,
) -> dict:
    """Full pipeline; writes frames and reports, returns the run report."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    cv2.setNumThreads(cfg.threads)
    timings: list[tuple[str, float]] = []

    def staged(stage, fn, *args, **kw):
        t0 = time.perf_counter()
        try:
            result = fn(*args, **kw)
        except PipelineError:
            raise
        except Exception as e:
            raise PipelineError(stage, str(e)) from e
        timings.append((stage, time.perf_counter() - t0))
        return result

    manifest = staged("ingest", load_manifest, manifest_path)
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 0xA11]))
    alignment = staged("align", analyze_alignment, manifest, cfg, rng)
    plan = staged("select", plan_views, manifest, cfg)
    frames_dir = out / "frames"
    stats = staged(
        "enhance",
        render_outputs,
        manifest, alignment.timeline, alignment.atlases, plan, cfg, frames_dir,
        dump_debug,
    )
    metrics = staged(
        "metrics", evaluate_frames, load_frame_dir(frames_dir), cfg.psnr_cap,
        cfg.dom_max_points,
    )

    alignment.timeline.save(out / "timeline.json")
    for sid, atlas in alignment.atlases.items():
        atlas.save(out / f"atlas_{sid:03d}.json")
    with open(out / "selection.json", "w") as f:
        json.dump(plan.to_json(manifest.camera_ids), f, indent=1)
    metrics.save(out / "metrics.json")

    report = {
        "manifest": str(manifest_path),
        "config": cfg.to_dict(),
        "timeline": alignment.timeline.to_json(),
        "selection": {
            "switches": plan.switch_events,
            "cameras_used": sorted(
                {manifest.camera_ids[c] for c in set(plan.choice.tolist())}
            ),
        },
        "metrics": metrics.to_json(),
        "provenance_counts": stats.provenance_counts,
        "dom_samples": [
            [int(t), round(float(v), 6)]
            for t, v in zip(alignment.dom_series.t, alignment.dom_series.values)
        ],
    }
    with open(out / "report.json", "w") as f:
        json.dump(report, f, indent=1, sort_keys=True)
    with open(out / "timings.log", "w") as f:
        for stage, dt in timings:
            f.write(f"{stage}\t{dt:.3f}s\n")
    if dump_debug:
        with open(out / "dom_series.csv", "w") as f:
            f.write("frame,dom_px\n")
            for t, v in zip(alignment.dom_series.t, alignment.dom_series.values):
                f.write(f"{t},{v:.6f}\n")
    return report


def evaluate(path_a: str | Path, path_b: str | Path, cfg: PipelineConfig) -> dict:
    """Comparative stability metrics for two frame sequences."""
    frames_a = load_frame_dir(path_a)
    frames_b = load_frame_dir(path_b)
    ra = evaluate_frames(frames_a, cfg.psnr_cap, cfg.dom_max_points)
    rb = evaluate_frames(frames_b, cfg.psnr_cap, cfg.dom_max_points)
    out = {
        "a": {"path": str(path_a), **ra.to_json()},
        "b": {"path": str(path_b), **rb.to_json()},
        "itf_ratio_a_over_b": ra.itf_db / rb.itf_db if rb.itf_db else None,
    }
    if ra.avspeed is not None and rb.avspeed not in (None, 0.0):
        out["avspeed_ratio_a_over_b"] = ra.avspeed / rb.avspeed
    else:
        out["avspeed_ratio_a_over_b"] = None
    return out
