import math

import cv2
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rigview.metrics import MetricsError, avspeed, evaluate_frames, itf, psnr


def _video(seed, n_frames=5, shape=(32, 32, 3)):
    rng = np.random.default_rng(seed)
    return [rng.integers(0, 256, shape, dtype=np.uint8) for _ in range(n_frames)]


def test_psnr_identical_hits_cap():
    img = _video(0, 1)[0]
    assert psnr(img, img) == 100.0
    assert psnr(img, img, cap=60.0) == 60.0


def test_psnr_uniform_offset_oracle():
    a = np.full((64, 64, 3), 100, dtype=np.uint8)
    b = np.full((64, 64, 3), 116, dtype=np.uint8)
    expected = 10.0 * math.log10(255.0**2 / 256.0)
    assert psnr(a, b) == pytest.approx(expected, abs=1e-9)


def test_psnr_black_vs_white():
    black = np.zeros((8, 8, 3), dtype=np.uint8)
    white = np.full((8, 8, 3), 255, dtype=np.uint8)
    assert psnr(black, white) == pytest.approx(0.0, abs=1e-9)


def test_psnr_shape_mismatch_raises():
    with pytest.raises(MetricsError, match="mismatch"):
        psnr(np.zeros((4, 4, 3), np.uint8), np.zeros((4, 5, 3), np.uint8))


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000))
def test_psnr_symmetric(seed):
    a, b = _video(seed, 2)
    assert psnr(a, b) == psnr(b, a)


def test_itf_requires_two_frames():
    with pytest.raises(MetricsError, match="fewer than 2"):
        itf(_video(1, 1))


def test_itf_static_video_hits_cap():
    img = _video(2, 1)[0]
    assert itf([img, img.copy(), img.copy()]) == 100.0


def test_itf_two_frames_equals_psnr():
    a, b = _video(3, 2)
    assert itf([a, b]) == pytest.approx(psnr(a, b))


def test_itf_matches_brute_force_on_random_videos():
    for seed in range(10):
        frames = _video(seed + 100, n_frames=5)
        total = 0.0
        for k in range(len(frames) - 1):
            se = 0.0
            a = frames[k].astype(np.float64)
            b = frames[k + 1].astype(np.float64)
            for i in range(a.shape[0]):
                for j in range(a.shape[1]):
                    for c in range(3):
                        se += (a[i, j, c] - b[i, j, c]) ** 2
            mse = se / a.size
            total += 100.0 if mse == 0 else min(100.0, 10 * math.log10(255**2 / mse))
        expected = total / (len(frames) - 1)
        assert itf(frames) == pytest.approx(expected, rel=1e-6)


def _textured(seed, shape=(200, 300)):
    rng = np.random.default_rng(seed)
    tex = rng.integers(0, 256, (shape[0] + 100, shape[1] + 200), dtype=np.uint8)
    tex = cv2.GaussianBlur(tex, (0, 0), 1.0)
    return cv2.normalize(tex, None, 0, 255, cv2.NORM_MINMAX)


def test_avspeed_static_video_is_zero():
    tex = _textured(4)
    frame = np.repeat(tex[:200, :300, None], 3, axis=2)
    speed, count = avspeed([frame, frame.copy(), frame.copy()])
    assert count > 100
    assert speed == 0.0


def test_avspeed_translating_video_measures_shift():
    tex = _textured(5)
    frames = [
        np.repeat(tex[50:250, 50 + 3 * i : 350 + 3 * i, None], 3, axis=2)
        for i in range(8)
    ]
    speed, count = avspeed(frames)
    assert count > 500
    assert speed == pytest.approx(3.0, abs=0.2)


def test_avspeed_flat_video_tracks_nothing():
    flat = np.zeros((60, 80, 3), dtype=np.uint8)
    speed, count = avspeed([flat, flat])
    assert speed is None and count == 0


def test_avspeed_requires_two_frames():
    with pytest.raises(MetricsError):
        avspeed([np.zeros((10, 10, 3), np.uint8)])


def test_avspeed_matches_brute_force():
    from rigview.features import detect, match

    tex = _textured(6)
    frames = [
        np.repeat(tex[20:180, 10 + 2 * i : 250 + 2 * i, None], 3, axis=2)
        for i in range(4)
    ]
    total, count = 0.0, 0
    kps = [detect(f, 400) for f in frames]
    for k in range(len(frames) - 1):
        for i, j in match(kps[k], kps[k + 1], 0.8):
            pa = kps[k][i].position
            pb = kps[k + 1][j].position
            total += math.hypot(pb[0] - pa[0], pb[1] - pa[1])
            count += 1
    speed, n = avspeed(frames, max_points=400, ratio=0.8)
    assert n == count
    assert speed == pytest.approx(total / count, rel=1e-9)


def test_evaluate_frames_report():
    frames = _video(7, 4, shape=(48, 48, 3))
    report = evaluate_frames(frames)
    assert report.frames_evaluated == 4
    assert report.itf_db == pytest.approx(itf(frames))
    data = report.to_json()
    assert set(data) == {
        "itf_db", "avspeed_px_per_frame", "frames_evaluated", "tracked_points"
    }
