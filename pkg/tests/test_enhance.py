import numpy as np
import pytest

from rigview.enhance import (
    CenteringTracker,
    FillState,
    apply_centering,
    centering_offsets,
    fill_missing,
)
from rigview.occlusion import FieldMask
from rigview.selector import (
    PROV_CROSS_VIEW,
    PROV_NONE,
    PROV_SELECTED,
    PROV_TEMPORAL,
    RenderedFrame,
)


def _frame(img, validity=None, t=1):
    if validity is None:
        validity = np.ones(img.shape[:2], dtype=bool)
    return RenderedFrame(t, img, validity, "cam", 0, False)


def test_tracker_alpha_one_jumps_to_target():
    tracker = CenteringTracker((100, 200), 1.0)
    dx, dy = tracker.update((60.0, 30.0))
    assert (dx, dy) == (40.0, 20.0)


def test_tracker_centered_field_needs_no_offset():
    tracker = CenteringTracker((100, 200), 0.3)
    dx, dy = tracker.update((100.0, 50.0))
    assert (dx, dy) == (0.0, 0.0)


def test_tracker_inherits_offset_on_empty_frames():
    tracker = CenteringTracker((100, 200), 0.5)
    first = tracker.update((60.0, 30.0))
    assert tracker.update(None) == first


def test_tracker_converges_exponentially():
    alpha = 0.05
    tracker = CenteringTracker((240, 320), alpha)
    target = (160.0 - 100.0, 120.0 - 80.0)
    for _ in range(100):
        dx, dy = tracker.update((100.0, 80.0))
    expect = 1.0 - (1.0 - alpha) ** 100
    assert dx == pytest.approx(target[0] * expect, rel=1e-9)
    assert dy == pytest.approx(target[1] * expect, rel=1e-9)


def test_tracker_clamps_to_half_frame():
    tracker = CenteringTracker((100, 100), 1.0)
    dx, dy = tracker.update((-500.0, -500.0))
    assert (dx, dy) == (50.0, 50.0)


def test_tracker_rejects_bad_alpha():
    with pytest.raises(ValueError):
        CenteringTracker((10, 10), 0.0)


def test_centering_offsets_tracks_mask_sequence():
    masks = [FieldMask(np.ones((10, 10), bool), 100, (2.0, 2.0)) for _ in range(5)]
    track = centering_offsets(masks, (10, 10), 0.5)
    assert track.offsets.shape == (5, 2)
    assert track.offsets[-1][0] > track.offsets[0][0] > 0


def test_apply_centering_zero_offset_is_noop():
    frame = _frame(np.ones((8, 8, 3), dtype=np.uint8))
    assert apply_centering(frame, (0, 0)) is frame


def test_apply_centering_moves_pixels():
    img = np.zeros((10, 12, 3), dtype=np.uint8)
    img[2, 3] = 200
    out = apply_centering(_frame(img), (4, 1))
    assert (out.image[3, 7] == 200).all()
    assert out.shift == (4, 1)
    # exposed band is invalid and unattributed
    assert not out.validity[:, :4].any()
    assert (out.fill_provenance[:, :4] == PROV_NONE).all()
    assert out.validity[1:, 4:].all()


def test_apply_centering_negative_offset():
    img = np.zeros((10, 12, 3), dtype=np.uint8)
    img[5, 5] = 77
    out = apply_centering(_frame(img), (-2, -3))
    assert (out.image[2, 3] == 77).all()
    assert not out.validity[8:, :].any()


def test_apply_centering_accumulates_shift():
    frame = _frame(np.zeros((20, 20, 3), dtype=np.uint8))
    once = apply_centering(frame, (2, 3))
    twice = apply_centering(once, (1, -1))
    assert twice.shift == (3, 2)


def test_apply_centering_rejects_huge_offsets():
    with pytest.raises(ValueError):
        apply_centering(_frame(np.zeros((10, 10, 3), dtype=np.uint8)), (9, 0))


def _bg(shape, value=120):
    img = np.full((*shape, 3), value, dtype=np.uint8)
    return img, np.ones(shape, dtype=bool)


def test_fill_complete_frame_unchanged():
    img = np.full((40, 60, 3), 90, dtype=np.uint8)
    out = fill_missing(_frame(img), _bg((40, 60)), FillState())
    assert np.array_equal(out.image, img)
    assert (out.fill_provenance == PROV_SELECTED).all()
    assert out.validity.all()


def test_fill_hole_taken_from_reference_view():
    img = np.full((60, 200, 3), 200, dtype=np.uint8)
    img[:, :100] = 0  # left half missing
    bg, bg_valid = _bg((60, 200), 40)
    out = fill_missing(_frame(img), (bg, bg_valid), FillState(), kernel=9)
    assert (out.fill_provenance[:, :100] == PROV_CROSS_VIEW).all()
    assert (out.fill_provenance[:, 100:] == PROV_SELECTED).all()
    # far from the seam the reference shows through unblended
    assert np.abs(out.image[:, :30].astype(int) - 40).max() <= 1
    assert np.array_equal(out.image[:, 150:], img[:, 150:])
    assert out.validity.all()


def test_fill_seam_is_a_convex_blend():
    img = np.full((40, 120, 3), 200, dtype=np.uint8)
    img[:, :60] = 0
    bg, bg_valid = _bg((40, 120), 40)
    out = fill_missing(_frame(img), (bg, bg_valid), FillState(), kernel=21)
    # every pixel stays a convex combination of its two sources
    lo = np.minimum(img.astype(int), bg.astype(int)) - 1
    hi = np.maximum(img.astype(int), bg.astype(int)) + 1
    assert (out.image >= lo).all() and (out.image <= hi).all()
    # the transition ramps up on the content side of the seam
    profile = out.image[:, :, 0].mean(axis=0)
    assert profile[61] < profile[66] < profile[71]


def test_fill_never_dilutes_into_uncovered_reference():
    img = np.full((40, 120, 3), 200, dtype=np.uint8)
    img[:, :60] = 0
    bg, bg_valid = _bg((40, 120), 40)
    bg_valid[:, :20] = False  # reference cannot supply the far left
    out = fill_missing(_frame(img), (bg, bg_valid), FillState(), kernel=21)
    assert (out.fill_provenance[:, :20] == PROV_NONE).all()
    assert not out.validity[:, :20].any()
    assert (out.image[:, :20] == 0).all()


def test_fill_temporal_fallback_uses_history():
    img = np.full((40, 120, 3), 200, dtype=np.uint8)
    img[:, :60] = 0
    bg, bg_valid = _bg((40, 120), 40)
    bg_valid[:, :30] = False
    history = np.full((40, 120, 3), 90, dtype=np.uint8)
    state = FillState(history=history, staleness=np.zeros((40, 120), dtype=np.int32))
    out = fill_missing(_frame(img), (bg, bg_valid), state, kernel=21)
    assert (out.fill_provenance[:, :30] == PROV_TEMPORAL).all()
    assert np.abs(out.image[:, :30].astype(int) - 90).max() <= 1
    assert out.validity.all()


def test_fill_staleness_bookkeeping():
    img = np.full((20, 60, 3), 200, dtype=np.uint8)
    img[:, :30] = 0
    bg, bg_valid = _bg((20, 60), 40)
    bg_valid[:, :30] = False
    state = FillState()
    fill_missing(_frame(img), (bg, bg_valid), state, kernel=9)
    assert (state.staleness[:, :30] == 1).all()
    assert (state.staleness[:, 30:] == 0).all()
    fill_missing(_frame(img, t=2), (bg, bg_valid), state, kernel=9)
    assert (state.staleness[:, :30] == 2).all()
    assert state.history is not None


def test_fill_temporal_blur_grows_with_staleness():
    rng = np.random.default_rng(0)
    history = rng.integers(0, 256, (40, 120, 3), dtype=np.uint8)
    img = np.full((40, 120, 3), 200, dtype=np.uint8)
    img[:, :60] = 0
    bg, bg_valid = _bg((40, 120), 40)
    bg_valid[:, :60] = False

    fresh = FillState(history=history.copy(), staleness=np.zeros((40, 120), np.int32))
    out_fresh = fill_missing(_frame(img), (bg, bg_valid), fresh, kernel=9)
    stale = FillState(
        history=history.copy(), staleness=np.full((40, 120), 200, np.int32)
    )
    out_stale = fill_missing(_frame(img), (bg, bg_valid), stale, kernel=9)
    var_fresh = out_fresh.image[:, :60].astype(float).var()
    var_stale = out_stale.image[:, :60].astype(float).var()
    assert var_stale < var_fresh  # heavier blur flattens the patch
