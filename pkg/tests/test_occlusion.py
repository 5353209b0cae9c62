import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rigview.ingest import Manifest, to_hsv
from rigview.occlusion import (
    doo_from_areas,
    doo_at,
    find_calibration_frame,
    segment_field,
)
from rigview.ingest import FrameStack

from conftest import hsv_image


def test_full_field_hue():
    fm = segment_field(to_hsv(hsv_image(15, shape=(60, 80))))
    assert fm.area == 60 * 80
    assert np.allclose(fm.centroid, (79 / 2, 59 / 2))


def test_high_hue_window_counts_as_field():
    fm = segment_field(to_hsv(hsv_image(170, shape=(60, 80))))
    assert fm.area == 60 * 80


def test_background_hue_is_not_field():
    fm = segment_field(to_hsv(hsv_image(100, shape=(60, 80))))
    assert fm.area == 0
    assert fm.centroid is None


def test_zero_saturation_never_field():
    fm = segment_field(to_hsv(hsv_image(15, saturation=0, shape=(60, 80))))
    assert fm.area == 0


def test_half_field_centroid():
    hue = np.full((60, 80), 100, dtype=np.uint8)
    hue[:, :40] = 15
    fm = segment_field(to_hsv(hsv_image(hue, shape=(60, 80))))
    assert fm.area == 60 * 40
    assert abs(fm.centroid[0] - 80 / 4) <= 1.0
    assert abs(fm.centroid[1] - 60 / 2) <= 1.0


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000))
def test_mask_depends_only_on_hue(seed):
    from rigview.ingest import HsvImage

    rng = np.random.default_rng(seed)
    hue = rng.integers(0, 180, (20, 30)).astype(np.uint8)
    base = segment_field(
        HsvImage(hue, np.full((20, 30), 150, np.uint8), np.full((20, 30), 120, np.uint8))
    )
    sat = rng.integers(1, 256, (20, 30)).astype(np.uint8)
    val = rng.integers(0, 256, (20, 30)).astype(np.uint8)
    perturbed = segment_field(HsvImage(hue, sat, val))
    assert np.array_equal(base.mask, perturbed.mask)


def test_doo_equal_areas_is_zero():
    assert doo_from_areas(np.full(5, 123.0)) == 0.0


def test_doo_single_occluded_camera():
    value = doo_from_areas(np.array([100.0, 100, 100, 100, 50]))
    assert value == pytest.approx((100 - 50) / 90.0)
    assert value > 0.5


def test_doo_threshold_boundaries():
    low = doo_from_areas(np.array([1.0, 1, 1, 1, 0.6]))
    assert low == pytest.approx(0.4 / 0.92)
    assert low < 0.5
    high = doo_from_areas(np.array([1.0, 1, 1, 1, 0.5]))
    assert high == pytest.approx(0.5 / 0.9)
    assert high > 0.5


def test_doo_no_field_returns_none():
    assert doo_from_areas(np.zeros(4)) is None


@settings(max_examples=40, deadline=None)
@given(
    st.lists(st.floats(0.01, 1e6), min_size=2, max_size=8),
    st.floats(0.01, 100.0),
)
def test_doo_scale_invariant(areas, k):
    a = np.array(areas)
    assert doo_from_areas(k * a) == pytest.approx(doo_from_areas(a), rel=1e-9)


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(0.01, 1e6), min_size=2, max_size=8))
def test_doo_zero_iff_equal(areas):
    a = np.array(areas)
    value = doo_from_areas(a)
    assert (value == 0.0) == (a.max() == a.min())


def test_doo_at_uses_raw_views():
    images = [hsv_image(15, shape=(30, 40)) for _ in range(3)]
    half = np.full((30, 40), 100, dtype=np.uint8)
    half[:, :20] = 15
    images.append(hsv_image(half, shape=(30, 40)))
    sample = doo_at(FrameStack(7, images))
    assert sample.t == 7
    assert sample.areas.tolist() == [1200, 1200, 1200, 600]
    assert sample.value == pytest.approx(600 / 1050)


def _fake_manifest(frames):
    return Manifest(("a", "b"), (None, None), 30.0, "a", frames)


def test_find_calibration_frame_run_rule():
    series = {1: 0.8, 31: 0.7, 61: 0.2, 91: 0.3, 121: 0.1, 151: 0.2, 181: 0.25}
    t_hom = find_calibration_frame(
        _fake_manifest(210), 1, 0.5, 5, 30, doo_fn=series.__getitem__
    )
    assert t_hom == 61


def test_find_calibration_frame_broken_run_restarts():
    series = {1: 0.1, 31: 0.1, 61: 0.9, 91: 0.1, 121: 0.1, 151: 0.1}
    t_hom = find_calibration_frame(
        _fake_manifest(160), 1, 0.5, 3, 30, doo_fn=series.__getitem__
    )
    assert t_hom == 91


def test_find_calibration_frame_none_value_breaks_run():
    series = {1: 0.1, 31: None, 61: 0.1, 91: 0.1, 121: 0.1}
    t_hom = find_calibration_frame(
        _fake_manifest(150), 1, 0.5, 3, 30, doo_fn=series.__getitem__
    )
    assert t_hom == 61


def test_find_calibration_frame_stream_too_short():
    t_hom = find_calibration_frame(
        _fake_manifest(90), 1, 0.5, 5, 30, doo_fn=lambda t: 0.1
    )
    assert t_hom is None


def test_find_calibration_frame_respects_start():
    t_hom = find_calibration_frame(
        _fake_manifest(300), 101, 0.5, 3, 30, doo_fn=lambda t: 0.1
    )
    assert t_hom == 101
