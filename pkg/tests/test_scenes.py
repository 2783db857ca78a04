import numpy as np
import pytest

from groundtex import scenes
from groundtex.imaging import CameraModel
from groundtex.scenes import (PlaneEntry, PlaneKind, PlaneSceneSpec, Rect,
                              affine_coefficients, interior_mask,
                              random_scene, render_rgb, six_plane_scene,
                              synth_scene, synth_scene_full)

# independent pinhole oracles: slope B/h, frontal d = f*B/Z
B_OVER_H = 0.54 / 1.65


def test_horizontal_ground_row_slope(default_cam):
    spec = scenes.flat_ground_scene(256, 128)
    disp, mask = synth_scene(spec, default_cam)
    col = disp.data[:, 40]
    rows = np.flatnonzero(np.isfinite(col))
    diffs = np.diff(col[rows].astype(np.float64))
    assert diffs == pytest.approx(B_OVER_H, abs=1e-5)
    # column-constant
    band = disp.data[rows[0]:rows[-1] + 1, :]
    assert np.ptp(band, axis=1).max() < 1e-5
    assert mask[rows[0]:, :].all()


def test_frontal_obstacle_exact_disparity():
    cam = CameraModel(700.0, 0.54, 1.65, 40.0, 128.0)
    spec = PlaneSceneSpec(256, 128, (
        PlaneEntry(PlaneKind.FRONTAL_OBSTACLE, Rect(10, 30, 60, 90), distance_m=18.9),))
    disp, mask = synth_scene(spec, cam)
    region = disp.data[10:60, 30:90]
    assert region == pytest.approx(700.0 * 0.54 / 18.9)  # = 20.0
    assert float(region[0, 0]) == pytest.approx(20.0, abs=1e-5)
    assert not mask.any()


def test_empty_spec_all_invalid(default_cam):
    disp, mask = synth_scene(PlaneSceneSpec(64, 32), default_cam)
    assert not disp.valid.any()
    assert not mask.any()


def test_ground_disparity_nonincreasing_bottom_to_top(six_plane):
    spec, cam, disp, mask, ids = six_plane
    for idx, entry in enumerate(spec.entries):
        if not entry.kind.is_ground:
            continue
        r = entry.footprint
        block = disp.data[r.top:r.bottom, r.left:r.right].astype(np.float64)
        # walking upward (decreasing row) disparity must not increase
        assert (np.diff(block, axis=0) >= -1e-6).all()


def test_lateral_wall_constant_along_rows(six_plane):
    spec, cam, disp, mask, ids = six_plane
    for idx, entry in enumerate(spec.entries):
        if entry.kind not in (PlaneKind.LEFT_LATERAL_OBSTACLE, PlaneKind.RIGHT_LATERAL_OBSTACLE):
            continue
        r = entry.footprint
        block = disp.data[r.top:r.bottom, r.left:r.right]
        assert np.ptp(block, axis=0).max() < 1e-6      # constant along v
        assert np.ptp(block, axis=1).min() > 0.0       # varies along u


def test_lateral_slope_affine_in_u_and_v(default_cam):
    spec = scenes.lateral_slope_scene(256, 128, tilt_deg=10.0)
    disp, _ = synth_scene(spec, default_cam)
    a, b, c = affine_coefficients(spec.entries[0], default_cam)
    r = spec.entries[0].footprint
    block = disp.data[r.top:r.bottom, r.left:r.right].astype(np.float64)
    assert np.diff(block, axis=0) == pytest.approx(a, abs=1e-5)
    assert np.diff(block, axis=1) == pytest.approx(b, abs=1e-5)
    assert b == pytest.approx(0.54 * np.sin(np.radians(10.0)) / 1.65)


def test_painter_order_later_wins(default_cam):
    ground = PlaneEntry(PlaneKind.HORIZONTAL_GROUND, Rect(64, 0, 128, 256))
    box = PlaneEntry(PlaneKind.FRONTAL_OBSTACLE, Rect(50, 100, 100, 150), distance_m=10.0)
    disp, mask, ids = synth_scene_full(PlaneSceneSpec(256, 128, (ground, box)), default_cam)
    assert (ids[50:100, 100:150] == 1).all()
    assert disp.data[70, 120] == pytest.approx(700.0 * 0.54 / 10.0)
    assert not mask[70, 120]
    assert mask[70, 50]


def test_negative_disparity_rejected(default_cam):
    # ground footprint straddling the horizon -> d < 0 above it
    spec = PlaneSceneSpec(256, 128, (
        PlaneEntry(PlaneKind.HORIZONTAL_GROUND, Rect(0, 0, 128, 256)),))
    with pytest.raises(ValueError, match="negative disparity"):
        synth_scene(spec, default_cam)


def test_footprint_outside_bounds_rejected():
    with pytest.raises(ValueError, match="outside"):
        PlaneSceneSpec(64, 64, (
            PlaneEntry(PlaneKind.FRONTAL_OBSTACLE, Rect(0, 0, 65, 64), distance_m=5.0),))


def test_empty_footprint_rejected():
    with pytest.raises(ValueError):
        Rect(10, 10, 10, 20)


def test_wall_needs_distance():
    with pytest.raises(ValueError):
        PlaneEntry(PlaneKind.LEFT_LATERAL_OBSTACLE, Rect(0, 0, 10, 10))


def test_synth_deterministic(six_plane, default_cam):
    spec, cam, disp, mask, ids = six_plane
    disp2, mask2, ids2 = synth_scene_full(spec, cam)
    assert np.array_equal(disp.data, disp2.data, equal_nan=True)
    assert np.array_equal(mask, mask2)
    assert np.array_equal(ids, ids2)


def test_six_plane_scene_covers_image(six_plane):
    spec, cam, disp, mask, ids = six_plane
    assert disp.valid.all()
    assert (ids >= 0).all()
    assert {e.kind for e in spec.entries} == set(PlaneKind)


def test_interior_mask_respects_overpaint(default_cam):
    ground = PlaneEntry(PlaneKind.HORIZONTAL_GROUND, Rect(64, 0, 128, 256))
    box = PlaneEntry(PlaneKind.FRONTAL_OBSTACLE, Rect(80, 100, 120, 150), distance_m=10.0)
    spec = PlaneSceneSpec(256, 128, (ground, box))
    _, _, ids = synth_scene_full(spec, default_cam)
    inner = interior_mask(spec, ids, 0, margin=4)
    assert not inner[80:120, 100:150].any()
    assert inner[70, 50]


@pytest.mark.parametrize("seed", range(8))
def test_random_scene_valid_across_seeds(seed, default_cam):
    spec = random_scene(seed, 256, 128)
    disp, mask = synth_scene(spec, default_cam)
    valid = disp.valid
    assert valid.any()
    assert (disp.data[valid] >= 0).all()
    assert mask.any() and not mask.all()
    rgb = render_rgb(spec, seed=seed)
    assert rgb.shape == (128, 256, 3) and rgb.dtype == np.uint8


def test_render_rgb_deterministic():
    spec = six_plane_scene()
    assert np.array_equal(render_rgb(spec, seed=3), render_rgb(spec, seed=3))
