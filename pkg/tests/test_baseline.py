import numpy as np
import pytest

from groundtex import scenes
from groundtex.baseline import (DegenerateFitError, GroundProfile,
                                classify_by_profile, fit_ground_line,
                                save_pgm, v_disparity)
from groundtex.imaging import CameraModel, DisparityMap

B_OVER_H = 0.54 / 1.65


def test_single_pixel_histogram():
    data = np.full((20, 20), np.nan, dtype=np.float32)
    data[7, 3] = 10.2
    hist = v_disparity(DisparityMap(data), bins=16, bin_width=1.0)
    assert hist.counts.sum() == 1
    assert hist.counts[7, 10] == 1


def test_all_invalid_zero_histogram():
    hist = v_disparity(DisparityMap.all_invalid(10, 10), bins=8)
    assert not hist.counts.any()
    with pytest.raises(DegenerateFitError):
        fit_ground_line(hist)


def test_mass_conservation_random():
    rng = np.random.default_rng(0)
    data = rng.uniform(0, 40, (30, 25)).astype(np.float32)
    data[rng.random((30, 25)) < 0.3] = np.nan
    disp = DisparityMap(data)
    hist = v_disparity(disp, bin_width=0.5)
    assert hist.counts.sum() == disp.valid.sum()


def test_overrange_clamped_into_last_bin():
    data = np.array([[3.0, 99.0]], dtype=np.float32)
    hist = v_disparity(DisparityMap(data), bins=5, bin_width=1.0)
    assert hist.counts[0, 3] == 1
    assert hist.counts[0, 4] == 1


def test_flat_ground_line_slope_within_1pct(default_cam):
    spec = scenes.flat_ground_scene(256, 128)
    disp, _ = scenes.synth_scene(spec, default_cam)
    hist = v_disparity(disp, bin_width=1.0)
    # per-row counts concentrate in one bin tracing the B/h line
    rows_with_mass = np.flatnonzero(hist.counts.sum(axis=1))
    assert (hist.counts[rows_with_mass] > 0).sum(axis=1).max() <= 2
    prof = fit_ground_line(hist)
    assert abs(prof.alpha - B_OVER_H) / B_OVER_H < 0.01


def test_obstacle_shifts_slope_under_2pct(default_cam):
    flat = scenes.flat_ground_scene(256, 128)
    disp_flat, _ = scenes.synth_scene(flat, default_cam)
    alpha_clean = fit_ground_line(v_disparity(disp_flat, bin_width=1.0)).alpha
    # frontal obstacle covering ~20% of the image
    with_box = scenes.PlaneSceneSpec(256, 128, flat.entries + (
        scenes.PlaneEntry(scenes.PlaneKind.FRONTAL_OBSTACLE,
                          scenes.Rect(20, 60, 100, 150), distance_m=12.0),))
    disp_box, _ = scenes.synth_scene(with_box, default_cam)
    alpha_box = fit_ground_line(v_disparity(disp_box, bin_width=1.0)).alpha
    assert abs(alpha_box - alpha_clean) / alpha_clean < 0.02


def test_single_row_histogram_degenerate():
    data = np.full((20, 20), np.nan, dtype=np.float32)
    data[5, :] = 12.0
    with pytest.raises(DegenerateFitError):
        fit_ground_line(v_disparity(DisparityMap(data), bins=16))


class TestClassify:
    def test_exact_flat_ground_fully_recovered(self, default_cam):
        spec = scenes.flat_ground_scene(256, 128)
        disp, mask = scenes.synth_scene(spec, default_cam)
        prof = fit_ground_line(v_disparity(disp, bin_width=1.0))
        pred = classify_by_profile(disp, prof, tol=0.5)
        recall = (pred & mask).sum() / mask.sum()
        assert recall >= 0.99
        assert not pred[~disp.valid].any()

    def test_frontal_obstacle_kept_out_except_crossing(self, default_cam):
        v0 = 128 / 3.0
        spec = scenes.PlaneSceneSpec(256, 128, (
            scenes.PlaneEntry(scenes.PlaneKind.HORIZONTAL_GROUND, scenes.Rect(50, 0, 128, 128)),
            scenes.PlaneEntry(scenes.PlaneKind.FRONTAL_OBSTACLE, scenes.Rect(0, 128, 128, 256),
                              distance_m=15.0),))
        disp, _ = scenes.synth_scene(spec, default_cam)
        prof = GroundProfile(alpha=B_OVER_H, beta=-B_OVER_H * v0, row_range=(50, 127))
        pred = classify_by_profile(disp, prof, tol=1.0)
        d_obs = 700.0 * 0.54 / 15.0
        crossing = np.abs(prof.predict(np.arange(128)) - d_obs) <= 1.0
        assert np.array_equal(pred[:, 128:], np.repeat(crossing[:, None], 128, axis=1))

    def test_lateral_slope_misclassified_off_center(self, default_cam):
        spec = scenes.lateral_slope_scene(256, 128, tilt_deg=12.0)
        disp, mask = scenes.synth_scene(spec, default_cam)
        prof = fit_ground_line(v_disparity(disp, bin_width=1.0))
        pred = classify_by_profile(disp, prof, tol=1.0)
        # residual grows as |u - u0| * slope * tan(psi); beyond the tolerance
        # band around some center column the single line must fail
        a, b, c = scenes.affine_coefficients(spec.entries[0], default_cam)
        half_width = 1.0 / b  # cols within tol of a perfectly centered line
        errors = (pred != mask)[mask.any(axis=1)]
        assert errors.mean() > 0.2
        center_cols = slice(int(128 - half_width / 2), int(128 + half_width / 2))
        assert (pred & mask)[:, center_cols].sum() > 0


def test_profile_predicts_all_rows():
    prof = GroundProfile(alpha=0.3, beta=-10.0, row_range=(40, 100))
    assert prof.predict(np.array([0, 50])) == pytest.approx([-10.0, 5.0])


def test_pgm_export(tmp_path):
    counts = np.zeros((4, 6), dtype=np.int64)
    counts[1, 2] = 10
    counts[3, 5] = 5
    from groundtex.baseline import VDisparityHistogram
    save_pgm(tmp_path / "h.pgm", VDisparityHistogram(counts, 1.0))
    raw = (tmp_path / "h.pgm").read_bytes()
    assert raw.startswith(b"P5\n6 4\n255\n")
    pixels = np.frombuffer(raw.split(b"255\n", 1)[1], dtype=np.uint8).reshape(4, 6)
    assert pixels[1, 2] == 255
    assert pixels[3, 5] == 128
