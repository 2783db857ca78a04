import numpy as np
import pytest

from groundtex import imaging, scenes


@pytest.fixture(scope="session")
def default_cam():
    return imaging.CameraModel.default(256, 128)


@pytest.fixture(scope="session")
def six_plane():
    """Canonical six-plane scene: (spec, cam, disparity, mask, plane ids)."""
    spec = scenes.six_plane_scene()
    cam = imaging.CameraModel.default(spec.width, spec.height)
    disp, mask, ids = scenes.synth_scene_full(spec, cam)
    return spec, cam, disp, mask, ids


def make_scene_frame(seed: int, width: int = 256, height: int = 128):
    """One randomized synthetic frame: (rgb, disparity, mask)."""
    spec = scenes.random_scene(seed, width, height)
    cam = imaging.CameraModel.default(width, height)
    disp, mask = scenes.synth_scene(spec, cam)
    rgb = scenes.render_rgb(spec, seed=seed)
    return rgb, disp, mask


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(1234)
