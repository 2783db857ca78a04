"""Ground-plane and road detection from stereo disparity texture maps."""

__version__ = "0.1.0"

from .imaging import CameraModel, DisparityMap, load_disparity, save_disparity
from .descriptor import DescriptorParams, TextureMap, binarize, texture_map
from .scenes import PlaneEntry, PlaneKind, PlaneSceneSpec, Rect, synth_scene
from .superpixel import SlicParams, SuperpixelLabeling, slic_segment
from .pipeline import TrainConfig, detect_ground, segment_road, train

__all__ = [
    "CameraModel", "DisparityMap", "load_disparity", "save_disparity",
    "DescriptorParams", "TextureMap", "binarize", "texture_map",
    "PlaneEntry", "PlaneKind", "PlaneSceneSpec", "Rect", "synth_scene",
    "SlicParams", "SuperpixelLabeling", "slic_segment",
    "TrainConfig", "detect_ground", "segment_road", "train",
]
