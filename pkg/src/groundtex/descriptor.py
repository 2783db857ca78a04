"""Disparity texture maps: block-averaged vertical disparity gradients.

On ground planes disparity shrinks steadily from the bottom of the image to
the horizon, so its vertical gradient is a positive constant; on vertical
obstacles (frontal or lateral) disparity does not change with the row, so the
gradient sits at zero. Measuring that gradient on block means instead of raw
pixels trades a little border support for noise suppression.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from .imaging import DisparityMap, write_pfm

# scale used when flattening texture values into an 8-bit preview
TEXTURE_PNG_MAX = 1.0


@dataclass(frozen=True)
class DescriptorParams:
    block_size: int = 3
    min_valid_fraction: float = 0.5
    binarize_threshold: float = 0.1  # px per row; half the flattest expected ground slope

    def __post_init__(self):
        if self.block_size < 1 or self.block_size % 2 == 0:
            raise ValueError("block_size must be odd and >= 1")
        if not 0.0 <= self.min_valid_fraction <= 1.0:
            raise ValueError("min_valid_fraction must lie in [0, 1]")
        if self.binarize_threshold <= 0:
            raise ValueError("binarize_threshold must be > 0")


@dataclass
class TextureMap:
    """H x W vertical disparity gradient in px/row; NaN where undefined."""

    data: np.ndarray

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.float32)
        if self.data.ndim != 2:
            raise ValueError("texture data must be 2-d")

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def valid(self) -> np.ndarray:
        return np.isfinite(self.data)


def block_means(disp: DisparityMap, block_size: int, min_valid_fraction: float) -> np.ndarray:
    """Mean disparity over the b x b block centered at each pixel.

    NaN where the block sticks out of the image or where fewer than
    min_valid_fraction of its pixels carry a value. Computed in float64.
    """
    b = block_size
    r = b // 2
    data = disp.data.astype(np.float64)
    valid = np.isfinite(data)
    filled = np.where(valid, data, 0.0)
    if disp.height < b or disp.width < b:
        return np.full((disp.height, disp.width), np.nan)
    win_sum = np.lib.stride_tricks.sliding_window_view(filled, (b, b)).sum(axis=(-2, -1))
    win_cnt = np.lib.stride_tricks.sliding_window_view(valid, (b, b)).sum(axis=(-2, -1))
    out = np.full((disp.height, disp.width), np.nan)
    need = max(1.0, min_valid_fraction * b * b)
    ok = win_cnt >= need
    inner = np.full(win_sum.shape, np.nan)
    np.divide(win_sum, win_cnt, out=inner, where=ok)
    out[r:disp.height - r, r:disp.width - r] = inner
    return out


def texture_map(disp: DisparityMap, params: DescriptorParams | None = None) -> TextureMap:
    """Compute the disparity texture map.

    T(v, u) = (Db(v + b, u) - Db(v - b, u)) / (2 b), with Db the b x b block
    mean. The /(2 b) normalization makes outputs comparable across block
    sizes: on any affine disparity field T equals the field's row slope
    exactly, regardless of b. Invalid wherever either block is.
    """
    params = params or DescriptorParams()
    b = params.block_size
    means = block_means(disp, b, params.min_valid_fraction)
    h, w = means.shape
    out = np.full((h, w), np.nan)
    if h > 2 * b:
        out[b:h - b, :] = (means[2 * b:, :] - means[:h - 2 * b, :]) / (2.0 * b)
    return TextureMap(out.astype(np.float32))


def binarize(tex: TextureMap, threshold: float | None = None,
             params: DescriptorParams | None = None) -> np.ndarray:
    """Boolean map: True where the texture is valid and exceeds the threshold.

    Invalid pixels come out negative, which makes the map directly comparable
    with ground/non-ground masks.
    """
    if threshold is None:
        threshold = (params or DescriptorParams()).binarize_threshold
    with np.errstate(invalid="ignore"):
        return np.where(tex.valid, tex.data > threshold, False)


def save_texture_pfm(path: str | Path, tex: TextureMap) -> None:
    """Raw float export; invalid pixels are stored as NaN."""
    write_pfm(path, tex.data)


def load_texture_pfm(path: str | Path) -> TextureMap:
    from .imaging import read_pfm

    data = read_pfm(path)
    return TextureMap(data)


def save_texture_png(path: str | Path, tex: TextureMap, t_max: float = TEXTURE_PNG_MAX) -> None:
    """8-bit preview: clamp(T / t_max, 0, 1) * 255, invalid pixels black."""
    scaled = np.clip(np.nan_to_num(tex.data, nan=0.0) / t_max, 0.0, 1.0) * 255.0
    Image.fromarray(np.rint(scaled).astype(np.uint8)).save(path, format="PNG")


def save_binary_png(path: str | Path, binary: np.ndarray) -> None:
    from .imaging import save_mask

    save_mask(path, binary)
