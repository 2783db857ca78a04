"""Disparity map and mask types plus file IO (KITTI 16-bit PNG, PFM, mask PNG)."""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

# KITTI-style fixed point: stored = disparity * 256, stored 0 marks invalid.
KITTI_SCALE = 256.0


class DisparityFormatError(ValueError):
    """Raised when a disparity file cannot be parsed in the declared format."""


@dataclass(frozen=True)
class CameraModel:
    """Rectified stereo geometry. Rows grow downward, disparity d = f*B/Z."""

    focal_length_px: float
    baseline_m: float
    camera_height_m: float
    horizon_row_v0: float
    principal_col_u0: float

    def __post_init__(self):
        if self.focal_length_px <= 0:
            raise ValueError("focal_length_px must be > 0")
        if self.baseline_m <= 0:
            raise ValueError("baseline_m must be > 0")
        if self.camera_height_m <= 0:
            raise ValueError("camera_height_m must be > 0")

    @staticmethod
    def default(width: int, height: int, focal_length_px: float = 700.0,
                baseline_m: float = 0.54, camera_height_m: float = 1.65) -> "CameraModel":
        """KITTI-like camera with the horizon at one third of the image height."""
        return CameraModel(
            focal_length_px=focal_length_px,
            baseline_m=baseline_m,
            camera_height_m=camera_height_m,
            horizon_row_v0=height / 3.0,
            principal_col_u0=width / 2.0,
        )


@dataclass
class DisparityMap:
    """H x W disparity grid in pixels; NaN marks pixels with no disparity."""

    data: np.ndarray = field(repr=False)

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.float32)
        if self.data.ndim != 2 or self.data.shape[0] < 1 or self.data.shape[1] < 1:
            raise ValueError(f"disparity data must be a non-empty 2-d grid, got shape {self.data.shape}")
        vals = self.data[np.isfinite(self.data)]
        if vals.size and vals.min() < 0:
            raise ValueError("valid disparity values must be non-negative")

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def valid(self) -> np.ndarray:
        """Boolean mask of pixels carrying a disparity value."""
        return np.isfinite(self.data)

    @staticmethod
    def all_invalid(height: int, width: int) -> "DisparityMap":
        return DisparityMap(np.full((height, width), np.nan, dtype=np.float32))


def load_disparity(path: str | Path, format: str = "kitti-png16") -> DisparityMap:
    """Load a disparity map from ``path``.

    kitti-png16: single-channel 16-bit PNG, disparity = stored/256, stored 0 invalid.
    pfm: grayscale portable float map, values <= 0 invalid.
    """
    path = Path(path)
    if format == "kitti-png16":
        return _load_kitti_png(path)
    if format == "pfm":
        raw = read_pfm(path)
        data = raw.astype(np.float32)
        data[data <= 0] = np.nan
        return DisparityMap(data)
    raise DisparityFormatError(f"unknown disparity format {format!r}")


def save_disparity(path: str | Path, disp: DisparityMap, format: str = "kitti-png16") -> None:
    """Write ``disp`` to ``path``. kitti-png16 quantizes to 1/256 px and clamps
    valid values to the representable [1/256, 255.996] range; pfm stores raw
    floats with invalid pixels written as 0."""
    path = Path(path)
    if format == "kitti-png16":
        stored = np.rint(disp.data * KITTI_SCALE)
        stored = np.clip(stored, 1, 65535)  # keep valid pixels off the 0 sentinel
        stored[~disp.valid] = 0
        Image.fromarray(stored.astype(np.uint16)).save(path, format="PNG")
    elif format == "pfm":
        data = disp.data.copy()
        data[~disp.valid] = 0.0
        write_pfm(path, data)
    else:
        raise DisparityFormatError(f"unknown disparity format {format!r}")


def _load_kitti_png(path: Path) -> DisparityMap:
    try:
        img = Image.open(path)
        img.load()
    except (OSError, SyntaxError) as exc:
        raise DisparityFormatError(f"cannot read PNG {path}: {exc}") from exc
    if img.mode not in ("I;16", "I;16B", "I"):
        raise DisparityFormatError(
            f"{path}: expected single-channel 16-bit PNG, got mode {img.mode!r}")
    stored = np.asarray(img, dtype=np.uint32)
    if stored.ndim != 2:
        raise DisparityFormatError(f"{path}: expected a single channel, got shape {stored.shape}")
    data = stored.astype(np.float32) / KITTI_SCALE
    data[stored == 0] = np.nan
    return DisparityMap(data)


def read_pfm(path: str | Path) -> np.ndarray:
    """Read a grayscale PFM file ("Pf"). Rows are stored bottom-up; the sign of
    the scale line encodes endianness."""
    with open(path, "rb") as f:
        header = f.readline().strip()
        if header == b"PF":
            raise DisparityFormatError(f"{path}: color PFM not supported, expected grayscale 'Pf'")
        if header != b"Pf":
            raise DisparityFormatError(f"{path}: not a PFM file (header {header!r})")
        dims = f.readline().split()
        if len(dims) != 2:
            raise DisparityFormatError(f"{path}: malformed PFM dimension line")
        try:
            width, height = int(dims[0]), int(dims[1])
            scale = float(f.readline().strip())
        except ValueError as exc:
            raise DisparityFormatError(f"{path}: malformed PFM header: {exc}") from exc
        if width <= 0 or height <= 0:
            raise DisparityFormatError(f"{path}: bad PFM dimensions {width}x{height}")
        count = width * height
        buf = f.read(count * 4)
        if len(buf) != count * 4:
            raise DisparityFormatError(f"{path}: truncated PFM payload")
        endian = "<" if scale < 0 else ">"
        flat = np.frombuffer(buf, dtype=endian + "f4")
        return np.flipud(flat.reshape(height, width)).astype(np.float32)


def write_pfm(path: str | Path, data: np.ndarray) -> None:
    """Write a grayscale little-endian PFM (scale -1.0)."""
    data = np.asarray(data, dtype=np.float32)
    if data.ndim != 2:
        raise ValueError("PFM writer expects a 2-d array")
    with open(path, "wb") as f:
        f.write(b"Pf\n")
        f.write(f"{data.shape[1]} {data.shape[0]}\n".encode("ascii"))
        f.write(b"-1.0\n")
        f.write(np.flipud(data).astype("<f4").tobytes())


def load_mask(path: str | Path) -> np.ndarray:
    """Load an 8-bit mask PNG; values > 127 are the positive class."""
    img = Image.open(path)
    if img.mode != "L":
        img = img.convert("L")
    return np.asarray(img) > 127


def save_mask(path: str | Path, mask: np.ndarray) -> None:
    """Write a boolean mask as 8-bit PNG (0 negative, 255 positive)."""
    mask = np.asarray(mask, dtype=bool)
    Image.fromarray(np.where(mask, 255, 0).astype(np.uint8)).save(path, format="PNG")


def load_rgb(path: str | Path) -> np.ndarray:
    """Load an image as H x W x 3 uint8."""
    img = Image.open(path)
    if img.mode != "RGB":
        img = img.convert("RGB")
    return np.asarray(img)


def save_rgb(path: str | Path, img: np.ndarray) -> None:
    img = np.asarray(img)
    if img.ndim != 3 or img.shape[2] != 3:
        raise ValueError("expected an H x W x 3 array")
    Image.fromarray(img.astype(np.uint8)).save(path, format="PNG")


def render_overlay(image: np.ndarray, mask: np.ndarray, color=(0, 200, 0), alpha: float = 0.5) -> np.ndarray:
    """Alpha-blend ``color`` over the masked pixels of an RGB image.

    out = round((1 - alpha) * in + alpha * color) on masked pixels; unmasked
    pixels pass through unchanged.
    """
    image = np.asarray(image)
    mask = np.asarray(mask, dtype=bool)
    if image.ndim != 3 or image.shape[2] != 3:
        raise ValueError("expected an H x W x 3 image")
    if mask.shape != image.shape[:2]:
        raise ValueError(f"mask shape {mask.shape} does not match image {image.shape[:2]}")
    if not 0.0 <= alpha <= 1.0:
        raise ValueError("alpha must lie in [0, 1]")
    out = image.astype(np.float64).copy()
    blend = (1.0 - alpha) * out[mask] + alpha * np.asarray(color, dtype=np.float64)
    out[mask] = blend
    return np.rint(out).clip(0, 255).astype(np.uint8)
