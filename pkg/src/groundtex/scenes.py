"""Analytic synthetic scenes: planes with closed-form disparity plus ground truth.

Every supported plane kind produces a disparity field that is affine in the
pixel coordinates, d(v, u) = a*(v - v0) + b*(u - u0) + c, so generated scenes
have exact, hand-checkable gradients:

  horizontal ground        a = B/h                 b = 0            c = 0
  lateral-slope ground     a = B*cos(psi)/h        b = B*sin(psi)/h c = 0
  longitudinal-slope       a = B*cos(phi)/h        b = 0            c = f*B*sin(phi)/h
  frontal obstacle         a = 0                   b = 0            c = f*B/Z
  left/right lateral wall  a = 0                   b = B/X0         c = -f*B*tan(yaw)/X0

Rows grow downward; a positive lateral tilt raises the ground on the right of
the image, a positive longitudinal slope is uphill ahead.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from .imaging import CameraModel, DisparityMap


class PlaneKind(enum.Enum):
    HORIZONTAL_GROUND = "horizontal-ground"
    LATERAL_SLOPE_GROUND = "lateral-slope-ground"
    LONGITUDINAL_SLOPE_GROUND = "longitudinal-slope-ground"
    FRONTAL_OBSTACLE = "frontal-obstacle"
    LEFT_LATERAL_OBSTACLE = "left-lateral-obstacle"
    RIGHT_LATERAL_OBSTACLE = "right-lateral-obstacle"

    @property
    def is_ground(self) -> bool:
        return self in (PlaneKind.HORIZONTAL_GROUND,
                        PlaneKind.LATERAL_SLOPE_GROUND,
                        PlaneKind.LONGITUDINAL_SLOPE_GROUND)


@dataclass(frozen=True)
class Rect:
    """Half-open pixel rectangle: rows [top, bottom), cols [left, right)."""

    top: int
    left: int
    bottom: int
    right: int

    def __post_init__(self):
        if self.bottom <= self.top or self.right <= self.left:
            raise ValueError(f"empty footprint {self}")

    def inside(self, height: int, width: int) -> bool:
        return 0 <= self.top and 0 <= self.left and self.bottom <= height and self.right <= width

    def shrink(self, margin: int) -> "Rect":
        return Rect(self.top + margin, self.left + margin,
                    self.bottom - margin, self.right - margin)

    @property
    def area(self) -> int:
        return (self.bottom - self.top) * (self.right - self.left)


@dataclass(frozen=True)
class PlaneEntry:
    """One plane of a scene: a kind, its geometry, and its image footprint.

    slope_deg is the lateral/longitudinal tilt for ground kinds, distance_m is
    the depth of a frontal obstacle or the |lateral offset| of a wall, and
    yaw_deg lets walls recede at an angle instead of running parallel to the
    driving direction.
    """

    kind: PlaneKind
    footprint: Rect
    slope_deg: float = 0.0
    distance_m: float = 0.0
    yaw_deg: float = 0.0

    def __post_init__(self):
        if self.kind in (PlaneKind.FRONTAL_OBSTACLE,
                         PlaneKind.LEFT_LATERAL_OBSTACLE,
                         PlaneKind.RIGHT_LATERAL_OBSTACLE) and self.distance_m <= 0:
            raise ValueError(f"{self.kind.value} needs distance_m > 0")
        if abs(self.slope_deg) >= 89.0 or abs(self.yaw_deg) >= 89.0:
            raise ValueError("angles must stay below 89 degrees")


@dataclass(frozen=True)
class PlaneSceneSpec:
    """Ordered plane list; later entries overwrite earlier ones where they overlap."""

    width: int
    height: int
    entries: tuple[PlaneEntry, ...] = field(default_factory=tuple)

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise ValueError("scene dimensions must be positive")
        object.__setattr__(self, "entries", tuple(self.entries))
        for entry in self.entries:
            if not entry.footprint.inside(self.height, self.width):
                raise ValueError(f"footprint {entry.footprint} outside {self.height}x{self.width} image")


def affine_coefficients(entry: PlaneEntry, cam: CameraModel) -> tuple[float, float, float]:
    """Coefficients (a, b, c) of d(v, u) = a*(v - v0) + b*(u - u0) + c."""
    f = cam.focal_length_px
    B = cam.baseline_m
    h = cam.camera_height_m
    kind = entry.kind
    if kind is PlaneKind.HORIZONTAL_GROUND:
        return B / h, 0.0, 0.0
    if kind is PlaneKind.LATERAL_SLOPE_GROUND:
        psi = math.radians(entry.slope_deg)
        return B * math.cos(psi) / h, B * math.sin(psi) / h, 0.0
    if kind is PlaneKind.LONGITUDINAL_SLOPE_GROUND:
        phi = math.radians(entry.slope_deg)
        return B * math.cos(phi) / h, 0.0, f * B * math.sin(phi) / h
    if kind is PlaneKind.FRONTAL_OBSTACLE:
        return 0.0, 0.0, f * B / entry.distance_m
    if kind is PlaneKind.LEFT_LATERAL_OBSTACLE:
        x0 = -entry.distance_m
    else:
        x0 = entry.distance_m
    gamma = math.radians(entry.yaw_deg)
    return 0.0, B / x0, -f * B * math.tan(gamma) / x0


def synth_scene(spec: PlaneSceneSpec, cam: CameraModel) -> tuple[DisparityMap, np.ndarray]:
    """Render a scene spec into a disparity map and a ground/non-ground mask."""
    disp, mask, _ = synth_scene_full(spec, cam)
    return disp, mask


def synth_scene_full(spec: PlaneSceneSpec, cam: CameraModel) -> tuple[DisparityMap, np.ndarray, np.ndarray]:
    """Like :func:`synth_scene` but also returns the per-pixel plane index map
    (-1 where no plane was painted), which tests and sample extraction use to
    find single-plane interiors."""
    h, w = spec.height, spec.width
    data = np.full((h, w), np.nan, dtype=np.float64)
    mask = np.zeros((h, w), dtype=bool)
    ids = np.full((h, w), -1, dtype=np.int32)
    for idx, entry in enumerate(spec.entries):
        a, b, c = affine_coefficients(entry, cam)
        r = entry.footprint
        v = np.arange(r.top, r.bottom, dtype=np.float64)[:, None]
        u = np.arange(r.left, r.right, dtype=np.float64)[None, :]
        d = a * (v - cam.horizon_row_v0) + b * (u - cam.principal_col_u0) + c
        if d.min() < 0:
            raise ValueError(
                f"plane {idx} ({entry.kind.value}) yields negative disparity "
                f"({d.min():.3f} px) inside its footprint")
        data[r.top:r.bottom, r.left:r.right] = d
        mask[r.top:r.bottom, r.left:r.right] = entry.kind.is_ground
        ids[r.top:r.bottom, r.left:r.right] = idx
    return DisparityMap(data.astype(np.float32)), mask, ids


def interior_mask(spec: PlaneSceneSpec, ids: np.ndarray, index: int, margin: int) -> np.ndarray:
    """Pixels of plane ``index`` at least ``margin`` px from its footprint edge
    and still owned by it after overpainting."""
    rect = spec.entries[index].footprint.shrink(margin)
    out = np.zeros_like(ids, dtype=bool)
    out[rect.top:rect.bottom, rect.left:rect.right] = True
    return out & (ids == index)


# ---------------------------------------------------------------------------
# Canonical and randomized scene layouts
# ---------------------------------------------------------------------------

_PALETTE = np.array([
    (96, 128, 60),    # ground: grass green
    (142, 122, 80),   # ground: dirt
    (110, 110, 96),   # ground: asphalt
    (150, 64, 52),    # obstacle: brick
    (104, 96, 112),   # obstacle: slate
    (88, 76, 64),     # obstacle: timber
    (132, 84, 96),
    (72, 104, 112),
], dtype=np.float64)

_SKY = np.array((168, 186, 200), dtype=np.float64)


def six_plane_scene(width: int = 256, height: int = 128,
                    lateral_deg: float = 10.0, longitudinal_deg: float = 8.0,
                    frontal_z_m: float = 15.0, wall_x_m: float = 4.0) -> PlaneSceneSpec:
    """Composite demo scene holding all six plane kinds.

    The lower band is split into horizontal / lateral-slope / longitudinal-slope
    ground thirds; the upper band into a left wall, a frontal obstacle, and a
    right wall. Footprints tile the image, so every pixel is covered.
    """
    v0 = height / 3.0
    third = width // 3
    # lateral tilt shifts d by tan(psi)*(u-u0); start far enough below the
    # horizon that the whole lateral band stays at positive disparity
    lateral_span = math.tan(math.radians(abs(lateral_deg))) * (width / 2.0)
    ground_top = int(math.ceil(v0 + lateral_span + 6.0))
    if ground_top >= height - 16:
        raise ValueError("image too small for the requested lateral slope")
    entries = (
        PlaneEntry(PlaneKind.HORIZONTAL_GROUND, Rect(ground_top, 0, height, third)),
        PlaneEntry(PlaneKind.LATERAL_SLOPE_GROUND, Rect(ground_top, third, height, 2 * third),
                   slope_deg=lateral_deg),
        PlaneEntry(PlaneKind.LONGITUDINAL_SLOPE_GROUND, Rect(ground_top, 2 * third, height, width),
                   slope_deg=longitudinal_deg),
        PlaneEntry(PlaneKind.LEFT_LATERAL_OBSTACLE, Rect(0, 0, ground_top, third),
                   distance_m=wall_x_m),
        PlaneEntry(PlaneKind.FRONTAL_OBSTACLE, Rect(0, third, ground_top, 2 * third),
                   distance_m=frontal_z_m),
        PlaneEntry(PlaneKind.RIGHT_LATERAL_OBSTACLE, Rect(0, 2 * third, ground_top, width),
                   distance_m=wall_x_m),
    )
    return PlaneSceneSpec(width=width, height=height, entries=entries)


def flat_ground_scene(width: int = 256, height: int = 128) -> PlaneSceneSpec:
    """Horizontal ground below the horizon, empty sky above."""
    v0 = height / 3.0
    top = int(math.ceil(v0 + 6.0))
    return PlaneSceneSpec(width, height, (
        PlaneEntry(PlaneKind.HORIZONTAL_GROUND, Rect(top, 0, height, width)),))


def lateral_slope_scene(width: int = 256, height: int = 128, tilt_deg: float = 12.0) -> PlaneSceneSpec:
    """Full-width laterally tilted ground, empty sky above."""
    v0 = height / 3.0
    span = math.tan(math.radians(abs(tilt_deg))) * (width / 2.0)
    top = int(math.ceil(v0 + span + 4.0))
    if top >= height - 12:
        raise ValueError("image too small for the requested tilt")
    return PlaneSceneSpec(width, height, (
        PlaneEntry(PlaneKind.LATERAL_SLOPE_GROUND, Rect(top, 0, height, width), slope_deg=tilt_deg),))


def random_scene(seed: int, width: int = 256, height: int = 128) -> PlaneSceneSpec:
    """Seeded random layout: one ground plane plus 1-3 obstacles, sky left empty.

    Draws the ground kind and slope, then paints obstacles over it (painter's
    order), mimicking objects standing on the ground.
    """
    rng = np.random.default_rng(seed)
    v0 = height / 3.0
    u0 = width / 2.0
    entries: list[PlaneEntry] = []

    kind = [PlaneKind.HORIZONTAL_GROUND, PlaneKind.LATERAL_SLOPE_GROUND,
            PlaneKind.LONGITUDINAL_SLOPE_GROUND][rng.integers(0, 3)]
    if kind is PlaneKind.LATERAL_SLOPE_GROUND:
        slope = rng.uniform(4.0, 10.0) * (1 if rng.random() < 0.5 else -1)
        margin = math.tan(math.radians(abs(slope))) * (width / 2.0) + 4.0
    elif kind is PlaneKind.LONGITUDINAL_SLOPE_GROUND:
        # downhill pushes the zero-disparity row far down; keep it shallow
        slope = rng.uniform(2.0, 8.0) if rng.random() < 0.7 else -rng.uniform(1.0, 2.5)
        margin = 700.0 * max(0.0, math.tan(math.radians(-min(slope, 0.0)))) + 6.0
    else:
        slope = 0.0
        margin = 6.0
    ground_top = int(math.ceil(v0 + margin))
    if ground_top > height - 24:
        ground_top = height - 24
        slope = 0.0
        kind = PlaneKind.HORIZONTAL_GROUND
    entries.append(PlaneEntry(kind, Rect(ground_top, 0, height, width), slope_deg=slope))

    for _ in range(int(rng.integers(1, 4))):
        pick = rng.random()
        if pick < 0.5:
            bw = int(rng.integers(width // 6, width // 3))
            bh = int(rng.integers(height // 4, height // 2))
            left = int(rng.integers(0, width - bw))
            top = int(rng.integers(0, max(1, ground_top - bh // 3)))
            entries.append(PlaneEntry(
                PlaneKind.FRONTAL_OBSTACLE, Rect(top, left, min(top + bh, height), left + bw),
                distance_m=float(rng.uniform(8.0, 30.0))))
        elif pick < 0.75:
            bw = int(rng.integers(width // 8, width // 4))
            right = int(rng.integers(bw, max(bw + 1, int(u0) - 16)))
            entries.append(PlaneEntry(
                PlaneKind.LEFT_LATERAL_OBSTACLE,
                Rect(0, right - bw, int(rng.integers(ground_top, height - 8)), right),
                distance_m=float(rng.uniform(3.0, 8.0))))
        else:
            bw = int(rng.integers(width // 8, width // 4))
            lo = min(int(u0) + 16, width - bw - 1)
            left = int(rng.integers(lo, width - bw))
            entries.append(PlaneEntry(
                PlaneKind.RIGHT_LATERAL_OBSTACLE,
                Rect(0, left, int(rng.integers(ground_top, height - 8)), left + bw),
                distance_m=float(rng.uniform(3.0, 8.0))))
    return PlaneSceneSpec(width, height, tuple(entries))


def render_rgb(spec: PlaneSceneSpec, seed: int = 0) -> np.ndarray:
    """Deterministic RGB rendering of a scene: one palette color per plane,
    light speckle, sky gradient where nothing is painted. Gives the superpixel
    stage color boundaries that coincide with the plane footprints."""
    h, w = spec.height, spec.width
    rng = np.random.default_rng(seed)
    img = np.empty((h, w, 3), dtype=np.float64)
    grad = np.linspace(0.0, 18.0, h)[:, None, None]
    img[:] = _SKY[None, None, :] - grad
    for idx, entry in enumerate(spec.entries):
        r = entry.footprint
        base = _PALETTE[idx % len(_PALETTE)]
        tile = base[None, None, :] + rng.normal(0.0, 4.0, size=(r.bottom - r.top, r.right - r.left, 1))
        img[r.top:r.bottom, r.left:r.right] = tile
    return np.rint(img).clip(0, 255).astype(np.uint8)
