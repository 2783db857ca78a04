"""Classic V-disparity ground-plane baseline.

Valid disparities are histogrammed per image row; a ground plane shows up as a
slanted line d = alpha*v + beta, obstacles as vertical streaks. The line is
recovered with a deterministic Hough vote over (alpha, beta) followed by a
weighted least-squares refinement over the inlier cells, and pixels within a
tolerance of the fitted per-row disparity are classified as ground.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .imaging import DisparityMap

HOUGH_ALPHA_MAX = 1.0     # px per row; ground slopes B/h land well inside
HOUGH_ALPHA_STEPS = 200


class DegenerateFitError(ValueError):
    """The histogram does not constrain a two-parameter line."""


@dataclass
class VDisparityHistogram:
    counts: np.ndarray        # rows x bins
    bin_width: float

    @property
    def rows(self) -> int:
        return self.counts.shape[0]

    @property
    def bins(self) -> int:
        return self.counts.shape[1]

    def bin_centers(self) -> np.ndarray:
        return (np.arange(self.bins) + 0.5) * self.bin_width


@dataclass
class GroundProfile:
    """Fitted ground line d = alpha*v + beta and the rows that supported it."""

    alpha: float
    beta: float
    row_range: tuple[int, int]

    def predict(self, rows: np.ndarray) -> np.ndarray:
        return self.alpha * np.asarray(rows, dtype=np.float64) + self.beta


def v_disparity(disp: DisparityMap, bins: int | None = None, bin_width: float = 1.0) -> VDisparityHistogram:
    """Accumulate counts[row][floor(d / bin_width)] over valid pixels.

    Disparities beyond the last bin are clamped into it.
    """
    if bin_width <= 0:
        raise ValueError("bin_width must be > 0")
    valid = disp.valid
    if bins is None:
        top = float(disp.data[valid].max()) if valid.any() else 0.0
        bins = int(np.floor(top / bin_width)) + 1
    counts = np.zeros((disp.height, bins), dtype=np.int64)
    rows, cols = np.nonzero(valid)
    idx = np.floor(disp.data[rows, cols] / bin_width).astype(np.int64)
    np.clip(idx, 0, bins - 1, out=idx)
    np.add.at(counts, (rows, idx), 1)
    return VDisparityHistogram(counts=counts, bin_width=bin_width)


def fit_ground_line(hist: VDisparityHistogram) -> GroundProfile:
    """Recover the ground line from a V-disparity histogram.

    Hough vote: alpha in [0, 1] px/row over 200 steps, beta on a bin_width
    grid spanning every line through the populated cells; votes weighted by
    cell counts. The winning cell is refined by count-weighted least squares
    over the cells within one bin of the line.
    """
    rows_idx, bins_idx = np.nonzero(hist.counts)
    if rows_idx.size == 0:
        raise DegenerateFitError("empty histogram")
    if np.unique(rows_idx).size < 2:
        raise DegenerateFitError("line fit needs at least two populated rows")
    weights = hist.counts[rows_idx, bins_idx].astype(np.float64)
    d = (bins_idx + 0.5) * hist.bin_width
    v = rows_idx.astype(np.float64)

    alphas = np.linspace(0.0, HOUGH_ALPHA_MAX, HOUGH_ALPHA_STEPS)
    beta_min = float((d - HOUGH_ALPHA_MAX * v).min())
    beta_max = float(d.max())
    n_beta = int(np.floor((beta_max - beta_min) / hist.bin_width)) + 1
    acc = np.zeros((alphas.size, n_beta))
    for i, alpha in enumerate(alphas):
        b_idx = np.rint((d - alpha * v - beta_min) / hist.bin_width).astype(np.int64)
        np.clip(b_idx, 0, n_beta - 1, out=b_idx)
        acc[i] = np.bincount(b_idx, weights=weights, minlength=n_beta)
    best = np.argmax(acc)  # first maximum: smallest alpha index, then beta
    a0 = alphas[best // n_beta]
    b0 = beta_min + (best % n_beta) * hist.bin_width

    inlier = np.abs(d - (a0 * v + b0)) <= hist.bin_width
    vi, di, wi = v[inlier], d[inlier], weights[inlier]
    if np.unique(vi).size < 2:
        raise DegenerateFitError("inlier set does not span two rows")
    sw = np.sqrt(wi)
    design = np.stack([vi * sw, sw], axis=1)
    coef, *_ = np.linalg.lstsq(design, di * sw, rcond=None)
    return GroundProfile(alpha=float(coef[0]), beta=float(coef[1]),
                         row_range=(int(vi.min()), int(vi.max())))


def classify_by_profile(disp: DisparityMap, profile: GroundProfile, tol: float = 1.0) -> np.ndarray:
    """Ground iff the pixel is valid and within tol px of the fitted line."""
    expected = profile.predict(np.arange(disp.height))[:, None]
    with np.errstate(invalid="ignore"):
        close = np.abs(disp.data - expected) <= tol
    return close & disp.valid


def save_pgm(path: str | Path, hist: VDisparityHistogram) -> None:
    """8-bit binary PGM of the histogram, scaled to the peak count."""
    peak = max(1, int(hist.counts.max()))
    img = np.rint(hist.counts * (255.0 / peak)).astype(np.uint8)
    with open(path, "wb") as f:
        f.write(f"P5\n{img.shape[1]} {img.shape[0]}\n255\n".encode("ascii"))
        f.write(img.tobytes())
