"""SLIC superpixels: localized k-means over CIELAB color + pixel position.

Deterministic throughout: grid seeding (no randomness), fixed center order on
distance ties, fixed-order accumulation in the update step, and a connectivity
pass that merges undersized fragments into their largest adjacent region.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image


@dataclass(frozen=True)
class SlicParams:
    region_count: int = 600          # tuned for KITTI-sized (1242x375) frames
    compactness: float = 10.0
    iterations: int = 10
    connectivity_min_fraction: float = 0.25

    def __post_init__(self):
        if self.region_count < 1:
            raise ValueError("region_count must be >= 1")
        if self.compactness <= 0:
            raise ValueError("compactness must be > 0")
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        if not 0.0 <= self.connectivity_min_fraction <= 1.0:
            raise ValueError("connectivity_min_fraction must lie in [0, 1]")


@dataclass(frozen=True)
class RegionInfo:
    pixel_count: int
    centroid: tuple[float, float]    # (row, col), means of member pixels
    mean_color: tuple[float, float, float]


@dataclass
class SuperpixelLabeling:
    """Dense region ids (0..R-1) for every pixel plus per-region summaries."""

    labels: np.ndarray
    regions: list[RegionInfo]

    @property
    def region_count(self) -> int:
        return len(self.regions)

    @property
    def shape(self) -> tuple[int, int]:
        return self.labels.shape


def rgb_to_lab(rgb: np.ndarray) -> np.ndarray:
    """sRGB (uint8 or float in [0,1]) to CIELAB under the D65 white point."""
    rgb = np.asarray(rgb, dtype=np.float64)
    if rgb.max() > 1.0:
        rgb = rgb / 255.0
    lin = np.where(rgb <= 0.04045, rgb / 12.92, ((rgb + 0.055) / 1.055) ** 2.4)
    m = np.array([[0.4124564, 0.3575761, 0.1804375],
                  [0.2126729, 0.7151522, 0.0721750],
                  [0.0193339, 0.1191920, 0.9503041]])
    xyz = lin @ m.T
    xyz /= np.array([0.95047, 1.0, 1.08883])
    eps = (6.0 / 29.0) ** 3
    f = np.where(xyz > eps, np.cbrt(xyz), xyz / (3.0 * (6.0 / 29.0) ** 2) + 4.0 / 29.0)
    lab = np.empty_like(xyz)
    lab[..., 0] = 116.0 * f[..., 1] - 16.0
    lab[..., 1] = 500.0 * (f[..., 0] - f[..., 1])
    lab[..., 2] = 200.0 * (f[..., 1] - f[..., 2])
    return lab


def _seed_grid(height: int, width: int, k: int) -> np.ndarray:
    """Exactly k seed pixel positions on a near-square grid, row-major.

    When k has no exact near-square grid, the last row is left-packed with the
    remaining seeds; the k-means iterations redistribute the slack.
    """
    n_cols = max(1, math.ceil(math.sqrt(k * width / height)))
    n_rows = max(1, math.ceil(k / n_cols))
    n_cols = max(1, math.ceil(k / n_rows))
    seeds = np.empty((k, 2), dtype=np.int64)
    for s in range(k):
        i, j = divmod(s, n_cols)
        seeds[s, 0] = min(height - 1, int((i + 0.5) * height / n_rows))
        seeds[s, 1] = min(width - 1, int((j + 0.5) * width / n_cols))
    return seeds


def _perturb_seeds(seeds: np.ndarray, lab: np.ndarray) -> np.ndarray:
    """Move each seed to a strictly lower-gradient pixel in its 3x3
    neighborhood if one exists (row-major scan, first win). Gradient per the
    SLIC reference method; a seed on flat gradient stays put."""
    h, w = lab.shape[:2]
    grad = np.full((h, w), np.inf)
    if h > 2 and w > 2:
        gx = lab[1:-1, 2:] - lab[1:-1, :-2]
        gy = lab[2:, 1:-1] - lab[:-2, 1:-1]
        grad[1:-1, 1:-1] = (gx ** 2).sum(axis=-1) + (gy ** 2).sum(axis=-1)
    out = seeds.copy()
    for s, (r, c) in enumerate(seeds):
        r = int(np.clip(r, 1, max(1, h - 2)))
        c = int(np.clip(c, 1, max(1, w - 2)))
        best = grad[r, c]
        best_rc = (r, c)
        for nr in range(r - 1, r + 2):
            for nc in range(c - 1, c + 2):
                if grad[nr, nc] < best:
                    best = grad[nr, nc]
                    best_rc = (nr, nc)
        out[s] = best_rc
    return out


def slic_segment(img: np.ndarray, params: SlicParams | None = None) -> SuperpixelLabeling:
    """Segment an RGB image into superpixels.

    Localized k-means with squared distance d_lab^2 + (m/S)^2 * d_xy^2, each
    center searching a 2S x 2S window, followed by connectivity enforcement:
    4-connected fragments smaller than connectivity_min_fraction * S^2 are
    absorbed into their largest adjacent region. Region ids are renumbered
    densely in row-major order of first occurrence.
    """
    params = params or SlicParams()
    img = np.asarray(img)
    if img.ndim != 3 or img.shape[2] != 3:
        raise ValueError("expected an H x W x 3 RGB image")
    h, w = img.shape[:2]
    k = params.region_count
    if k > h * w:
        raise ValueError(f"region_count {k} exceeds pixel count {h * w}")

    lab = rgb_to_lab(img)
    step = math.sqrt(h * w / k)
    half = max(1, int(round(step)))
    ratio2 = (params.compactness / step) ** 2

    seeds = _perturb_seeds(_seed_grid(h, w, k), lab)
    centers = np.empty((k, 5))  # L, a, b, row, col
    centers[:, :3] = lab[seeds[:, 0], seeds[:, 1]]
    centers[:, 3:] = seeds.astype(np.float64)

    rows = np.arange(h, dtype=np.float64)
    cols = np.arange(w, dtype=np.float64)
    labels = np.full((h, w), -1, dtype=np.int32)
    feats = np.concatenate([lab, np.broadcast_to(rows[:, None, None], (h, w, 1)),
                            np.broadcast_to(cols[None, :, None], (h, w, 1))], axis=2)

    for _ in range(params.iterations):
        dist = np.full((h, w), np.inf)
        labels.fill(-1)
        for c_idx in range(k):
            cr, cc = centers[c_idx, 3], centers[c_idx, 4]
            r0 = max(0, int(round(cr)) - half)
            r1 = min(h, int(round(cr)) + half + 1)
            c0 = max(0, int(round(cc)) - half)
            c1 = min(w, int(round(cc)) + half + 1)
            if r0 >= r1 or c0 >= c1:
                continue
            patch = lab[r0:r1, c0:c1]
            d_lab = ((patch - centers[c_idx, :3]) ** 2).sum(axis=-1)
            d_xy = (rows[r0:r1, None] - cr) ** 2 + (cols[None, c0:c1] - cc) ** 2
            d = d_lab + ratio2 * d_xy
            win = dist[r0:r1, c0:c1]
            better = d < win
            win[better] = d[better]
            labels[r0:r1, c0:c1][better] = c_idx
        assigned = labels >= 0
        flat = labels[assigned]
        counts = np.bincount(flat, minlength=k).astype(np.float64)
        nonzero = counts > 0
        for f in range(5):
            sums = np.bincount(flat, weights=feats[..., f][assigned], minlength=k)
            centers[nonzero, f] = sums[nonzero] / counts[nonzero]

    if (labels < 0).any():
        _assign_orphans(labels, lab, centers, ratio2)

    comp = _connected_components(labels)
    min_size = params.connectivity_min_fraction * step * step
    comp = _absorb_small_components(comp, min_size)
    labels = _dense_relabel(comp)
    return SuperpixelLabeling(labels=labels, regions=_region_stats(labels, img))


def _assign_orphans(labels: np.ndarray, lab: np.ndarray, centers: np.ndarray, ratio2: float) -> None:
    """Pixels left outside every search window go to their globally nearest center."""
    h, w = labels.shape
    orphan = np.flatnonzero(labels.ravel() < 0)
    rr, cc = np.unravel_index(orphan, (h, w))
    feats_lab = lab.reshape(-1, 3)[orphan]
    d = ((feats_lab[:, None, :] - centers[None, :, :3]) ** 2).sum(axis=-1)
    d += ratio2 * ((rr[:, None] - centers[None, :, 3]) ** 2 + (cc[:, None] - centers[None, :, 4]) ** 2)
    labels.ravel()[orphan] = np.argmin(d, axis=1)


def _connected_components(labels: np.ndarray) -> np.ndarray:
    """4-connected components of equal labels, via min-id propagation with
    pointer jumping. Component id = smallest flat pixel index it contains."""
    h, w = labels.shape
    ids = np.arange(h * w, dtype=np.int64).reshape(h, w)
    while True:
        prev = ids.copy()
        same = labels[1:, :] == labels[:-1, :]
        np.minimum(ids[1:, :], np.where(same, ids[:-1, :], ids[1:, :]), out=ids[1:, :])
        np.minimum(ids[:-1, :], np.where(same, ids[1:, :], ids[:-1, :]), out=ids[:-1, :])
        same = labels[:, 1:] == labels[:, :-1]
        np.minimum(ids[:, 1:], np.where(same, ids[:, :-1], ids[:, 1:]), out=ids[:, 1:])
        np.minimum(ids[:, :-1], np.where(same, ids[:, 1:], ids[:, :-1]), out=ids[:, :-1])
        flat = ids.ravel()
        flat = flat[flat]  # pointer jump: hop to the parent's parent
        ids = flat[flat].reshape(h, w)
        if np.array_equal(ids, prev):
            break
    return ids


def _absorb_small_components(comp: np.ndarray, min_size: float) -> np.ndarray:
    """Merge components below min_size into their largest adjacent component
    (ties to the smaller id) until none remain or only one is left.

    Each pass computes merge targets from the pass-start state and applies
    them through a union-find, so mutual merges between two small neighbors
    collapse into one set; any set still undersized is handled next pass.
    """
    h, w = comp.shape
    comp = comp.copy()
    while True:
        uniq, inv = np.unique(comp, return_inverse=True)
        inv = inv.reshape(h, w)
        sizes = np.bincount(inv.ravel())
        n = len(uniq)
        if n <= 1:
            break
        small = np.flatnonzero(sizes < min_size)
        if small.size == 0:
            break

        pairs = []
        a, b = inv[:, :-1], inv[:, 1:]
        d = a != b
        pairs.append(np.stack([a[d], b[d]], axis=1))
        a, b = inv[:-1, :], inv[1:, :]
        d = a != b
        pairs.append(np.stack([a[d], b[d]], axis=1))
        edges = np.concatenate(pairs)
        edges = np.unique(np.concatenate([edges, edges[:, ::-1]]), axis=0)

        parent = np.arange(n)

        def find(x: int) -> int:
            while parent[x] != x:
                parent[x] = parent[parent[x]]
                x = parent[x]
            return x

        merged = False
        for s in small[np.lexsort((small, sizes[small]))]:
            neigh = edges[edges[:, 0] == s, 1]
            if neigh.size == 0:
                continue
            best = neigh[np.lexsort((neigh, -sizes[neigh]))][0]
            rs, rb = find(int(s)), find(int(best))
            if rs != rb:
                parent[rs] = rb
                merged = True
        if not merged:
            break
        roots = np.array([find(i) for i in range(n)])
        comp = uniq[roots][inv]
    return comp


def _dense_relabel(comp: np.ndarray) -> np.ndarray:
    uniq, first, inv = np.unique(comp.ravel(), return_index=True, return_inverse=True)
    order = np.argsort(first, kind="stable")
    remap = np.empty(len(uniq), dtype=np.int32)
    remap[order] = np.arange(len(uniq), dtype=np.int32)
    return remap[inv].reshape(comp.shape)


def _region_stats(labels: np.ndarray, img: np.ndarray) -> list[RegionInfo]:
    h, w = labels.shape
    n = int(labels.max()) + 1
    flat = labels.ravel()
    counts = np.bincount(flat, minlength=n)
    rr = np.repeat(np.arange(h, dtype=np.float64), w)
    cc = np.tile(np.arange(w, dtype=np.float64), h)
    sum_r = np.bincount(flat, weights=rr, minlength=n)
    sum_c = np.bincount(flat, weights=cc, minlength=n)
    chans = img.reshape(-1, 3).astype(np.float64)
    sums = [np.bincount(flat, weights=chans[:, i], minlength=n) for i in range(3)]
    return [RegionInfo(pixel_count=int(counts[i]),
                       centroid=(sum_r[i] / counts[i], sum_c[i] / counts[i]),
                       mean_color=tuple(s[i] / counts[i] for s in sums))
            for i in range(n)]


def region_patch_centers(labeling: SuperpixelLabeling) -> list[tuple[int, tuple[int, int]]]:
    """(region id, centroid rounded half-up to integer pixel) per region."""
    out = []
    for rid, region in enumerate(labeling.regions):
        r = int(math.floor(region.centroid[0] + 0.5))
        c = int(math.floor(region.centroid[1] + 0.5))
        out.append((rid, (r, c)))
    return out


def project_region_classes(labeling: SuperpixelLabeling, region_classes) -> np.ndarray:
    """Broadcast per-region classes onto pixels; every region id must be covered."""
    n = labeling.region_count
    if isinstance(region_classes, dict):
        missing = [i for i in range(n) if i not in region_classes]
        if missing:
            raise ValueError(f"missing classes for regions {missing[:8]}")
        table = np.array([region_classes[i] for i in range(n)])
    else:
        table = np.asarray(region_classes)
        if table.shape[0] != n:
            raise ValueError(f"expected {n} region classes, got {table.shape[0]}")
    return table[labeling.labels]


def save_labels_png(path: str | Path, labeling: SuperpixelLabeling) -> None:
    if labeling.region_count > 65536:
        raise ValueError("too many regions for a 16-bit label image")
    Image.fromarray(labeling.labels.astype(np.uint16)).save(path, format="PNG")


def boundary_mask(labels: np.ndarray) -> np.ndarray:
    """Pixels whose right or bottom 4-neighbor carries a different id."""
    b = np.zeros(labels.shape, dtype=bool)
    b[:, :-1] |= labels[:, :-1] != labels[:, 1:]
    b[:-1, :] |= labels[:-1, :] != labels[1:, :]
    return b


def save_boundary_overlay(path: str | Path, img: np.ndarray, labeling: SuperpixelLabeling,
                          color=(255, 40, 40)) -> None:
    from .imaging import render_overlay, save_rgb

    save_rgb(path, render_overlay(img, boundary_mask(labeling.labels), color=color, alpha=1.0))
