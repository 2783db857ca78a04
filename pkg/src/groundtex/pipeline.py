"""End-to-end orchestration: sample extraction, class balancing, the training
loop, and the two inference paths (superpixel ground detection and stride-4
road segmentation with a fully convolutional net)."""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import container as _c
from . import nn
from .descriptor import DescriptorParams, TextureMap, texture_map
from .imaging import DisparityMap, load_disparity, load_mask, load_rgb
from .models import (FUSION_PATCH, GROUND_PATCH, OUTPUT_STRIDE, fcn_convert,
                     normalize_rgb, normalize_texture)
from .superpixel import SlicParams, slic_segment, region_patch_centers, project_region_classes

SAMPLES_MAGIC = b"GTXS"


class TrainingDivergedError(RuntimeError):
    """Loss became non-finite during training."""


@dataclass
class GroundSample:
    patch: np.ndarray                 # (1, P, P) normalized texture values
    label: int                        # 1 = ground, 0 = non-ground
    provenance: tuple[int, int]       # (image index, region id)


@dataclass
class RoadSample:
    rgb_patch: np.ndarray             # (3, P, P) in [0, 1]
    texture_patch: np.ndarray         # (1, P, P) clamped texture
    label: int                        # 1 = road, 0 = non-road
    center: tuple[int, int]           # top-left of the 4x4 region, original coords


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 0.01
    momentum: float = 0.9
    batch_size: int = 64
    epochs: int = 30
    seed: int = 0
    validation_fraction: float = 0.1

    def __post_init__(self):
        if self.lr < 0:
            raise ValueError("lr must be >= 0")
        if not 0.0 < self.validation_fraction < 1.0:
            raise ValueError("validation_fraction must lie in (0, 1)")
        if self.batch_size < 1 or self.epochs < 1:
            raise ValueError("batch_size and epochs must be >= 1")


@dataclass
class EpochStats:
    epoch: int
    train_loss: float
    train_acc: float
    val_loss: float
    val_acc: float


@dataclass
class TrainingSet:
    """Collated tensors ready for mini-batching. ``inputs`` is one array for
    single-input nets or a pair of arrays for the fusion net."""

    inputs: np.ndarray | tuple[np.ndarray, np.ndarray]
    labels: np.ndarray

    def __len__(self) -> int:
        return len(self.labels)

    def take(self, idx: np.ndarray) -> tuple:
        if isinstance(self.inputs, tuple):
            return (self.inputs[0][idx], self.inputs[1][idx]), self.labels[idx]
        return self.inputs[idx], self.labels[idx]


# ---------------------------------------------------------------------------
# Patch geometry helpers
# ---------------------------------------------------------------------------

def clamp_patch_origin(center: tuple[int, int], patch: int, height: int, width: int) -> tuple[int, int]:
    """Top-left corner of a patch centered at ``center``, shifted (never
    shrunk) to stay inside the image."""
    if height < patch or width < patch:
        raise ValueError(f"image {height}x{width} smaller than patch {patch}")
    r0 = min(max(center[0] - patch // 2, 0), height - patch)
    c0 = min(max(center[1] - patch // 2, 0), width - patch)
    return r0, c0


def road_grid_shape(height: int, width: int, stride: int = OUTPUT_STRIDE) -> tuple[int, int]:
    """Number of stride x stride regions needed to cover the image."""
    return math.ceil(height / stride), math.ceil(width / stride)


def reflect_pad_for_grid(arr: np.ndarray, patch: int, stride: int = OUTPUT_STRIDE) -> np.ndarray:
    """Reflection-pad spatial dims so every stride x stride region, including
    ragged bottom/right remainders, has a full patch around it.

    Pads (patch - stride) // 2 on top/left and the same plus the remainder to
    the next stride multiple on bottom/right.
    """
    pad = (patch - stride) // 2
    h, w = arr.shape[-2], arr.shape[-1]
    gh, gw = road_grid_shape(h, w, stride)
    pad_b, pad_r = pad + gh * stride - h, pad + gw * stride - w
    if max(pad, pad_b) >= h or max(pad, pad_r) >= w:
        raise ValueError(f"image {h}x{w} too small to reflect-pad by up to {max(pad_b, pad_r)}")
    pads = [(0, 0)] * (arr.ndim - 2) + [(pad, pad_b), (pad, pad_r)]
    return np.pad(arr, pads, mode="reflect")


# ---------------------------------------------------------------------------
# Sample extraction
# ---------------------------------------------------------------------------

def region_majority_labels(labels: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Per-region class by strict pixel majority; ties go to the negative class."""
    n = int(labels.max()) + 1
    total = np.bincount(labels.ravel(), minlength=n)
    pos = np.bincount(labels.ravel(), weights=mask.ravel().astype(np.float64), minlength=n)
    return (2 * pos > total).astype(np.int64)


def extract_ground_samples(images: Sequence[tuple[np.ndarray, DisparityMap, np.ndarray]],
                           slic_params: SlicParams | None = None,
                           descriptor_params: DescriptorParams | None = None,
                           patch: int = GROUND_PATCH,
                           seed: int = 0) -> list[GroundSample]:
    """One candidate per superpixel (texture patch at the clamped centroid,
    label by region majority), then the majority class subsampled to parity.
    """
    slic_params = slic_params or SlicParams()
    descriptor_params = descriptor_params or DescriptorParams()
    candidates: list[GroundSample] = []
    for img_idx, (rgb, disp, mask) in enumerate(images):
        if mask.shape != (disp.height, disp.width):
            raise ValueError(f"image {img_idx}: mask shape {mask.shape} does not match disparity")
        tex = texture_map(disp, descriptor_params)
        labeling = slic_segment(rgb, slic_params)
        region_labels = region_majority_labels(labeling.labels, mask)
        for rid, center in region_patch_centers(labeling):
            r0, c0 = clamp_patch_origin(center, patch, disp.height, disp.width)
            raw = tex.data[r0:r0 + patch, c0:c0 + patch]
            candidates.append(GroundSample(
                patch=normalize_texture(raw)[None],
                label=int(region_labels[rid]),
                provenance=(img_idx, rid)))
    return balance_samples(candidates, seed=seed)


def balance_samples(samples: list, seed: int = 0) -> list:
    """Uniformly subsample the majority class down to the minority count."""
    labels = np.array([s.label for s in samples])
    pos = np.flatnonzero(labels == 1)
    neg = np.flatnonzero(labels == 0)
    if len(pos) == 0 or len(neg) == 0:
        return list(samples)
    rng = np.random.default_rng(seed)
    if len(pos) > len(neg):
        pos = np.sort(rng.choice(pos, size=len(neg), replace=False))
    elif len(neg) > len(pos):
        neg = np.sort(rng.choice(neg, size=len(pos), replace=False))
    keep = np.sort(np.concatenate([pos, neg]))
    return [samples[i] for i in keep]


def extract_road_samples(images: Sequence[tuple[np.ndarray, TextureMap, np.ndarray]],
                         patch: int = FUSION_PATCH,
                         stride: int = OUTPUT_STRIDE,
                         seed: int = 0,
                         max_samples: int | None = None) -> list[RoadSample]:
    """One sample per stride x stride region whose mask is single-class; the
    patch around the region comes from reflection-padded inputs, so border
    regions are included. Mixed regions are skipped."""
    out: list[RoadSample] = []
    for rgb, tex, mask in images:
        h, w = mask.shape
        rgb_p = reflect_pad_for_grid(normalize_rgb(rgb), patch, stride)
        tex_p = reflect_pad_for_grid(normalize_texture(tex.data)[None], patch, stride)
        gh, gw = road_grid_shape(h, w, stride)
        for i in range(gh):
            for j in range(gw):
                cell = mask[i * stride:min((i + 1) * stride, h),
                            j * stride:min((j + 1) * stride, w)]
                if cell.all():
                    label = 1
                elif not cell.any():
                    label = 0
                else:
                    continue
                out.append(RoadSample(
                    rgb_patch=rgb_p[:, i * stride:i * stride + patch, j * stride:j * stride + patch].copy(),
                    texture_patch=tex_p[:, i * stride:i * stride + patch, j * stride:j * stride + patch].copy(),
                    label=label,
                    center=(i * stride, j * stride)))
    if max_samples is not None and len(out) > max_samples:
        rng = np.random.default_rng(seed)
        keep = np.sort(rng.choice(len(out), size=max_samples, replace=False))
        out = [out[i] for i in keep]
    return out


def to_training_set(samples: Sequence[GroundSample] | Sequence[RoadSample]) -> TrainingSet:
    if not samples:
        raise ValueError("no samples")
    labels = np.array([s.label for s in samples], dtype=np.int64)
    first = samples[0]
    if isinstance(first, GroundSample):
        return TrainingSet(np.stack([s.patch for s in samples]).astype(np.float32), labels)
    rgb = np.stack([s.rgb_patch for s in samples]).astype(np.float32)
    tex = np.stack([s.texture_patch for s in samples]).astype(np.float32)
    return TrainingSet((rgb, tex), labels)


# ---------------------------------------------------------------------------
# Training
# ---------------------------------------------------------------------------

def _eval_set(net: nn.Network, data: TrainingSet, batch_size: int) -> tuple[float, float]:
    total_loss = 0.0
    correct = 0
    n = len(data)
    for start in range(0, n, batch_size):
        xb, yb = data.take(np.arange(start, min(start + batch_size, n)))
        logits = net.forward(xb)
        loss, _ = nn.softmax_xent(logits, yb)
        total_loss += loss * len(yb)
        correct += int((np.argmax(logits, axis=1) == yb).sum())
    return total_loss / n, correct / n


def train(net: nn.Network, data: TrainingSet, cfg: TrainConfig | None = None,
          log: Callable[[str], None] | None = None) -> tuple[nn.Network, list[EpochStats]]:
    """Seeded mini-batch SGD with momentum over a held-out validation split.

    Deterministic for a fixed seed and data order. Epoch losses are weighted
    per sample, so they are invariant to the batch partition. Raises
    TrainingDivergedError the moment a batch loss goes non-finite.
    """
    cfg = cfg or TrainConfig()
    n = len(data)
    if n < 2:
        raise ValueError("need at least two samples to split train/val")
    rng = np.random.default_rng(cfg.seed)
    perm = rng.permutation(n)
    n_val = max(1, int(round(cfg.validation_fraction * n)))
    val_idx, train_idx = perm[:n_val], perm[n_val:]
    if len(train_idx) == 0:
        raise ValueError("validation split leaves no training samples")
    opt = nn.SGD(net, lr=cfg.lr, momentum=cfg.momentum)
    history: list[EpochStats] = []
    for epoch in range(cfg.epochs):
        order = rng.permutation(train_idx)
        epoch_loss = 0.0
        correct = 0
        for start in range(0, len(order), cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            xb, yb = data.take(idx)
            loss, grads, logits = nn.backward(net, xb, yb, return_logits=True)
            if not np.isfinite(loss):
                raise TrainingDivergedError(f"non-finite loss at epoch {epoch}")
            correct += int((np.argmax(logits, axis=1) == yb).sum())
            epoch_loss += loss * len(idx)
            opt.step(grads)
        val_loss, val_acc = _eval_set(net, TrainingSet(*data.take(val_idx)), cfg.batch_size)
        stats = EpochStats(epoch=epoch,
                           train_loss=epoch_loss / len(order),
                           train_acc=correct / len(order),
                           val_loss=val_loss, val_acc=val_acc)
        history.append(stats)
        if log:
            log(f"epoch {epoch:3d}  train {stats.train_loss:.4f}/{stats.train_acc:.3f}"
                f"  val {stats.val_loss:.4f}/{stats.val_acc:.3f}")
    return net, history


# ---------------------------------------------------------------------------
# Inference
# ---------------------------------------------------------------------------

def detect_ground(rgb: np.ndarray, disp: DisparityMap, net: nn.Network,
                  slic_params: SlicParams | None = None,
                  descriptor_params: DescriptorParams | None = None,
                  patch: int = GROUND_PATCH) -> np.ndarray:
    """texture -> SLIC -> centroid patch -> CNN -> per-region class projection.

    Regions whose patch holds no valid texture at all are non-ground outright.
    """
    slic_params = slic_params or SlicParams()
    descriptor_params = descriptor_params or DescriptorParams()
    tex = texture_map(disp, descriptor_params)
    labeling = slic_segment(rgb, slic_params)
    centers = region_patch_centers(labeling)
    classes = np.zeros(labeling.region_count, dtype=np.int64)
    patches = []
    live = []
    for rid, center in centers:
        r0, c0 = clamp_patch_origin(center, patch, disp.height, disp.width)
        raw = tex.data[r0:r0 + patch, c0:c0 + patch]
        if not np.isfinite(raw).any():
            continue
        patches.append(normalize_texture(raw)[None])
        live.append(rid)
    if patches:
        logits = net.forward(np.stack(patches).astype(np.float32))
        classes[np.array(live)] = np.argmax(logits, axis=1)
    return project_region_classes(labeling, classes).astype(bool)


def segment_road(rgb: np.ndarray, tex: TextureMap, net: nn.Network,
                 patch: int = FUSION_PATCH, stride: int = OUTPUT_STRIDE) -> np.ndarray:
    """One padded FCN pass labels every stride x stride region of the image."""
    h, w = rgb.shape[:2]
    if tex.data.shape != (h, w):
        raise ValueError("texture dimensions do not match the image")
    fcn = net if net.fully_convolutional else fcn_convert(net)
    rgb_p = reflect_pad_for_grid(normalize_rgb(rgb), patch, stride)
    tex_p = reflect_pad_for_grid(normalize_texture(tex.data)[None], patch, stride)
    logits = fcn.forward((rgb_p[None], tex_p[None]))[0]
    gh, gw = road_grid_shape(h, w, stride)
    if logits.shape[1:] != (gh, gw):
        raise ValueError(f"FCN grid {logits.shape[1:]} does not match expected {(gh, gw)}")
    grid = np.argmax(logits, axis=0).astype(bool)
    return np.repeat(np.repeat(grid, stride, axis=0), stride, axis=1)[:h, :w]


# ---------------------------------------------------------------------------
# Dataset manifests and sample caches
# ---------------------------------------------------------------------------

def read_manifest(path: str | Path) -> list[tuple[Path, Path, Path]]:
    """Plain-text lines '<rgb path> <disparity path> <mask path>', resolved
    relative to the manifest's directory."""
    path = Path(path)
    base = path.parent
    out = []
    for lineno, line in enumerate(path.read_text().splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) != 3:
            raise ValueError(f"{path}:{lineno}: expected 3 paths, got {len(parts)}")
        out.append(tuple((base / p).resolve() for p in parts))
    return out


def load_manifest_images(path: str | Path) -> list[tuple[np.ndarray, DisparityMap, np.ndarray]]:
    return [(load_rgb(r), load_disparity(d), load_mask(m)) for r, d, m in read_manifest(path)]


def save_ground_samples(path: str | Path, samples: Sequence[GroundSample]) -> None:
    with open(path, "wb") as f:
        f.write(SAMPLES_MAGIC)
        _c.write_u32(f, 1)
        _c.write_str(f, "samples_ground_v1")
        _c.write_array(f, np.stack([s.patch for s in samples]).astype(np.float32))
        _c.write_array(f, np.array([s.label for s in samples], dtype=np.int32))
        _c.write_array(f, np.array([s.provenance for s in samples], dtype=np.int32))


def load_ground_samples(path: str | Path) -> list[GroundSample]:
    with open(path, "rb") as f:
        _c.expect_magic(f, SAMPLES_MAGIC)
        _c.read_u32(f)
        tag = _c.read_str(f)
        if tag != "samples_ground_v1":
            raise _c.ContainerError(f"not a ground sample cache: {tag!r}")
        patches = _c.read_array(f)
        labels = _c.read_array(f)
        prov = _c.read_array(f)
    return [GroundSample(patch=patches[i], label=int(labels[i]),
                         provenance=(int(prov[i, 0]), int(prov[i, 1])))
            for i in range(len(labels))]


def save_road_samples(path: str | Path, samples: Sequence[RoadSample]) -> None:
    with open(path, "wb") as f:
        f.write(SAMPLES_MAGIC)
        _c.write_u32(f, 1)
        _c.write_str(f, "samples_road_v1")
        _c.write_array(f, np.stack([s.rgb_patch for s in samples]).astype(np.float32))
        _c.write_array(f, np.stack([s.texture_patch for s in samples]).astype(np.float32))
        _c.write_array(f, np.array([s.label for s in samples], dtype=np.int32))
        _c.write_array(f, np.array([s.center for s in samples], dtype=np.int32))


def load_road_samples(path: str | Path) -> list[RoadSample]:
    with open(path, "rb") as f:
        _c.expect_magic(f, SAMPLES_MAGIC)
        _c.read_u32(f)
        tag = _c.read_str(f)
        if tag != "samples_road_v1":
            raise _c.ContainerError(f"not a road sample cache: {tag!r}")
        rgb = _c.read_array(f)
        tex = _c.read_array(f)
        labels = _c.read_array(f)
        centers = _c.read_array(f)
    return [RoadSample(rgb_patch=rgb[i], texture_patch=tex[i], label=int(labels[i]),
                       center=(int(centers[i, 0]), int(centers[i, 1])))
            for i in range(len(labels))]


def write_metrics_csv(path: str | Path, history: Sequence[EpochStats]) -> None:
    lines = ["epoch,train_loss,train_acc,val_loss,val_acc"]
    for s in history:
        lines.append(f"{s.epoch},{s.train_loss:.6f},{s.train_acc:.6f},{s.val_loss:.6f},{s.val_acc:.6f}")
    Path(path).write_text("\n".join(lines) + "\n")
