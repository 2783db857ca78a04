"""Pixel-mask metrics and multi-method comparison reports."""

from __future__ import annotations

import io
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    fp: int
    tn: int
    fn: int

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn

    def __add__(self, other: "ConfusionCounts") -> "ConfusionCounts":
        return ConfusionCounts(self.tp + other.tp, self.fp + other.fp,
                               self.tn + other.tn, self.fn + other.fn)


def confusion(pred: np.ndarray, gt: np.ndarray, ignore: np.ndarray | None = None) -> ConfusionCounts:
    """Count pixel agreement between boolean masks; ignored pixels drop out."""
    pred = np.asarray(pred, dtype=bool)
    gt = np.asarray(gt, dtype=bool)
    if pred.shape != gt.shape:
        raise ValueError(f"shape mismatch: pred {pred.shape} vs gt {gt.shape}")
    if ignore is not None:
        ignore = np.asarray(ignore, dtype=bool)
        if ignore.shape != gt.shape:
            raise ValueError(f"ignore mask shape {ignore.shape} does not match {gt.shape}")
        keep = ~ignore
        pred, gt = pred[keep], gt[keep]
    return ConfusionCounts(
        tp=int(np.count_nonzero(pred & gt)),
        fp=int(np.count_nonzero(pred & ~gt)),
        tn=int(np.count_nonzero(~pred & ~gt)),
        fn=int(np.count_nonzero(~pred & gt)),
    )


def metrics(c: ConfusionCounts) -> dict[str, float]:
    """accuracy / precision / recall / f1 with zero-denominator conventions:
    precision and recall are 0 when undefined, f1 is 0 when p + r = 0."""
    if c.total == 0:
        raise ValueError("empty confusion counts")
    precision = c.tp / (c.tp + c.fp) if (c.tp + c.fp) else 0.0
    recall = c.tp / (c.tp + c.fn) if (c.tp + c.fn) else 0.0
    f1 = 2 * precision * recall / (precision + recall) if (precision + recall) else 0.0
    return {
        "accuracy": (c.tp + c.tn) / c.total,
        "precision": precision,
        "recall": recall,
        "f1": f1,
    }


@dataclass(frozen=True)
class ReportRow:
    scene: str
    method: str
    counts: ConfusionCounts
    scores: dict[str, float]


@dataclass
class Report:
    rows: list[ReportRow]

    _COLUMNS = ("accuracy", "precision", "recall", "f1")

    def to_text(self) -> str:
        out = io.StringIO()
        width = max([len("scene")] + [len(r.scene) for r in self.rows])
        mwidth = max([len("method")] + [len(r.method) for r in self.rows])
        header = f"{'scene':<{width}}  {'method':<{mwidth}}  " + "  ".join(f"{c:>9}" for c in self._COLUMNS)
        out.write(header + "\n")
        out.write("-" * len(header) + "\n")
        for r in self.rows:
            vals = "  ".join(f"{r.scores[c]:>9.6f}" for c in self._COLUMNS)
            out.write(f"{r.scene:<{width}}  {r.method:<{mwidth}}  {vals}\n")
        return out.getvalue()

    def to_csv(self) -> str:
        lines = ["scene,method,accuracy,precision,recall,f1,tp,fp,tn,fn"]
        for r in self.rows:
            c = r.counts
            lines.append(
                f"{r.scene},{r.method},"
                + ",".join(f"{r.scores[k]:.6f}" for k in self._COLUMNS)
                + f",{c.tp},{c.fp},{c.tn},{c.fn}")
        return "\n".join(lines) + "\n"

    def score(self, method: str, column: str = "accuracy", scene: str = "ALL") -> float:
        for r in self.rows:
            if r.method == method and r.scene == scene:
                return r.scores[column]
        raise KeyError(f"no row for method={method!r} scene={scene!r}")


def compare_report(pred_masks: Mapping[str, Sequence[np.ndarray]],
                   gt_masks: Sequence[np.ndarray],
                   scene_names: Sequence[str] | None = None,
                   ignore_masks: Sequence[np.ndarray] | None = None) -> Report:
    """Per-scene rows for every method plus a micro-averaged ALL row.

    ``pred_masks`` maps method name -> one prediction per scene, aligned with
    ``gt_masks``. Aggregation sums confusion counts over scenes.
    """
    if not pred_masks:
        raise ValueError("no methods to compare")
    n = len(gt_masks)
    if n == 0:
        raise ValueError("no scenes to compare")
    if scene_names is None:
        scene_names = [f"scene{i:03d}" for i in range(n)]
    if len(scene_names) != n:
        raise ValueError("scene_names length does not match gt_masks")
    rows: list[ReportRow] = []
    for method, preds in pred_masks.items():
        if len(preds) != n:
            raise ValueError(f"method {method!r} has {len(preds)} predictions for {n} scenes")
        total = ConfusionCounts(0, 0, 0, 0)
        per_scene = []
        for i in range(n):
            ignore = ignore_masks[i] if ignore_masks is not None else None
            c = confusion(preds[i], gt_masks[i], ignore)
            total = total + c
            per_scene.append(ReportRow(scene_names[i], method, c, metrics(c)))
        rows.extend(per_scene)
        rows.append(ReportRow("ALL", method, total, metrics(total)))
    return Report(rows=rows)
