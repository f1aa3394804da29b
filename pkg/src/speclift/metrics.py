"""Detection and restoration quality measures."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateInputError, DimensionMismatchError
from .model import Frame, SpecularMask

PSNR_CAP = 99.0


def _confusion(pred: SpecularMask, gt: SpecularMask):
    if pred.shape != gt.shape:
        raise DimensionMismatchError(
            f"mask shapes differ: {pred.shape} vs {gt.shape}"
        )
    a, b = pred.bits, gt.bits
    tp = int((a & b).sum())
    fp = int((a & ~b).sum())
    fn = int((~a & b).sum())
    tn = int((~a & ~b).sum())
    return tp, fp, fn, tn


def dice(pred: SpecularMask, gt: SpecularMask) -> float:
    """2|A&B| / (|A|+|B|); two empty masks agree perfectly (1.0)."""
    tp, fp, fn, _ = _confusion(pred, gt)
    denom = 2 * tp + fp + fn
    return 1.0 if denom == 0 else 2.0 * tp / denom


def accuracy(pred: SpecularMask, gt: SpecularMask) -> float:
    tp, fp, fn, tn = _confusion(pred, gt)
    return (tp + tn) / (tp + fp + fn + tn)


def precision(pred: SpecularMask, gt: SpecularMask) -> float:
    tp, fp, _, _ = _confusion(pred, gt)
    return 1.0 if tp + fp == 0 else tp / (tp + fp)


def error_rate(pred: SpecularMask, gt: SpecularMask) -> float:
    """Misclassified pixels as a percentage of the frame."""
    tp, fp, fn, tn = _confusion(pred, gt)
    return 100.0 * (fp + fn) / (tp + fp + fn + tn)


def masked_psnr(result: Frame, clean: Frame, mask: SpecularMask) -> float:
    """PSNR over the masked pixels only (all channels), capped at 99 dB."""
    if result.shape != clean.shape or mask.shape != result.shape:
        raise DimensionMismatchError("frames and mask must share dimensions")
    if not mask.bits.any():
        raise DegenerateInputError("masked PSNR needs a nonempty mask")
    diff = (result.data - clean.data)[mask.bits]
    mse = float((diff * diff).mean())
    if mse <= 0.0:
        return PSNR_CAP
    return min(10.0 * np.log10(1.0 / mse), PSNR_CAP)


@dataclass
class MetricReport:
    """Per-frame and averaged evaluation numbers plus the config echo."""

    frames: list = field(default_factory=list)
    averages: dict = field(default_factory=dict)
    config: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"schema": 1, "frames": self.frames, "averages": self.averages,
                "config": self.config}


def detection_report(preds: list[SpecularMask], gts: list[SpecularMask],
                     config: dict | None = None) -> MetricReport:
    rows = []
    for w, (p, g) in enumerate(zip(preds, gts)):
        rows.append({
            "index": w,
            "dice": dice(p, g),
            "accuracy": accuracy(p, g),
            "precision": precision(p, g),
            "error_rate": error_rate(p, g),
        })
    keys = ("dice", "accuracy", "precision", "error_rate")
    averages = {k: float(np.mean([r[k] for r in rows])) for k in keys} if rows else {}
    return MetricReport(frames=rows, averages=averages, config=config or {})
