"""Region similarity (J), contour accuracy (F), J&F and reference mask losses."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .errors import ResolutionMismatch
from .masks import BinaryMask, MaskTrack, boundary_pixels, dilate_disc

DEFAULT_TOLERANCE = 0.008
BCE_EPSILON = 1e-7


@dataclass(frozen=True)
class FrameScore:
    j: float
    f: float

    def __post_init__(self):
        if not (0.0 <= self.j <= 1.0 and 0.0 <= self.f <= 1.0):
            raise ValueError(f"scores out of range: j={self.j}, f={self.f}")


@dataclass(frozen=True)
class ExpressionScore:
    j_mean: float
    f_mean: float
    jf: float
    frame_count: int

    @classmethod
    def from_means(cls, j_mean: float, f_mean: float, frame_count: int) -> "ExpressionScore":
        return cls(j_mean, f_mean, jf_score(j_mean, f_mean), frame_count)

    def to_json(self) -> dict:
        return {"J": self.j_mean, "F": self.f_mean, "JF": self.jf, "frames": self.frame_count}


def _check(pred: BinaryMask, gt: BinaryMask) -> None:
    if pred.shape != gt.shape:
        raise ResolutionMismatch(f"prediction {pred.shape} vs ground truth {gt.shape}")


def jaccard(pred: BinaryMask, gt: BinaryMask) -> float:
    _check(pred, gt)
    inter = int(np.count_nonzero(pred.bits & gt.bits))
    union = int(np.count_nonzero(pred.bits | gt.bits))
    if union == 0:
        return 1.0
    return inter / union


def dice_coefficient(pred: BinaryMask, gt: BinaryMask) -> float:
    _check(pred, gt)
    inter = int(np.count_nonzero(pred.bits & gt.bits))
    total = int(np.count_nonzero(pred.bits)) + int(np.count_nonzero(gt.bits))
    if total == 0:
        return 1.0
    return 2 * inter / total


def tolerance_radius(height: int, width: int, tolerance_ratio: float) -> int:
    return math.ceil(tolerance_ratio * math.hypot(height, width))


def boundary_f(pred: BinaryMask, gt: BinaryMask, tolerance_ratio: float = DEFAULT_TOLERANCE) -> float:
    """Boundary F-measure with a matching radius relative to the image diagonal."""
    _check(pred, gt)
    if tolerance_ratio <= 0:
        raise ValueError("tolerance_ratio must be positive")
    b_pred = boundary_pixels(pred)
    b_gt = boundary_pixels(gt)
    n_pred, n_gt = b_pred.area, b_gt.area
    if n_pred == 0 and n_gt == 0:
        return 1.0
    if n_pred == 0 or n_gt == 0:
        return 0.0
    r = tolerance_radius(pred.height, pred.width, tolerance_ratio)
    gt_zone = dilate_disc(b_gt, r).bits
    pred_zone = dilate_disc(b_pred, r).bits
    precision = int(np.count_nonzero(b_pred.bits & gt_zone)) / n_pred
    recall = int(np.count_nonzero(b_gt.bits & pred_zone)) / n_gt
    if precision + recall == 0:
        return 0.0
    return 2 * precision * recall / (precision + recall)


def jf_score(j: float, f: float) -> float:
    return (j + f) / 2


def frame_score(pred: BinaryMask, gt: BinaryMask, tolerance_ratio: float = DEFAULT_TOLERANCE) -> FrameScore:
    return FrameScore(jaccard(pred, gt), boundary_f(pred, gt, tolerance_ratio))


def mean_fixed_order(values: Iterable[float]) -> float:
    """Mean with an exactly-rounded sum, independent of accumulation order."""
    values = list(values)
    if not values:
        return 0.0
    return math.fsum(values) / len(values)


def score_track(
    pred: MaskTrack,
    gt: MaskTrack,
    tolerance_ratio: float = DEFAULT_TOLERANCE,
    exclude_empty_gt: bool = False,
) -> ExpressionScore:
    """Average J and F over the frames of ``gt``.

    With ``exclude_empty_gt`` frames whose ground truth is empty are skipped;
    if that leaves nothing, every frame is used.
    """
    if pred.resolution != gt.resolution:
        raise ResolutionMismatch(f"prediction {pred.resolution} vs ground truth {gt.resolution}")
    frames = range(gt.frame_count)
    if exclude_empty_gt and gt.masks:
        frames = sorted(gt.masks)
    js, fs = [], []
    for idx in frames:
        p = pred.mask(idx) if idx < pred.frame_count else BinaryMask.empty(*gt.resolution)
        g = gt.mask(idx)
        js.append(jaccard(p, g))
        fs.append(boundary_f(p, g, tolerance_ratio))
    return ExpressionScore.from_means(mean_fixed_order(js), mean_fixed_order(fs), len(js))


def pixelwise_bce(pred_probs, gt: BinaryMask, eps: float = BCE_EPSILON) -> float:
    probs = np.asarray(pred_probs, dtype=np.float64)
    if probs.shape != gt.shape:
        raise ResolutionMismatch(f"probabilities {probs.shape} vs ground truth {gt.shape}")
    p = np.clip(probs, eps, 1.0 - eps)
    y = gt.bits
    loss = np.where(y, -np.log(p), -np.log1p(-p))
    return float(loss.mean())


def dice_loss(pred_probs, gt: BinaryMask, smooth: float = 1.0) -> float:
    """Soft dice loss, 1 - (2*sum(p*y) + s) / (sum(p) + sum(y) + s)."""
    probs = np.asarray(pred_probs, dtype=np.float64)
    if probs.shape != gt.shape:
        raise ResolutionMismatch(f"probabilities {probs.shape} vs ground truth {gt.shape}")
    y = gt.bits.astype(np.float64)
    return float(1.0 - (2.0 * (probs * y).sum() + smooth) / (probs.sum() + y.sum() + smooth))
