"""Segmentation quality metrics.

Dice = 2*TP / (2*TP + FP + FN) and IoU = |intersection| / |union|, computed
from exact integer pixel counts; the float result is the correctly rounded
value of that integer ratio.  A pair of empty masks scores 1.0 on both
metrics (perfect agreement), an empty prediction against a non-empty truth
scores 0.0.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import EmptyListError, ZeroBaselineError
from .masks import BinaryMask, require_same_shape


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    fp: int
    fn: int
    tn: int

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn


@dataclass(frozen=True)
class ScorePair:
    dice: float
    iou: float


def confusion(pred: BinaryMask, gt: BinaryMask) -> ConfusionCounts:
    """Exact pixel-level confusion counts between prediction and truth."""
    require_same_shape(pred, gt)
    p = pred.pixels
    g = gt.pixels
    tp = int(np.count_nonzero(p & g))
    fp = int(np.count_nonzero(p & ~g))
    fn = int(np.count_nonzero(~p & g))
    tn = p.size - tp - fp - fn
    return ConfusionCounts(tp=tp, fp=fp, fn=fn, tn=tn)


def dice(pred: BinaryMask, gt: BinaryMask) -> float:
    c = confusion(pred, gt)
    denom = 2 * c.tp + c.fp + c.fn
    if denom == 0:
        return 1.0
    return 2 * c.tp / denom


def iou(pred: BinaryMask, gt: BinaryMask) -> float:
    c = confusion(pred, gt)
    union = c.tp + c.fp + c.fn
    if union == 0:
        return 1.0
    return c.tp / union


def score_pair(pred: BinaryMask, gt: BinaryMask) -> ScorePair:
    """Dice and IoU from a single confusion pass."""
    c = confusion(pred, gt)
    union = c.tp + c.fp + c.fn
    if union == 0:
        return ScorePair(dice=1.0, iou=1.0)
    return ScorePair(dice=2 * c.tp / (union + c.tp), iou=c.tp / union)


def improvement_pct(baseline: float, variant: float) -> float:
    """Signed relative change, in percent: (variant - baseline) / baseline * 100.

    Report layers format this to 3 decimals.
    """
    if baseline <= 0:
        raise ZeroBaselineError(f"baseline must be positive, got {baseline}")
    return (variant - baseline) / baseline * 100.0


def five_number_summary(scores: list[float]) -> tuple[float, float, float, float, float]:
    """(min, q1, median, q3, max) with linearly interpolated quartiles.

    Quartile rule: for sorted values v_0..v_{n-1} the q-quantile sits at rank
    h = q * (n - 1) and interpolates linearly between v_floor(h) and
    v_floor(h)+1 (the "linear" / type-7 rule).
    """
    if not scores:
        raise EmptyListError("five_number_summary needs at least one value")
    v = np.sort(np.asarray(scores, dtype=float))
    qs = np.quantile(v, [0.0, 0.25, 0.5, 0.75, 1.0], method="linear")
    return tuple(float(q) for q in qs)  # type: ignore[return-value]
