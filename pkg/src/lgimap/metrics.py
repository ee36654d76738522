"""Shadow-mask and image metrics: confusion counts, IoU, BER and RMSE."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateClass, DegenerateDenominator, DegenerateRegion, ShapeMismatch
from .lgi import ShadowMask


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    fp: int
    fn: int
    tn: int

    def __post_init__(self):
        if min(self.tp, self.fp, self.fn, self.tn) < 0:
            raise ValueError("confusion counts must be nonnegative")

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn


def _values(m) -> np.ndarray:
    return np.asarray(m.values if isinstance(m, ShadowMask) else m, dtype=np.float64)


def confusion(pred, gt, threshold: float = 0.5) -> ConfusionCounts:
    """Binarize both masks (value >= threshold is positive) and count outcomes."""
    p, g = _values(pred), _values(gt)
    if p.shape != g.shape:
        raise ShapeMismatch(f"mask shapes differ: {p.shape} vs {g.shape}")
    pb = p >= threshold
    gb = g >= threshold
    return ConfusionCounts(
        tp=int(np.count_nonzero(pb & gb)),
        fp=int(np.count_nonzero(pb & ~gb)),
        fn=int(np.count_nonzero(~pb & gb)),
        tn=int(np.count_nonzero(~pb & ~gb)),
    )


def iou(c: ConfusionCounts) -> float:
    union = c.tp + c.fp + c.fn
    if union == 0:
        raise DegenerateDenominator("IoU undefined: both masks are empty")
    return c.tp / union


def ber(c: ConfusionCounts) -> float:
    """Balanced error rate 1 - (TPR + TNR) / 2."""
    if c.tp + c.fn == 0 or c.fp + c.tn == 0:
        raise DegenerateClass("BER needs both positive and negative ground-truth pixels")
    tpr = c.tp / (c.tp + c.fn)
    tnr = c.tn / (c.tn + c.fp)
    return 1.0 - 0.5 * (tpr + tnr)


def rmse(a, b, region=None) -> float:
    """Root mean squared difference over all pixel-channel slots inside ``region``.

    ``region`` is an (H, W) boolean mask; channels of (H, W, C) images are
    pooled together. Omit it to use the whole image.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ShapeMismatch(f"image shapes differ: {a.shape} vs {b.shape}")
    sq = (a - b) ** 2
    if region is None:
        return float(np.sqrt(np.mean(sq)))
    region = np.asarray(region, dtype=bool)
    if region.shape != a.shape[:2]:
        raise ShapeMismatch(f"region shape {region.shape} does not match image {a.shape[:2]}")
    if not region.any():
        raise DegenerateRegion("RMSE region is empty")
    return float(np.sqrt(np.mean(sq[region])))
