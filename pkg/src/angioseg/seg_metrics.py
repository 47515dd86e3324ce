"""Pixel-level segmentation metrics.

Overlap scores come from the confusion counts; HD95 and ASSD are computed on
4-neighbourhood boundary pixels by brute-force nearest-neighbour search.
Undefined values are ``None`` and are rendered as ``"n/a"`` in reports.
"""
from __future__ import annotations

import math
from dataclasses import astuple, dataclass

import numpy as np

METRICS = ("dice", "acc", "f1", "iou", "sens", "spec", "hd95", "assd")


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    fp: int
    tn: int
    fn: int

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn

    def __iter__(self):
        return iter(astuple(self))


def _binary_pair(pred, gt):
    pred, gt = np.asarray(pred), np.asarray(gt)
    if pred.shape != gt.shape:
        raise ValueError(f"prediction shape {pred.shape} != ground truth {gt.shape}")
    return pred.astype(bool), gt.astype(bool)


def confusion(pred, gt) -> ConfusionCounts:
    p, g = _binary_pair(pred, gt)
    tp = int(np.count_nonzero(p & g))
    fp = int(np.count_nonzero(p & ~g))
    fn = int(np.count_nonzero(~p & g))
    return ConfusionCounts(tp, fp, p.size - tp - fp - fn, fn)


def _div(a, b):
    return a / b if b else None


def overlap_metrics(c: ConfusionCounts) -> dict:
    """Dice, accuracy, F1, IoU, sensitivity and specificity.

    Two empty masks count as a perfect overlap (Dice = IoU = F1 = 1) while
    sensitivity is undefined.
    """
    tp, fp, tn, fn = c
    union = tp + fp + fn
    if union == 0:
        dice = iou = f1 = 1.0
    else:
        dice = 2 * tp / (2 * tp + fp + fn)
        iou = tp / union
        if tp == 0:
            f1 = 0.0
        else:
            prec, rec = tp / (tp + fp), tp / (tp + fn)
            f1 = 2 * prec * rec / (prec + rec)
    return {
        "dice": dice,
        "acc": _div(tp + tn, c.total),
        "f1": f1,
        "iou": iou,
        "sens": _div(tp, tp + fn),
        "spec": _div(tn, tn + fp),
    }


def boundary(mask) -> np.ndarray:
    """``(n, 2)`` foreground pixels with a background 4-neighbour; pixels on the
    image edge always qualify."""
    m = np.asarray(mask).astype(bool)
    p = np.pad(m, 1)
    interior = p[:-2, 1:-1] & p[2:, 1:-1] & p[1:-1, :-2] & p[1:-1, 2:]
    return np.argwhere(m & ~interior)


def directed_distances(a, b, block: int = 1024) -> np.ndarray:
    """Distance from each point of ``a`` to its nearest point in ``b``."""
    a = np.asarray(a, dtype=np.int64).reshape(-1, 2)
    b = np.asarray(b, dtype=np.int64).reshape(-1, 2)
    out = np.empty(len(a))
    for i in range(0, len(a), block):
        d = a[i : i + block, None, :] - b[None, :, :]
        out[i : i + block] = np.sqrt((d * d).sum(axis=-1).min(axis=1).astype(np.float64))
    return out


def percentile(values, q: float) -> float:
    """Linear interpolation between order statistics at rank ``(n-1) q / 100``.

    Written as ``lo + (hi - lo) * frac`` so the result is reproducible from
    the sorted values alone (np.percentile rearranges the lerp near frac=1).
    """
    v = np.sort(np.asarray(values, dtype=np.float64).ravel())
    pos = (len(v) - 1) * q / 100.0
    i = int(np.floor(pos))
    j = min(i + 1, len(v) - 1)
    return float(v[i] + (v[j] - v[i]) * (pos - i))


def hd95(a, b) -> float | None:
    """Larger of the two directed 95th percentiles (linear interpolation)."""
    if len(a) == 0 or len(b) == 0:
        return None
    return max(percentile(directed_distances(a, b), 95), percentile(directed_distances(b, a), 95))


def assd(a, b) -> float | None:
    if len(a) == 0 or len(b) == 0:
        return None
    da, db = directed_distances(a, b), directed_distances(b, a)
    return math.fsum(np.concatenate([da, db])) / (len(da) + len(db))


def segmentation_metrics(pred, gt) -> dict:
    p, g = _binary_pair(pred, gt)
    out = overlap_metrics(confusion(p, g))
    bp, bg = boundary(p), boundary(g)
    out["hd95"] = hd95(bp, bg)
    out["assd"] = assd(bp, bg)
    return out


def aggregate(per_image: list[dict], keys=METRICS) -> dict:
    """Mean, population std and count of each metric over images where it is defined."""
    out = {}
    for k in keys:
        vals = [m[k] for m in per_image if m.get(k) is not None]
        out[k] = {
            "mean": float(np.mean(vals)) if vals else None,
            "std": float(np.std(vals)) if vals else None,
            "n": len(vals),
        }
    return out


def fmt(v, digits: int = 4) -> str:
    return "n/a" if v is None else f"{v:.{digits}f}"
