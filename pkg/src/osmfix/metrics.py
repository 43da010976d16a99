"""Pixel- and object-level evaluation against ground-truth footprints."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .exceptions import NoOverlap
from .geometry import Footprint, Mask, Rect, mask_assd, mask_iou, rasterize


def _prf(tp: int, fp: int, fn: int) -> tuple[float, float, float]:
    if tp + fp + fn == 0:
        return 1.0, 1.0, 1.0
    p = tp / (tp + fp) if tp + fp else 0.0
    r = tp / (tp + fn) if tp + fn else 0.0
    f = 2 * p * r / (p + r) if p + r else 0.0
    return p, r, f


def _coverage(footprints: list[Footprint], extent: Rect) -> np.ndarray:
    canvas = np.zeros((extent.height, extent.width), dtype=bool)
    for fp in footprints:
        canvas |= rasterize(fp.polygon).render(extent)
    return canvas


def _extent(extent) -> Rect:
    if isinstance(extent, Rect):
        return extent
    w, h = extent
    return Rect(0, 0, int(w), int(h))


def pixel_counts(pred, truth, extent) -> tuple[int, int, int]:
    ext = _extent(extent)
    a, b = _coverage(pred, ext), _coverage(truth, ext)
    return int((a & b).sum()), int((a & ~b).sum()), int((~a & b).sum())


def pixel_prf(pred: list[Footprint], truth: list[Footprint], extent) -> tuple[float, float, float]:
    """Precision, recall and F1 of the union of predicted pixels.

    ``extent`` is ``(width, height)`` or a :class:`Rect`.
    """
    return _prf(*pixel_counts(pred, truth, extent))


def iou_matrix(pred_masks: list[Mask], truth_masks: list[Mask]) -> np.ndarray:
    out = np.zeros((len(pred_masks), len(truth_masks)))
    for i, a in enumerate(pred_masks):
        for j, b in enumerate(truth_masks):
            if not a.rect.intersect(b.rect).is_empty():
                out[i, j] = mask_iou(a, b)
    return out


def match_objects(ious: np.ndarray, iou_threshold: float = 0.5) -> list[tuple[int, int]]:
    """Greedy one-to-one matching by descending IoU (strictly above threshold).

    Ties go to the lower prediction index, then the lower truth index.
    """
    pi, ti = np.nonzero(ious > iou_threshold)
    order = sorted(zip(-ious[pi, ti], pi, ti))
    used_p, used_t, pairs = set(), set(), []
    for _, i, j in order:
        if i in used_p or j in used_t:
            continue
        used_p.add(i)
        used_t.add(j)
        pairs.append((int(i), int(j)))
    return pairs


def object_counts(pred, truth, iou_threshold: float = 0.5) -> tuple[int, int, int]:
    ious = iou_matrix([rasterize(f.polygon) for f in pred], [rasterize(f.polygon) for f in truth])
    tp = len(match_objects(ious, iou_threshold))
    return tp, len(pred) - tp, len(truth) - tp


def object_prf(pred: list[Footprint], truth: list[Footprint],
               iou_threshold: float = 0.5) -> tuple[float, float, float]:
    return _prf(*object_counts(pred, truth, iou_threshold))


def mean_assd(pred: list[Footprint], truth: list[Footprint]) -> float:
    """Mean ASSD of predictions that overlap some truth footprint.

    Each such prediction is paired with its highest-IoU truth footprint.
    """
    pm = [rasterize(f.polygon) for f in pred]
    tm = [rasterize(f.polygon) for f in truth]
    ious = iou_matrix(pm, tm)
    vals = []
    for i in range(len(pm)):
        if len(tm) and ious[i].max() > 0:
            vals.append(mask_assd(pm[i], tm[int(np.argmax(ious[i]))]))
    if not vals:
        raise NoOverlap("no prediction overlaps the ground truth")
    return float(np.mean(vals))


@dataclass
class EvalReport:
    pixel_precision: float
    pixel_recall: float
    pixel_f1: float
    object_precision: float
    object_recall: float
    object_f1: float
    mean_assd: float | None
    pixel_tp: int
    pixel_fp: int
    pixel_fn: int
    object_tp: int
    object_fp: int
    object_fn: int

    def to_text(self) -> str:
        lines = []
        for k, v in asdict(self).items():
            if v is None:
                v = "NA"
            elif isinstance(v, float):
                v = f"{v:.6f}"
            lines.append(f"{k} {v}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "EvalReport":
        kw = {}
        for line in text.splitlines():
            if not line.strip():
                continue
            k, v = line.split()
            if v == "NA":
                kw[k] = None
            elif k.endswith(("_tp", "_fp", "_fn")):
                kw[k] = int(v)
            else:
                kw[k] = float(v)
        return cls(**kw)


def evaluate(pred: list[Footprint], truth: list[Footprint], extent,
             iou_threshold: float = 0.5) -> EvalReport:
    ptp, pfp, pfn = pixel_counts(pred, truth, extent)
    otp, ofp, ofn = object_counts(pred, truth, iou_threshold)
    try:
        assd_value = mean_assd(pred, truth)
    except NoOverlap:
        assd_value = None
    return EvalReport(*_prf(ptp, pfp, pfn), *_prf(otp, ofp, ofn), assd_value,
                      ptp, pfp, pfn, otp, ofp, ofn)
