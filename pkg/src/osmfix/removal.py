"""Removal of footprints that have no support in the probability map."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .exceptions import UnimodalHistogram
from .geometry import Footprint, rasterize
from .raster import ProbMap, mean_prob
from .validation import check_footprints, check_prob_map

MAX_SMOOTHING_PASSES = 10_000
DEFAULT_MODE_GAP = 0.25
REMOVED_REASON = "low_evidence"


@dataclass
class EvidenceHistogram:
    counts: np.ndarray
    bin_count: int = 64

    @classmethod
    def from_scores(cls, scores, bin_count: int = 64) -> "EvidenceHistogram":
        scores = np.asarray(scores, dtype=np.float64)
        idx = np.minimum((scores * bin_count).astype(np.intp), bin_count - 1)
        counts = np.bincount(idx, minlength=bin_count).astype(np.float64)
        return cls(counts, bin_count)

    def bin_center(self, i: int) -> float:
        return (i + 0.5) / self.bin_count


def score_footprints(footprints: list[Footprint], prob_map: ProbMap) -> np.ndarray:
    """Mean probability under each footprint."""
    return np.array([mean_prob(rasterize(fp.polygon), prob_map) for fp in footprints])


def local_maxima(h: np.ndarray) -> list[int]:
    """Strict local maxima; a plateau counts once, at its left edge.

    Outside the histogram counts as lower than any bin.
    """
    out = []
    n = len(h)
    i = 0
    while i < n:
        j = i
        while j + 1 < n and h[j + 1] == h[i]:
            j += 1
        left_lower = i == 0 or h[i - 1] < h[i]
        right_lower = j == n - 1 or h[j + 1] < h[i]
        if left_lower and right_lower:
            out.append(i)
        i = j + 1
    return out


def smooth(h: np.ndarray) -> np.ndarray:
    """One pass of the 3-tap running mean with replicated edges."""
    p = np.concatenate([h[:1], h, h[-1:]])
    return (p[:-2] + p[1:-1] + p[2:]) / 3.0


def minimum_threshold(hist: EvidenceHistogram, max_passes: int = MAX_SMOOTHING_PASSES,
                      min_mode_gap: float = DEFAULT_MODE_GAP, return_smoothed: bool = False):
    """Threshold at the valley of the histogram once it has two modes.

    The histogram is smoothed until exactly two local maxima remain, at
    least ``min_mode_gap`` apart in score units (closer pairs are sub-clumps
    of one population and are smoothed further).  The threshold is the
    center of the lowest bin strictly between them.  When several bins
    share the lowest value (an empty gap between the modes), the one
    closest to the midpoint of the two maxima wins, leftmost first.
    """
    h = np.asarray(hist.counts, dtype=np.float64)
    if np.count_nonzero(h) < 2:
        raise UnimodalHistogram("histogram has fewer than two occupied bins")
    for _ in range(max_passes + 1):
        peaks = local_maxima(h)
        if len(peaks) == 2 and (peaks[1] - peaks[0]) / hist.bin_count >= min_mode_gap:
            lo, hi = peaks
            valley = h[lo + 1:hi]
            ties = lo + 1 + np.flatnonzero(valley == valley.min())
            mid = (lo + hi) / 2.0
            best = int(ties[np.argmin(np.abs(ties - mid))])
            t = hist.bin_center(best)
            return (t, h) if return_smoothed else t
        if len(peaks) < 2:
            raise UnimodalHistogram("histogram smoothed down to a single mode")
        h = smooth(h)
    raise UnimodalHistogram(f"no two-mode histogram within {max_passes} smoothing passes")


def remove_footprints(footprints: list[Footprint], prob_map: ProbMap, bin_count: int = 64,
                      min_mode_gap: float = DEFAULT_MODE_GAP):
    """Split footprints into ``(kept, removed, threshold)``.

    Footprints scoring strictly below the threshold are removed.  When the
    score histogram never becomes bimodal nothing is removed and the
    threshold is ``None``.
    """
    if not footprints:
        return [], [], None
    scores = score_footprints(footprints, prob_map)
    try:
        t = minimum_threshold(EvidenceHistogram.from_scores(scores, bin_count),
                              min_mode_gap=min_mode_gap)
    except UnimodalHistogram:
        return list(footprints), [], None
    kept = [fp for fp, s in zip(footprints, scores) if not s < t]
    removed = [fp for fp, s in zip(footprints, scores) if s < t]
    return kept, removed, t


def mark_removed(footprints: list[Footprint]) -> list[Footprint]:
    return [fp.replace(properties={**fp.properties, "removed_reason": REMOVED_REASON})
            for fp in footprints]


class EvidenceFilter(TransformerMixin, BaseEstimator):
    """Drop footprints whose mean probability falls below a data-driven cut.

    The cut is the minimum-method threshold of the histogram of per-footprint
    mean probabilities.
    """

    def __init__(self, bin_count=64, min_mode_gap=DEFAULT_MODE_GAP):
        self.bin_count = bin_count
        self.min_mode_gap = min_mode_gap

    def fit(self, X, y):
        footprints = check_footprints(X)
        prob_map = check_prob_map(y)
        self.scores_ = score_footprints(footprints, prob_map)
        try:
            self.threshold_ = minimum_threshold(
                EvidenceHistogram.from_scores(self.scores_, int(self.bin_count)),
                min_mode_gap=float(self.min_mode_gap))
        except UnimodalHistogram:
            self.threshold_ = None
        self.removed_ids_ = [] if self.threshold_ is None else [
            fp.id for fp, s in zip(footprints, self.scores_) if s < self.threshold_]
        return self

    def transform(self, X):
        check_is_fitted(self, "scores_")
        removed = set(self.removed_ids_)
        return [fp for fp in check_footprints(X) if fp.id not in removed]
