"""Adding missing buildings from a fixed catalog of shape priors."""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import ndimage, signal
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .exceptions import FormatError
from .geometry import Footprint, Mask, Point, Polygon, Rect, mask_iou, rasterize, shift
from .raster import ProbMap, mean_prob
from .validation import check_footprints, check_prob_map, check_unit_interval

DGRD_MAGIC = b"DGRD"

# base shapes in meters
CIRCLE_RADIUS = 3.3
SQUARE_SIDE = 4.8
RECT_SIDES = (6.0, 3.6)
CIRCLE_VERTICES = 32
# above this many cells, candidates are gated on an FFT mean plane first
PREFILTER_MIN = 256

BASES = ("circle", "square", "rect0", "rect45", "rect90", "rect135")
SCALES = (1.0, math.sqrt(2.0), 2.0)

POSITIVE, NEGATIVE, IGNORE = 1, 0, -1


@dataclass(frozen=True, eq=False)
class ShapeSpec:
    id: int
    base: str
    scale: float
    polygon_at_origin: Polygon

    @property
    def area(self) -> float:
        return self.polygon_at_origin.area


@dataclass(frozen=True)
class Candidate:
    shape_id: int
    center: Point
    detection_score: float
    avg_prob: float

    @property
    def total(self) -> float:
        return self.avg_prob + self.detection_score


@dataclass(eq=False)
class DetectionGrid:
    """Per-shape detection scores sampled every ``stride`` pixels.

    ``scores[s, iy, ix]`` scores shape ``s`` centered at pixel corner
    ``(ix * stride, iy * stride)``.
    """

    scores: np.ndarray
    stride: int = 4

    def __post_init__(self):
        s = np.asarray(self.scores, dtype=np.float32)
        if s.ndim != 3:
            raise FormatError("detection grid must have shape (shapes, rows, cols)")
        self.scores = s

    @property
    def shape_count(self) -> int:
        return self.scores.shape[0]

    @property
    def grid_w(self) -> int:
        return self.scores.shape[2]

    @property
    def grid_h(self) -> int:
        return self.scores.shape[1]

    def __eq__(self, other):
        if not isinstance(other, DetectionGrid):
            return NotImplemented
        return self.stride == other.stride and np.array_equal(self.scores, other.scores)


def grid_size(width: int, height: int, stride: int = 4) -> tuple[int, int]:
    """``(grid_w, grid_h)`` of the candidate lattice covering a raster."""
    return -(-width // stride), -(-height // stride)


def _rotated(coords: np.ndarray, degrees: float) -> np.ndarray:
    a = math.radians(degrees)
    rot = np.array([[math.cos(a), -math.sin(a)], [math.sin(a), math.cos(a)]])
    return coords @ rot.T


def build_catalog(resolution: float) -> list[ShapeSpec]:
    """The 18 prior shapes (6 bases x 3 area scales) in pixel units."""
    if not resolution > 0:
        raise ValueError("resolution must be positive")
    r = CIRCLE_RADIUS / resolution
    half = SQUARE_SIDE / resolution / 2.0
    rw, rh = RECT_SIDES[0] / resolution / 2.0, RECT_SIDES[1] / resolution / 2.0
    ang = 2.0 * np.pi * np.arange(CIRCLE_VERTICES) / CIRCLE_VERTICES
    circle = np.column_stack([np.cos(ang), np.sin(ang)]) * r
    square = np.array([[-half, -half], [half, -half], [half, half], [-half, half]])
    rect = np.array([[-rw, -rh], [rw, -rh], [rw, rh], [-rw, rh]])
    bases = {
        "circle": circle,
        "square": square,
        "rect0": rect,
        "rect45": _rotated(rect, 45.0),
        "rect90": _rotated(rect, 90.0),
        "rect135": _rotated(rect, 135.0),
    }
    catalog = []
    for b, name in enumerate(BASES):
        for s, scale in enumerate(SCALES):
            catalog.append(ShapeSpec(b * len(SCALES) + s, name, scale,
                                     Polygon(bases[name] * scale)))
    return catalog


def _ring(mask: Mask, width: int = 2) -> Mask:
    """Pixels within ``width`` px (Euclidean) of the mask but outside it."""
    padded = np.pad(mask.bits, width)
    yy, xx = np.mgrid[-width:width + 1, -width:width + 1]
    disk = xx * xx + yy * yy <= width * width
    grown = ndimage.binary_dilation(padded, structure=disk)
    return Mask(mask.x0 - width, mask.y0 - width, grown & ~padded)


def _mean_plane(prob_map: ProbMap, mask: Mask, rows: np.ndarray, cols: np.ndarray) -> np.ndarray:
    """Mean probability under ``mask`` placed at every ``(row, col)`` pair of the grid."""
    reach = max(abs(mask.x0), abs(mask.y0), mask.x0 + mask.width, mask.y0 + mask.height)
    # placements may sit a few pixels outside the raster
    overhang = max(0, -int(rows.min()), -int(cols.min()),
                   int(rows.max()) - prob_map.height + 1, int(cols.max()) - prob_map.width + 1)
    margin = reach + overhang + 1
    padded = np.pad(prob_map.values, margin)
    corr = signal.correlate(padded, mask.bits.astype(np.float64), mode="valid", method="fft")
    ys = rows + margin + mask.y0
    xs = cols + margin + mask.x0
    return np.clip(corr[np.ix_(ys, xs)] / mask.count, 0.0, 1.0)


def builtin_score(prob_map: ProbMap, catalog: list[ShapeSpec], stride: int = 4,
                  pool: bool = True) -> DetectionGrid:
    """Matched-filter detection scores from the probability map alone.

    A placement scores ``0.5 * (inside mean + 1 - ring mean)``, clamped to
    [0, 1], where the ring is a 2-px band around the shape.  With ``pool``
    each cell reports the best placement within its ``stride x stride``
    block, so buildings between lattice points are not penalized for the
    quantization; otherwise only the lattice point itself is scored.
    """
    gw, gh = grid_size(prob_map.width, prob_map.height, stride)
    lo = -(stride // 2) if pool else 0
    span = stride if pool else 1
    # every pixel of every block, row-major per axis
    ys = (np.arange(gh)[:, None] * stride + lo + np.arange(span)[None, :]).ravel()
    xs = (np.arange(gw)[:, None] * stride + lo + np.arange(span)[None, :]).ravel()
    planes = []
    for spec in catalog:
        m = rasterize(spec.polygon_at_origin)
        inside = _mean_plane(prob_map, m, ys, xs)
        ring = _mean_plane(prob_map, _ring(m), ys, xs)
        s = np.clip(0.5 * (inside + 1.0 - ring), 0.0, 1.0)
        planes.append(s.reshape(gh, span, gw, span).max(axis=(1, 3)))
    return DetectionGrid(np.array(planes), stride)


def write_detection_grid(path, grid: DetectionGrid) -> None:
    header = DGRD_MAGIC + struct.pack("<IIII", grid.shape_count, grid.grid_w, grid.grid_h, grid.stride)
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(grid.scores.astype("<f4").tobytes())


def load_detection_grid(path, catalog_size: int | None = 18) -> DetectionGrid:
    data = Path(path).read_bytes()
    if len(data) < 20 or data[:4] != DGRD_MAGIC:
        raise FormatError(f"{path}: not a DGRD detection grid")
    count, gw, gh, stride = struct.unpack("<IIII", data[4:20])
    if stride < 1:
        raise FormatError(f"{path}: stride must be positive")
    if catalog_size is not None and count != catalog_size:
        raise FormatError(f"{path}: {count} planes for a {catalog_size}-shape catalog")
    expected = 20 + 4 * count * gw * gh
    if len(data) != expected:
        raise FormatError(f"{path}: expected {expected} bytes, got {len(data)}")
    scores = np.frombuffer(data, dtype="<f4", offset=20).reshape(count, gh, gw)
    if not np.isfinite(scores).all() or scores.min(initial=0) < 0 or scores.max(initial=0) > 1:
        raise FormatError(f"{path}: scores must lie in [0, 1]")
    return DetectionGrid(scores.astype(np.float32), stride)


def place(spec: ShapeSpec, center) -> Polygon:
    return shift(spec.polygon_at_origin, (int(center[0]), int(center[1])))


class _Occupancy:
    """Boolean canvas used to test pixel overlap against accepted masks."""

    def __init__(self, rect: Rect):
        self.rect = rect
        self.bits = np.zeros((rect.height, rect.width), dtype=bool)

    def _view(self, mask: Mask):
        ov = mask.rect.intersect(self.rect)
        if ov.is_empty():
            return None, None
        canvas = self.bits[ov.y0 - self.rect.y0:ov.y1 - self.rect.y0,
                           ov.x0 - self.rect.x0:ov.x1 - self.rect.x0]
        sub = mask.bits[ov.y0 - mask.y0:ov.y1 - mask.y0, ov.x0 - mask.x0:ov.x1 - mask.x0]
        return canvas, sub

    def overlaps(self, mask: Mask) -> bool:
        canvas, sub = self._view(mask)
        return canvas is not None and bool((canvas & sub).any())

    def add(self, mask: Mask) -> None:
        canvas, sub = self._view(mask)
        if canvas is not None:
            canvas |= sub


def score_candidates(grid: DetectionGrid, prob_map: ProbMap, catalog: list[ShapeSpec],
                     t: float = 0.80) -> list[Candidate]:
    """Candidates whose detection score and mean probability both reach ``t``."""
    if grid.shape_count != len(catalog):
        raise FormatError(f"grid has {grid.shape_count} planes, catalog {len(catalog)} shapes")
    out = []
    for spec in catalog:
        m = rasterize(spec.polygon_at_origin)
        passed = grid.scores[spec.id] >= t
        if passed.sum() > PREFILTER_MIN:
            # FFT means are only a coarse gate; mean_prob below decides
            rows = np.arange(grid.grid_h) * grid.stride
            cols = np.arange(grid.grid_w) * grid.stride
            passed &= _mean_plane(prob_map, m, rows, cols) >= t - 1e-6
        iy, ix = np.nonzero(passed)
        for y, x in zip(iy, ix):
            cx, cy = int(x) * grid.stride, int(y) * grid.stride
            avg = mean_prob(m.translated(cx, cy), prob_map)
            if avg >= t:
                out.append(Candidate(spec.id, Point(cx, cy), float(grid.scores[spec.id, y, x]), avg))
    return out


def select_candidates(grid: DetectionGrid, prob_map: ProbMap, existing: list[Footprint],
                      catalog: list[ShapeSpec], t: float = 0.80,
                      return_candidates: bool = False):
    """New footprints from the detection grid.

    Candidates below ``t`` on either score are dropped, as is anything
    touching an existing footprint.  Among overlapping survivors the highest
    ``avg_prob + detection_score`` wins (ties: lower shape id, then center).
    """
    t = check_unit_interval("t", t)
    cands = score_candidates(grid, prob_map, catalog, t)
    masks = {s.id: rasterize(s.polygon_at_origin) for s in catalog}
    reach = max(max(abs(m.x0), abs(m.y0), m.x0 + m.width, m.y0 + m.height) for m in masks.values())
    margin = reach + grid.stride
    occ = _Occupancy(prob_map.rect.dilate(margin))
    for fp in existing:
        occ.add(rasterize(fp.polygon))

    cands.sort(key=lambda c: (-c.total, c.shape_id, c.center.x, c.center.y))
    taken = {fp.id for fp in existing}
    added, accepted = [], []
    for c in cands:
        m = masks[c.shape_id].translated(int(c.center.x), int(c.center.y))
        if occ.overlaps(m):
            continue
        occ.add(m)
        accepted.append(c)
        k = len(added)
        fid = f"added-{k:05d}"
        while fid in taken:
            k += 1
            fid = f"added-{k:05d}"
        taken.add(fid)
        added.append(Footprint(fid, place(catalog[c.shape_id], c.center), "added",
                               {"shape_id": c.shape_id,
                                "detection_score": c.detection_score,
                                "avg_prob": c.avg_prob}))
    return (added, accepted) if return_candidates else added


def label_shape_samples(truth: list[Footprint], catalog: list[ShapeSpec],
                        grid_shape: tuple[int, int], stride: int = 4,
                        positive_iou: float = 0.75, negative_iou: float = 0.30) -> np.ndarray:
    """Training labels per ``(shape, row, col)``: 1 positive, 0 negative, -1 ignore.

    ``grid_shape`` is ``(grid_h, grid_w)``.  A cell is positive for a shape
    when the shape placed there has IoU above ``positive_iou`` with its
    best-matching building, negative below ``negative_iou``.
    """
    gh, gw = grid_shape
    best = np.zeros((len(catalog), gh, gw))
    truth_masks = [rasterize(fp.polygon) for fp in truth]
    for spec in catalog:
        k = rasterize(spec.polygon_at_origin)
        for tm in truth_masks:
            # lattice points where the placed shape box meets the building box
            x_lo = max(0, -(-(tm.x0 - k.x0 - k.width + 1) // stride))
            x_hi = min(gw - 1, (tm.x0 + tm.width - 1 - k.x0) // stride)
            y_lo = max(0, -(-(tm.y0 - k.y0 - k.height + 1) // stride))
            y_hi = min(gh - 1, (tm.y0 + tm.height - 1 - k.y0) // stride)
            for iy in range(y_lo, y_hi + 1):
                for ix in range(x_lo, x_hi + 1):
                    v = mask_iou(k.translated(ix * stride, iy * stride), tm)
                    if v > best[spec.id, iy, ix]:
                        best[spec.id, iy, ix] = v
    labels = np.full(best.shape, IGNORE, dtype=np.int8)
    labels[best > positive_iou] = POSITIVE
    labels[best < negative_iou] = NEGATIVE
    return labels


class ShapeAdder(TransformerMixin, BaseEstimator):
    """Append buildings detected with the shape-prior catalog.

    ``fit(footprints, prob_map)`` treats ``footprints`` as the retained
    annotations and finds new ones; ``transform`` returns the input plus the
    additions.  ``detection_grid`` may be a :class:`DetectionGrid` or a path
    to a DGRD file; by default the matched-filter scorer is used.
    """

    def __init__(self, threshold=0.80, stride=4, detection_grid=None):
        self.threshold = threshold
        self.stride = stride
        self.detection_grid = detection_grid

    def fit(self, X, y):
        existing = check_footprints(X)
        prob_map = check_prob_map(y)
        self.catalog_ = build_catalog(prob_map.resolution)
        if self.detection_grid is None:
            self.grid_ = builtin_score(prob_map, self.catalog_, int(self.stride))
        elif isinstance(self.detection_grid, DetectionGrid):
            self.grid_ = self.detection_grid
        else:
            self.grid_ = load_detection_grid(self.detection_grid, len(self.catalog_))
        self.added_, self.candidates_ = select_candidates(
            self.grid_, prob_map, existing, self.catalog_, self.threshold, return_candidates=True)
        return self

    def transform(self, X):
        check_is_fitted(self, "added_")
        return check_footprints(list(X) + self.added_)
