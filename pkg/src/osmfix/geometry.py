"""Polygons in raster pixel space, rasterization and raster-based measures.

Coordinates follow image conventions: ``x`` is the column (rightward) and
``y`` is the row (downward).  Pixel ``(col, row)`` has its center at
``(col + 0.5, row + 0.5)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, NamedTuple

import numpy as np
from scipy import ndimage
from scipy.spatial import cKDTree

from .exceptions import DegenerateGeometry

SOURCES = ("original", "aligned", "added")


class Point(NamedTuple):
    x: float
    y: float


class Rect(NamedTuple):
    """Half-open pixel rectangle ``[x0, x1) x [y0, y1)``."""

    x0: int
    y0: int
    x1: int
    y1: int

    @property
    def width(self) -> int:
        return max(self.x1 - self.x0, 0)

    @property
    def height(self) -> int:
        return max(self.y1 - self.y0, 0)

    def is_empty(self) -> bool:
        return self.width == 0 or self.height == 0

    def intersect(self, other: "Rect") -> "Rect":
        return Rect(max(self.x0, other.x0), max(self.y0, other.y0),
                    min(self.x1, other.x1), min(self.y1, other.y1))

    def dilate(self, r: int) -> "Rect":
        return Rect(self.x0 - r, self.y0 - r, self.x1 + r, self.y1 + r)


def _segments_cross(p1, p2, q1, q2):
    """Vectorized proper/improper intersection test for segment arrays."""

    def orient(a, b, c):
        return np.sign((b[..., 0] - a[..., 0]) * (c[..., 1] - a[..., 1])
                       - (b[..., 1] - a[..., 1]) * (c[..., 0] - a[..., 0]))

    def on_seg(a, b, c):
        return ((np.minimum(a[..., 0], b[..., 0]) <= c[..., 0])
                & (c[..., 0] <= np.maximum(a[..., 0], b[..., 0]))
                & (np.minimum(a[..., 1], b[..., 1]) <= c[..., 1])
                & (c[..., 1] <= np.maximum(a[..., 1], b[..., 1])))

    o1, o2 = orient(p1, p2, q1), orient(p1, p2, q2)
    o3, o4 = orient(q1, q2, p1), orient(q1, q2, p2)
    hit = (o1 * o2 < 0) & (o3 * o4 < 0)
    hit |= (o1 == 0) & on_seg(p1, p2, q1)
    hit |= (o2 == 0) & on_seg(p1, p2, q2)
    hit |= (o3 == 0) & on_seg(q1, q2, p1)
    hit |= (o4 == 0) & on_seg(q1, q2, p2)
    return hit


def is_simple(coords: np.ndarray) -> bool:
    n = len(coords)
    a = coords
    b = np.roll(coords, -1, axis=0)
    i, j = np.triu_indices(n, k=2)
    # first and last edges share a vertex
    keep = ~((i == 0) & (j == n - 1))
    i, j = i[keep], j[keep]
    if len(i) == 0:
        return True
    return not _segments_cross(a[i], b[i], a[j], b[j]).any()


class Polygon:
    """A simple polygon stored as an open ring of vertices.

    Integer translations are kept apart from the base vertices so that
    shifting back and forth is exact.  ``coords`` gives the realized
    vertices, which is what rasterization and serialization use.
    """

    __slots__ = ("_base", "_offset", "_coords")

    def __init__(self, coords, *, validate: bool = True, _offset=(0, 0)):
        arr = np.array(coords, dtype=np.float64)
        if arr.ndim != 2 or arr.shape[1] != 2:
            raise DegenerateGeometry("polygon coordinates must have shape (n, 2)")
        if len(arr) >= 2 and np.array_equal(arr[0], arr[-1]):
            arr = arr[:-1]
        if validate:
            if len(arr) < 3:
                raise DegenerateGeometry("polygon needs at least 3 distinct vertices")
            if not np.isfinite(arr).all():
                raise DegenerateGeometry("polygon vertices must be finite")
            if signed_area(arr) == 0.0:
                raise DegenerateGeometry("polygon has zero area")
            if not is_simple(arr):
                raise DegenerateGeometry("polygon is self-intersecting")
        arr.setflags(write=False)
        self._base = arr
        self._offset = (int(_offset[0]), int(_offset[1]))
        self._coords = None

    @property
    def coords(self) -> np.ndarray:
        if self._coords is None:
            if self._offset == (0, 0):
                self._coords = self._base
            else:
                c = self._base + np.array(self._offset, dtype=np.float64)
                c.setflags(write=False)
                self._coords = c
        return self._coords

    @property
    def exterior(self) -> list[Point]:
        return [Point(float(x), float(y)) for x, y in self.coords]

    @property
    def area(self) -> float:
        return abs(signed_area(self.coords))

    @property
    def centroid(self) -> Point:
        return polygon_centroid(self.coords)

    @property
    def bounds(self) -> tuple[float, float, float, float]:
        c = self.coords
        return (float(c[:, 0].min()), float(c[:, 1].min()),
                float(c[:, 0].max()), float(c[:, 1].max()))

    def translated(self, dx: int, dy: int) -> "Polygon":
        new = Polygon.__new__(Polygon)
        new._base = self._base
        new._offset = (self._offset[0] + int(dx), self._offset[1] + int(dy))
        new._coords = None
        return new

    def __len__(self) -> int:
        return len(self._base)

    def __eq__(self, other) -> bool:
        if not isinstance(other, Polygon):
            return NotImplemented
        return np.array_equal(self.coords, other.coords)

    def __hash__(self):
        return hash(self.coords.tobytes())

    def __repr__(self) -> str:
        return f"Polygon({self.coords.tolist()!r})"


@dataclass
class Footprint:
    id: str
    polygon: Polygon
    source: str = "original"
    properties: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.source not in SOURCES:
            raise ValueError(f"unknown footprint source {self.source!r}")

    def replace(self, **changes) -> "Footprint":
        kw = dict(id=self.id, polygon=self.polygon, source=self.source,
                  properties=dict(self.properties))
        kw.update(changes)
        return Footprint(**kw)


@dataclass
class Mask:
    """Binary occupancy over a window whose top-left pixel is ``(x0, y0)``."""

    x0: int
    y0: int
    bits: np.ndarray

    @property
    def width(self) -> int:
        return self.bits.shape[1]

    @property
    def height(self) -> int:
        return self.bits.shape[0]

    @property
    def rect(self) -> Rect:
        return Rect(self.x0, self.y0, self.x0 + self.width, self.y0 + self.height)

    @property
    def count(self) -> int:
        return int(self.bits.sum())

    def translated(self, dx: int, dy: int) -> "Mask":
        return Mask(self.x0 + int(dx), self.y0 + int(dy), self.bits)

    def pixels(self) -> tuple[np.ndarray, np.ndarray]:
        """Absolute ``(rows, cols)`` of the set bits."""
        r, c = np.nonzero(self.bits)
        return r + self.y0, c + self.x0

    def render(self, rect: Rect) -> np.ndarray:
        """Occupancy of this mask over ``rect`` as a bool array."""
        out = np.zeros((rect.height, rect.width), dtype=bool)
        ov = self.rect.intersect(rect)
        if not ov.is_empty():
            out[ov.y0 - rect.y0:ov.y1 - rect.y0, ov.x0 - rect.x0:ov.x1 - rect.x0] = \
                self.bits[ov.y0 - self.y0:ov.y1 - self.y0, ov.x0 - self.x0:ov.x1 - self.x0]
        return out

    def __eq__(self, other) -> bool:
        if not isinstance(other, Mask):
            return NotImplemented
        return (self.x0, self.y0) == (other.x0, other.y0) and np.array_equal(self.bits, other.bits)


def signed_area(coords: np.ndarray) -> float:
    x, y = coords[:, 0], coords[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))


def polygon_centroid(coords: np.ndarray) -> Point:
    x, y = coords[:, 0], coords[:, 1]
    xn, yn = np.roll(x, -1), np.roll(y, -1)
    cross = x * yn - xn * y
    a = cross.sum() / 2.0
    if a == 0:
        return Point(float(x.mean()), float(y.mean()))
    cx = ((x + xn) * cross).sum() / (6.0 * a)
    cy = ((y + yn) * cross).sum() / (6.0 * a)
    return Point(float(cx), float(cy))


def rasterize(polygon: Polygon) -> Mask:
    """Pixels whose centers fall inside ``polygon``.

    Centers lying exactly on a left or top edge count as inside, on a right
    or bottom edge as outside.
    """
    c = polygon.coords
    if polygon.area < 1.0:
        raise DegenerateGeometry(f"polygon area {polygon.area:.3g} px^2 is below one pixel")
    x0 = int(np.floor(c[:, 0].min()))
    y0 = int(np.floor(c[:, 1].min()))
    x1 = int(np.ceil(c[:, 0].max()))
    y1 = int(np.ceil(c[:, 1].max()))
    w, h = x1 - x0, y1 - y0
    xc = np.arange(w) + 0.5 + x0
    yc = np.arange(h) + 0.5 + y0

    ax, ay = c[:, 0], c[:, 1]
    bx, by = np.roll(ax, -1), np.roll(ay, -1)
    keep = ay != by
    ax, ay, bx, by = ax[keep], ay[keep], bx[keep], by[keep]
    ylo, yhi = np.minimum(ay, by), np.maximum(ay, by)

    # crossing of every edge with every row of centers: (edges, rows)
    in_row = (ylo[:, None] <= yc[None, :]) & (yc[None, :] < yhi[:, None])
    t = (yc[None, :] - ay[:, None]) / (by - ay)[:, None]
    xcross = ax[:, None] + t * (bx - ax)[:, None]
    xcross = np.where(in_row, xcross, np.inf)
    # parity of crossings at or left of each center
    hits = (xcross[:, :, None] <= xc[None, None, :]).sum(axis=0)
    bits = (hits % 2).astype(bool)
    return Mask(x0, y0, bits)


def shift(polygon: Polygon, d) -> Polygon:
    dx, dy = d
    return polygon.translated(dx, dy)


def union_mask(masks: Iterable[Mask]) -> Mask:
    masks = list(masks)
    if not masks:
        raise ValueError("union of no masks")
    rect = masks[0].rect
    for m in masks[1:]:
        r = m.rect
        rect = Rect(min(rect.x0, r.x0), min(rect.y0, r.y0), max(rect.x1, r.x1), max(rect.y1, r.y1))
    bits = np.zeros((rect.height, rect.width), dtype=bool)
    for m in masks:
        bits[m.y0 - rect.y0:m.y0 - rect.y0 + m.height, m.x0 - rect.x0:m.x0 - rect.x0 + m.width] |= m.bits
    return Mask(rect.x0, rect.y0, bits)


def mask_iou(a: Mask, b: Mask) -> float:
    ov = a.rect.intersect(b.rect)
    inter = 0
    if not ov.is_empty():
        inter = int((a.render(ov) & b.render(ov)).sum())
    union = a.count + b.count - inter
    return inter / union if union else 0.0


def iou(a: Polygon, b: Polygon) -> float:
    return mask_iou(rasterize(a), rasterize(b))


def boundary_pixels(mask: Mask) -> np.ndarray:
    """Set pixels with at least one 4-connected unset neighbour, as (x, y)."""
    padded = np.pad(mask.bits, 1)
    inner = ndimage.binary_erosion(padded, structure=ndimage.generate_binary_structure(2, 1))
    edge = (padded & ~inner)[1:-1, 1:-1]
    r, c = np.nonzero(edge)
    return np.column_stack([c + mask.x0, r + mask.y0]).astype(np.float64)


def mask_assd(a: Mask, b: Mask) -> float:
    pa, pb = boundary_pixels(a), boundary_pixels(b)
    if len(pa) == 0 or len(pb) == 0:
        raise DegenerateGeometry("mask has no boundary pixels")
    da, _ = cKDTree(pb).query(pa)
    db, _ = cKDTree(pa).query(pb)
    return float((da.sum() + db.sum()) / (len(da) + len(db)))


def assd(a: Polygon, b: Polygon) -> float:
    """Average symmetric surface distance between two footprints, in pixels."""
    return mask_assd(rasterize(a), rasterize(b))
