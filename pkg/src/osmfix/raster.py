"""Building-probability rasters and the similarity measures used for alignment."""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .exceptions import EmptyMask, EmptyWindow, FormatError
from .geometry import Mask, Rect

PMAP_MAGIC = b"PMAP"
MI_BINS = 32


@dataclass(frozen=True, eq=False)
class ProbMap:
    """Single-band probability raster.

    ``values`` is indexed ``[row, col]``; ``resolution`` is meters per pixel.
    """

    values: np.ndarray
    resolution: float = 0.3

    def __post_init__(self):
        v = np.array(self.values, dtype=np.float64)
        if v.ndim != 2 or v.shape[0] < 1 or v.shape[1] < 1:
            raise ValueError("probability map must be a non-empty 2-D array")
        if not np.isfinite(v).all() or v.min() < 0.0 or v.max() > 1.0:
            raise ValueError("probability values must lie in [0, 1]")
        if not (self.resolution > 0 and np.isfinite(self.resolution)):
            raise ValueError("resolution must be a positive number of meters per pixel")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "resolution", float(self.resolution))

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def rect(self) -> Rect:
        return Rect(0, 0, self.width, self.height)

    def window(self, rect: Rect) -> np.ndarray:
        """Values over ``rect``; pixels outside the map read as 0."""
        out = np.zeros((rect.height, rect.width))
        ov = rect.intersect(self.rect)
        if not ov.is_empty():
            out[ov.y0 - rect.y0:ov.y1 - rect.y0, ov.x0 - rect.x0:ov.x1 - rect.x0] = \
                self.values[ov.y0:ov.y1, ov.x0:ov.x1]
        return out

    def __eq__(self, other):
        if not isinstance(other, ProbMap):
            return NotImplemented
        return self.resolution == other.resolution and np.array_equal(self.values, other.values)


def mean_prob(mask: Mask, prob_map: ProbMap) -> float:
    """Average probability under the set bits of ``mask``.

    Set bits outside the raster count as probability 0.
    """
    n = mask.count
    if n == 0:
        raise EmptyMask("mask has no set pixels")
    vals = prob_map.window(mask.rect)
    return float(vals[mask.bits].sum() / n)


def _clip_window(window: Rect, prob_map: ProbMap) -> Rect:
    w = Rect(*window).intersect(prob_map.rect)
    if w.is_empty():
        raise EmptyWindow(f"window {tuple(window)} does not intersect the map")
    return w


def abs_difference(mask: Mask, prob_map: ProbMap, window: Rect) -> float:
    """Sum over ``window`` of ``|mask - probability|`` with the mask as 0/1."""
    w = _clip_window(window, prob_map)
    m = mask.render(w).astype(np.float64)
    return float(np.abs(m - prob_map.window(w)).sum())


def quantize(values: np.ndarray, bins: int = MI_BINS) -> np.ndarray:
    return np.minimum((values * bins).astype(np.intp), bins - 1)


def mi_from_joint(joint: np.ndarray) -> float:
    """Mutual information (nats) from a joint count table."""
    total = joint.sum()
    if total == 0:
        return 0.0
    p = joint / total
    px = p.sum(axis=1, keepdims=True)
    py = p.sum(axis=0, keepdims=True)
    nz = p > 0
    mi = float((p[nz] * np.log(p[nz] / (px @ py)[nz])).sum())
    return max(mi, 0.0)


def mutual_info(mask: Mask, prob_map: ProbMap, window: Rect, bins: int = MI_BINS) -> float:
    """Mutual information between mask occupancy and quantized probability."""
    w = _clip_window(window, prob_map)
    m = mask.render(w).ravel().astype(np.intp)
    q = quantize(prob_map.window(w).ravel(), bins)
    joint = np.bincount(m * bins + q, minlength=2 * bins).reshape(2, bins).astype(np.float64)
    return mi_from_joint(joint)


def write_pmap(path, prob_map: ProbMap) -> None:
    header = PMAP_MAGIC + struct.pack("<IIf", prob_map.width, prob_map.height, prob_map.resolution)
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(prob_map.values.astype("<f4").tobytes())


def read_pmap(path) -> ProbMap:
    data = Path(path).read_bytes()
    if len(data) < 16 or data[:4] != PMAP_MAGIC:
        raise FormatError(f"{path}: not a PMAP raster")
    width, height, resolution = struct.unpack("<IIf", data[4:16])
    expected = 16 + 4 * width * height
    if width < 1 or height < 1 or len(data) != expected:
        raise FormatError(f"{path}: expected {expected} bytes for {width}x{height}, got {len(data)}")
    values = np.frombuffer(data, dtype="<f4", offset=16).reshape(height, width)
    # shortest decimal that survives float32, so 0.3 reads back as 0.3
    resolution = float(str(np.float32(resolution)))
    try:
        return ProbMap(values.astype(np.float64), resolution)
    except ValueError as exc:
        raise FormatError(f"{path}: {exc}") from exc


def read_png(path, resolution: float) -> ProbMap:
    """Import an 8- or 16-bit grayscale PNG, scaled linearly to [0, 1]."""
    from PIL import Image

    with Image.open(path) as im:
        mode = im.mode
        arr = np.asarray(im)
    if arr.ndim != 2:
        raise FormatError(f"{path}: expected a single-band image, got mode {mode}")
    if arr.dtype == np.uint8:
        scale = 255.0
    elif arr.dtype in (np.uint16, np.int32) and mode.startswith("I"):
        scale = 65535.0
    else:
        raise FormatError(f"{path}: unsupported PNG mode {mode}")
    return ProbMap(arr.astype(np.float64) / scale, resolution)


def load_prob_map(path, resolution: float | None = None) -> ProbMap:
    """Load a ``.pmap`` raster, or a PNG when ``resolution`` is supplied."""
    if str(path).lower().endswith(".png"):
        if resolution is None:
            raise FormatError("PNG import needs an explicit resolution")
        return read_png(path, resolution)
    return read_pmap(path)
