"""Input checks shared by the estimators and the command-line tool."""

from __future__ import annotations

import numpy as np

from .exceptions import FormatError
from .geometry import Footprint, Polygon


def check_prob_map(prob_map):
    """Return ``prob_map`` as a :class:`ProbMap`, accepting a bare array."""
    from .raster import ProbMap

    if isinstance(prob_map, ProbMap):
        return prob_map
    if isinstance(prob_map, np.ndarray):
        return ProbMap(prob_map)
    raise TypeError(f"expected a ProbMap or 2-D array, got {type(prob_map).__name__}")


def check_footprints(footprints) -> list[Footprint]:
    """Validate a footprint collection and return it as a list.

    Raises :class:`FormatError` on duplicate ids or non-footprint items.
    """
    out = list(footprints)
    seen = set()
    for fp in out:
        if not isinstance(fp, Footprint):
            raise TypeError(f"expected Footprint, got {type(fp).__name__}")
        if not isinstance(fp.polygon, Polygon):
            raise TypeError(f"footprint {fp.id!r} has no Polygon geometry")
        if fp.id in seen:
            raise FormatError(f"duplicate footprint id {fp.id!r}")
        seen.add(fp.id)
    return out


def check_unit_interval(name: str, value: float) -> float:
    value = float(value)
    if not 0.0 <= value <= 1.0:
        raise ValueError(f"{name} must lie in [0, 1], got {value}")
    return value
