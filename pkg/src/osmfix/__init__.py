"""Correct building-footprint annotations against a building-probability raster."""

from .addition import ShapeAdder, build_catalog, builtin_score, select_candidates
from .alignment import AlignConfig, DisplacementDomain, MRFAligner, icm_align
from .exceptions import (DegenerateGeometry, EmptyMask, EmptyWindow, FormatError,
                         InconsistentState, NoOverlap, OsmFixError, PackingError,
                         UnimodalHistogram)
from .geometry import Footprint, Mask, Polygon, Rect, assd, iou, rasterize, shift
from .grouping import build_graph, group_buildings
from .io import read_geojson, write_geojson
from .metrics import EvalReport, evaluate
from .raster import ProbMap, load_prob_map
from .removal import EvidenceFilter, minimum_threshold, remove_footprints
from .synth import SceneSpec, generate

__all__ = [
    "AlignConfig", "DegenerateGeometry", "DisplacementDomain", "EmptyMask", "EmptyWindow",
    "EvalReport", "EvidenceFilter", "Footprint", "FormatError", "InconsistentState",
    "MRFAligner", "Mask", "NoOverlap", "OsmFixError", "PackingError", "Polygon", "ProbMap",
    "Rect", "SceneSpec", "ShapeAdder", "UnimodalHistogram", "assd", "build_catalog",
    "build_graph", "builtin_score", "evaluate", "generate", "group_buildings", "icm_align",
    "iou", "load_prob_map", "minimum_threshold", "rasterize", "read_geojson",
    "remove_footprints", "select_candidates", "shift", "write_geojson",
]
