"""GeoJSON reading and writing for footprint collections in pixel coordinates."""

from __future__ import annotations

import json
from pathlib import Path

from .exceptions import DegenerateGeometry, FormatError
from .geometry import SOURCES, Footprint, Polygon


def footprint_to_feature(fp: Footprint) -> dict:
    ring = [[float(x), float(y)] for x, y in fp.polygon.coords]
    ring.append(ring[0])
    props = {"id": fp.id, "source": fp.source}
    props.update({k: v for k, v in fp.properties.items() if k not in ("id", "source")})
    return {"type": "Feature", "properties": props,
            "geometry": {"type": "Polygon", "coordinates": [ring]}}


def to_geojson(footprints) -> dict:
    return {"type": "FeatureCollection",
            "features": [footprint_to_feature(fp) for fp in footprints]}


def dumps(footprints) -> str:
    return json.dumps(to_geojson(footprints), indent=1) + "\n"


def feature_to_footprint(feature: dict, index: int = 0) -> Footprint:
    if not isinstance(feature, dict) or feature.get("type") != "Feature":
        raise FormatError(f"feature {index}: not a GeoJSON Feature")
    geom = feature.get("geometry") or {}
    if geom.get("type") != "Polygon":
        raise FormatError(f"feature {index}: geometry type {geom.get('type')!r} is not Polygon")
    rings = geom.get("coordinates")
    if not isinstance(rings, list) or len(rings) != 1:
        raise FormatError(f"feature {index}: polygons with holes are not supported")
    props = dict(feature.get("properties") or {})
    fid = props.pop("id", None)
    if not isinstance(fid, str) or not fid:
        raise FormatError(f"feature {index}: property 'id' must be a non-empty string")
    source = props.pop("source", "original")
    if source not in SOURCES:
        raise FormatError(f"feature {fid!r}: unknown source {source!r}")
    try:
        polygon = Polygon(rings[0])
    except (DegenerateGeometry, ValueError, TypeError) as exc:
        raise FormatError(f"feature {fid!r}: {exc}") from exc
    return Footprint(fid, polygon, source, props)


def from_geojson(doc: dict) -> list[Footprint]:
    if not isinstance(doc, dict) or doc.get("type") != "FeatureCollection":
        raise FormatError("expected a GeoJSON FeatureCollection")
    out, seen = [], set()
    for i, feature in enumerate(doc.get("features", [])):
        fp = feature_to_footprint(feature, i)
        if fp.id in seen:
            raise FormatError(f"duplicate footprint id {fp.id!r}")
        seen.add(fp.id)
        out.append(fp)
    return out


def loads(text: str) -> list[Footprint]:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise FormatError(f"invalid JSON: {exc}") from exc
    return from_geojson(doc)


def read_geojson(path) -> list[Footprint]:
    return loads(Path(path).read_text())


def write_geojson(path, footprints) -> None:
    Path(path).write_text(dumps(footprints))
