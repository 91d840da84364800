"""OSM road extraction and per-highway-type composition statistics."""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Iterable, List, NamedTuple, Optional, Sequence, Tuple
from xml.parsers import expat

import numpy as np
from shapely.geometry import Polygon as ShapelyPolygon
from shapely.validation import explain_validity

from .config import read_kv
from .errors import GeometryError, OSMParseError

EARTH_RADIUS_M = 6_371_000.0

DEFAULT_COLORS = {
    "motorway": "#e892a2",
    "motorway_link": "#e892a2",
    "trunk": "#f9b29c",
    "trunk_link": "#f9b29c",
    "primary": "#fcd6a4",
    "primary_link": "#fcd6a4",
    "secondary": "#f7fabf",
    "secondary_link": "#f7fabf",
    "tertiary": "#c6c6c6",
    "tertiary_link": "#c6c6c6",
    "residential": "#8da0cb",
    "living_street": "#a6d854",
    "service": "#66c2a5",
    "unclassified": "#b3b3b3",
}
FALLBACK_COLOR = "#404040"


@dataclass(frozen=True)
class RoadSegment:
    way_id: int
    highway_type: str
    geometry: Tuple[Tuple[float, float], ...]

    def __post_init__(self):
        object.__setattr__(self, "geometry", tuple((float(a), float(b)) for a, b in self.geometry))
        if len(self.geometry) < 2:
            raise ValueError(f"way {self.way_id}: a road segment needs at least 2 vertices")
        if not self.highway_type:
            raise ValueError(f"way {self.way_id}: empty highway type")


class WayRejection(NamedTuple):
    way_id: int
    reason: str


class OSMLoad(NamedTuple):
    segments: List[RoadSegment]
    rejected: List[WayRejection]


def parse_osm(path: os.PathLike | str) -> OSMLoad:
    """Extract every way tagged ``highway=*`` with node coordinates resolved.

    Ways referencing nodes absent from the file are reported in ``rejected``.
    Malformed XML raises :class:`OSMParseError` with the byte offset.
    """
    nodes: Dict[str, Tuple[float, float]] = {}
    ways: List[Tuple[str, List[str], Dict[str, str]]] = []
    current: List[Optional[tuple]] = [None]

    def start(name, attrs):
        if name == "node":
            nodes[attrs["id"]] = (float(attrs["lat"]), float(attrs["lon"]))
        elif name == "way":
            current[0] = (attrs["id"], [], {})
        elif current[0] is not None:
            if name == "nd":
                current[0][1].append(attrs["ref"])
            elif name == "tag":
                current[0][2][attrs["k"]] = attrs.get("v", "")

    def end(name):
        if name == "way" and current[0] is not None:
            ways.append(current[0])
            current[0] = None

    parser = expat.ParserCreate()
    parser.StartElementHandler = start
    parser.EndElementHandler = end
    with open(path, "rb") as fh:
        try:
            parser.ParseFile(fh)
        except expat.ExpatError as exc:
            raise OSMParseError(f"{path}: malformed OSM XML: {expat.errors.messages[exc.code]}",
                                parser.ErrorByteIndex) from None
        except (KeyError, ValueError) as exc:
            raise OSMParseError(f"{path}: bad node or way attributes ({exc})",
                                parser.CurrentByteIndex) from None

    segments, rejected = [], []
    for way_id, refs, tags in ways:
        highway = tags.get("highway", "")
        if not highway:
            continue
        missing = [ref for ref in refs if ref not in nodes]
        if missing:
            rejected.append(WayRejection(int(way_id), f"missing node(s) {', '.join(missing)}"))
            continue
        if len(refs) < 2:
            rejected.append(WayRejection(int(way_id), "fewer than 2 nodes"))
            continue
        segments.append(RoadSegment(int(way_id), highway, tuple(nodes[r] for r in refs)))
    return OSMLoad(segments, rejected)


def haversine(lat1, lon1, lat2, lon2):
    """Great-circle distance in meters on a sphere of radius 6,371 km."""
    p1, p2 = np.radians(lat1), np.radians(lat2)
    dp = p2 - p1
    dl = np.radians(np.asarray(lon2) - np.asarray(lon1))
    a = np.sin(dp / 2) ** 2 + np.cos(p1) * np.cos(p2) * np.sin(dl / 2) ** 2
    return 2 * EARTH_RADIUS_M * np.arcsin(np.sqrt(np.clip(a, 0.0, 1.0)))


def segment_length(seg: RoadSegment) -> float:
    g = np.asarray(seg.geometry)
    return float(np.sum(haversine(g[:-1, 0], g[:-1, 1], g[1:, 0], g[1:, 1])))


def _polygon_rings(region: dict) -> List[np.ndarray]:
    """All rings (lon, lat) of a GeoJSON Polygon/MultiPolygon, Feature or FeatureCollection."""
    kind = region.get("type")
    if kind == "FeatureCollection":
        return [ring for feat in region.get("features", []) for ring in _polygon_rings(feat)]
    if kind == "Feature":
        return _polygon_rings(region.get("geometry") or {})
    if kind == "Polygon":
        polygons = [region["coordinates"]]
    elif kind == "MultiPolygon":
        polygons = region["coordinates"]
    else:
        raise GeometryError(f"region must be a GeoJSON polygon, got {kind!r}")
    rings = []
    for poly in polygons:
        if not poly:
            raise GeometryError("polygon without rings")
        for ring in poly:
            arr = np.asarray(ring, dtype=float)
            if arr.ndim != 2 or arr.shape[0] < 4 or arr.shape[1] < 2 or not np.all(np.isfinite(arr)):
                raise GeometryError("polygon ring needs at least 4 finite positions")
            if not np.array_equal(arr[0], arr[-1]):
                raise GeometryError("polygon ring is not closed")
            if not ShapelyPolygon(arr[:, :2]).is_valid:
                raise GeometryError(f"invalid polygon ring: {explain_validity(ShapelyPolygon(arr[:, :2]))}")
            rings.append(arr[:, :2])
    return rings


def points_in_region(lats: np.ndarray, lons: np.ndarray, rings: Sequence[np.ndarray]) -> np.ndarray:
    """Even-odd rule over every ring: a point is inside if it crosses an odd number of edges."""
    lats = np.asarray(lats, dtype=float)
    lons = np.asarray(lons, dtype=float)
    inside = np.zeros(lats.shape, dtype=bool)
    for ring in rings:
        x0, y0 = ring[:-1, 0], ring[:-1, 1]
        x1, y1 = ring[1:, 0], ring[1:, 1]
        for ax, ay, bx, by in zip(x0, y0, x1, y1):
            straddles = (ay > lats) != (by > lats)
            with np.errstate(divide="ignore", invalid="ignore"):
                x_cross = ax + (lats - ay) * (bx - ax) / (by - ay)
            inside ^= straddles & (lons < x_cross)
    return inside


def clip_to_region(segments: Iterable[RoadSegment], region: dict) -> List[RoadSegment]:
    """Keep the maximal runs of consecutive vertices inside ``region``.

    Boundary crossings are not interpolated, so clipped lengths fall short of
    the true in-region length by at most one vertex spacing per crossing.
    """
    rings = _polygon_rings(region)
    out = []
    for seg in segments:
        g = np.asarray(seg.geometry)
        inside = points_in_region(g[:, 0], g[:, 1], rings)
        if inside.all():
            out.append(seg)
            continue
        run: List[Tuple[float, float]] = []
        for vertex, flag in zip(seg.geometry, inside):
            if flag:
                run.append(vertex)
                continue
            if len(run) >= 2:
                out.append(RoadSegment(seg.way_id, seg.highway_type, tuple(run)))
            run = []
        if len(run) >= 2:
            out.append(RoadSegment(seg.way_id, seg.highway_type, tuple(run)))
    return out


@dataclass(frozen=True)
class TypeRow:
    highway_type: str
    segment_count: int
    count_percent: float
    normalized_percent: float
    total_length_m: float


CSV_HEADER = "highway_type,segment_count,count_percent,normalized_percent,total_length_m"


def type_stats(segments: Sequence[RoadSegment]) -> List[TypeRow]:
    """Per highway type: count share, length share (``normalized_percent``) and total length.

    Rows are ordered by total length, longest first.
    """
    counts: Dict[str, int] = {}
    lengths: Dict[str, float] = {}
    for seg in segments:
        counts[seg.highway_type] = counts.get(seg.highway_type, 0) + 1
        lengths[seg.highway_type] = lengths.get(seg.highway_type, 0.0) + segment_length(seg)
    total_count = sum(counts.values())
    total_length = math.fsum(lengths.values())
    rows = []
    for kind in counts:
        count_pct = 100.0 * counts[kind] / total_count
        # an all-degenerate network has no length to share out
        norm_pct = 100.0 * lengths[kind] / total_length if total_length > 0 else count_pct
        rows.append(TypeRow(kind, counts[kind], count_pct, norm_pct, lengths[kind]))
    rows.sort(key=lambda r: (-r.total_length_m, r.highway_type))
    return rows


def stats_csv(rows: Sequence[TypeRow]) -> List[str]:
    return [
        f"{r.highway_type},{r.segment_count},{r.count_percent!r},{r.normalized_percent!r},{r.total_length_m!r}"
        for r in rows
    ]


def load_colors(path: Optional[os.PathLike | str] = None) -> Dict[str, str]:
    colors = dict(DEFAULT_COLORS)
    if path is not None:
        colors.update(read_kv(path))
    return colors


def segments_geojson(
    segments: Sequence[RoadSegment],
    colors: Optional[Dict[str, str]] = None,
    metadata: Optional[Dict[str, str]] = None,
) -> dict:
    colors = colors or DEFAULT_COLORS
    features = [
        {
            "type": "Feature",
            "geometry": {"type": "LineString", "coordinates": [[lon, lat] for lat, lon in seg.geometry]},
            "properties": {
                "way_id": seg.way_id,
                "highway": seg.highway_type,
                "color": colors.get(seg.highway_type, FALLBACK_COLOR),
                "length_m": segment_length(seg),
            },
        }
        for seg in segments
    ]
    return {"type": "FeatureCollection", "features": features, "metadata": dict(metadata or {})}


def read_region(path: os.PathLike | str) -> dict:
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise GeometryError(f"{path}: not valid GeoJSON ({exc})") from exc
