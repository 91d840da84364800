"""Hotspot regions of a density surface and their displacement between periods."""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, FrozenSet, List, Optional, Tuple

import numpy as np
from scipy import ndimage
from shapely.geometry import MultiPolygon, Polygon, box
from shapely.ops import unary_union

from .density import DensityGrid, GridSpec, PlanarPoint
from .errors import GeometryError

DEFAULT_QUANTILE = 0.95
_FOUR_CONNECTED = ndimage.generate_binary_structure(2, 1)


@dataclass(frozen=True)
class Hotspot:
    cells: FrozenSet[Tuple[int, int]]
    centroid: PlanarPoint
    area_m2: float
    peak_density: float
    mass: float
    peak_cell: Tuple[int, int]


@dataclass(frozen=True)
class HotspotSet:
    threshold_density: float
    quantile_q: float
    regions: Tuple[Hotspot, ...]
    spec: GridSpec

    def __len__(self) -> int:
        return len(self.regions)

    @property
    def mask(self) -> np.ndarray:
        out = np.zeros(self.spec.shape, dtype=bool)
        for region in self.regions:
            rows, cols = zip(*region.cells)
            out[list(rows), list(cols)] = True
        return out


def quantile_threshold(values: np.ndarray, q: float) -> Optional[float]:
    """Smallest positive value whose empirical CDF among positive cells reaches ``q``."""
    pos = values[values > 0]
    if pos.size == 0:
        return None
    return float(np.quantile(pos, q, method="inverted_cdf"))


def extract_hotspots(grid: DensityGrid, quantile_q: float = DEFAULT_QUANTILE) -> HotspotSet:
    """Threshold ``grid`` at the ``quantile_q`` quantile of its positive cells.

    Regions are the 4-connected components of the thresholded mask, ordered
    by mass (largest first), ties by the position of their peak cell.
    """
    if not 0.0 < quantile_q < 1.0:
        raise ValueError("quantile_q must lie strictly between 0 and 1")
    values = grid.values
    spec = grid.spec
    threshold = quantile_threshold(values, quantile_q)
    if threshold is None:
        return HotspotSet(math.inf, quantile_q, (), spec)

    labels, n_regions = ndimage.label(values >= threshold, structure=_FOUR_CONNECTED)
    cs = spec.cell_size_m
    regions = []
    for label in range(1, n_regions + 1):
        rows, cols = np.nonzero(labels == label)
        v = values[rows, cols]
        k = int(np.argmax(v))  # row-major first maximum
        weight = v.sum()
        centroid = PlanarPoint(
            float(np.sum(v * (cols + 0.5)) * cs / weight),
            float(np.sum(v * (rows + 0.5)) * cs / weight),
        )
        regions.append(
            Hotspot(
                cells=frozenset(zip(rows.tolist(), cols.tolist())),
                centroid=centroid,
                area_m2=len(rows) * spec.cell_area,
                peak_density=float(v[k]),
                mass=float(weight * spec.cell_area),
                peak_cell=(int(rows[k]), int(cols[k])),
            )
        )
    regions.sort(key=lambda r: (-r.mass, r.peak_cell))
    return HotspotSet(threshold, quantile_q, tuple(regions), spec)


@dataclass(frozen=True)
class RegionMatch:
    before: int
    after: int
    dx_m: float
    dy_m: float

    @property
    def displacement_m(self) -> float:
        return math.hypot(self.dx_m, self.dy_m)


@dataclass(frozen=True)
class ShiftReport:
    jaccard: float
    displacement_m: Optional[float]
    centroid_before: Optional[PlanarPoint]
    centroid_after: Optional[PlanarPoint]
    matches: Tuple[RegionMatch, ...] = ()

    CSV_HEADER = "kind,before_region,after_region,jaccard,displacement_m,dx_m,dy_m"

    def csv_rows(self) -> List[str]:
        if self.displacement_m is None:
            glob = f"global,,,{self.jaccard!r},,,"
        else:
            dx = self.centroid_after.x - self.centroid_before.x
            dy = self.centroid_after.y - self.centroid_before.y
            glob = f"global,,,{self.jaccard!r},{self.displacement_m!r},{dx!r},{dy!r}"
        rows = [glob]
        for m in self.matches:
            rows.append(f"pair,{m.before},{m.after},,{m.displacement_m!r},{m.dx_m!r},{m.dy_m!r}")
        return rows

    def pretty(self) -> str:
        lines = [f"Jaccard overlap of hotspot masks: {self.jaccard:.4f}"]
        if self.displacement_m is None:
            lines.append("Centroid displacement: undefined (a period has no hotspots)")
        else:
            lines.append(f"Centroid displacement: {self.displacement_m:.1f} m")
        for m in self.matches:
            lines.append(
                f"  region {m.before} -> region {m.after}: {m.displacement_m:.1f} m "
                f"(dx {m.dx_m:+.1f} m, dy {m.dy_m:+.1f} m)"
            )
        return "\n".join(lines) + "\n"


def _global_centroid(hs: HotspotSet) -> Optional[PlanarPoint]:
    if not hs.regions:
        return None
    total = sum(r.mass for r in hs.regions)
    x = sum(r.mass * r.centroid.x for r in hs.regions) / total
    y = sum(r.mass * r.centroid.y for r in hs.regions) / total
    return PlanarPoint(x, y)


def jaccard(a: np.ndarray, b: np.ndarray) -> float:
    union = np.count_nonzero(a | b)
    if union == 0:
        return 0.0
    return np.count_nonzero(a & b) / union


def shift_metrics(before: HotspotSet, after: HotspotSet, grid_spec: GridSpec) -> ShiftReport:
    """Overlap, global centroid displacement and greedy region pairing.

    Pairing repeatedly takes the closest unmatched (before, after) pair; it is
    not an optimal assignment. With either set empty, overlap is 0 and the
    displacement is ``None``.
    """
    if before.spec != grid_spec or after.spec != grid_spec:
        raise GeometryError("hotspot sets come from different grid geometries")
    if not before.regions or not after.regions:
        return ShiftReport(0.0, None, _global_centroid(before), _global_centroid(after))

    c0, c1 = _global_centroid(before), _global_centroid(after)
    pairs = []
    for i, rb in enumerate(before.regions):
        for j, ra in enumerate(after.regions):
            d = math.hypot(ra.centroid.x - rb.centroid.x, ra.centroid.y - rb.centroid.y)
            pairs.append((d, i, j))
    pairs.sort()
    used_b, used_a, matches = set(), set(), []
    for _, i, j in pairs:
        if i in used_b or j in used_a:
            continue
        used_b.add(i)
        used_a.add(j)
        rb, ra = before.regions[i], after.regions[j]
        matches.append(RegionMatch(i, j, ra.centroid.x - rb.centroid.x, ra.centroid.y - rb.centroid.y))
    return ShiftReport(
        jaccard=jaccard(before.mask, after.mask),
        displacement_m=math.hypot(c1.x - c0.x, c1.y - c0.y),
        centroid_before=c0,
        centroid_after=c1,
        matches=tuple(matches),
    )


def region_polygon(region: Hotspot, spec: GridSpec) -> MultiPolygon:
    """Dissolved cell outlines of ``region`` in planar meters."""
    cs = spec.cell_size_m
    cells = [box(c * cs, r * cs, (c + 1) * cs, (r + 1) * cs) for r, c in sorted(region.cells)]
    merged = unary_union(cells)
    if isinstance(merged, Polygon):
        merged = MultiPolygon([merged])
    return merged


def _ring_lonlat(coords, spec: GridSpec) -> List[List[float]]:
    xy = np.asarray(coords)
    lat, lon = spec.unproject(xy[:, 0], xy[:, 1])
    return [[float(a), float(b)] for a, b in zip(lon, lat)]


def hotspots_geojson(hs: HotspotSet, metadata: Optional[Dict[str, str]] = None) -> dict:
    """GeoJSON FeatureCollection with one MultiPolygon feature per region (lon, lat order)."""
    spec = hs.spec
    features = []
    for rank, region in enumerate(hs.regions):
        polys = []
        for poly in region_polygon(region, spec).geoms:
            poly = poly.simplify(0)  # drop collinear vertices along cell edges
            rings = [_ring_lonlat(poly.exterior.coords, spec)]
            rings += [_ring_lonlat(hole.coords, spec) for hole in poly.interiors]
            polys.append(rings)
        clat, clon = spec.unproject(region.centroid.x, region.centroid.y)
        features.append(
            {
                "type": "Feature",
                "geometry": {"type": "MultiPolygon", "coordinates": polys},
                "properties": {
                    "rank": rank,
                    "mass": region.mass,
                    "area_m2": region.area_m2,
                    "peak_density": region.peak_density,
                    "centroid": [clon, clat],
                    "centroid_m": [region.centroid.x, region.centroid.y],
                },
            }
        )
    doc = {
        "type": "FeatureCollection",
        "features": features,
        "metadata": {
            "threshold_density": hs.threshold_density if math.isfinite(hs.threshold_density) else None,
            "quantile_q": hs.quantile_q,
            **(metadata or {}),
        },
    }
    return doc


def write_geojson(doc: dict, path: os.PathLike | str) -> Path:
    path = Path(path)
    path.write_text(json.dumps(doc, sort_keys=True, indent=1) + "\n", encoding="utf-8")
    return path
