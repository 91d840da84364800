"""Kernel density surfaces of accident locations on a regular planar grid.

Coordinates are local equirectangular meters east/north of a grid origin.
Grid rows run south to north (row 0 is the southern edge), columns west to
east; cell ``(i, j)`` has its center at ``((j + 0.5) * cs, (i + 0.5) * cs)``.
"""

from __future__ import annotations

import math
import os
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterator, NamedTuple, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import sparse

from .config import read_kv
from .errors import DegenerateDataError, GeometryError, ProjectionDomainError

EARTH_RADIUS_M = 6_371_000.0
MAX_SPAN_DEG = 2.0
DEFAULT_MAX_CELLS = 4_000_000
KERNELS = ("gaussian", "epanechnikov")
NODATA = -9999


class PlanarPoint(NamedTuple):
    x: float
    y: float


def _as_xy(points) -> np.ndarray:
    arr = np.asarray(points, dtype=float).reshape(-1, 2)
    if not np.all(np.isfinite(arr)):
        raise ValueError("planar points must be finite")
    return arr


def project(lat, lon, origin_lat: float, origin_lon: float):
    """Local equirectangular projection around ``(origin_lat, origin_lon)``.

    Accepts scalars or arrays. Scalars return a :class:`PlanarPoint`, arrays
    return ``(x, y)`` arrays.
    """
    lat_a = np.asarray(lat, dtype=float)
    lon_a = np.asarray(lon, dtype=float)
    dlat = lat_a - origin_lat
    dlon = lon_a - origin_lon
    if np.any(np.abs(dlat) >= MAX_SPAN_DEG) or np.any(np.abs(dlon) >= MAX_SPAN_DEG):
        raise ProjectionDomainError(
            f"points lie {MAX_SPAN_DEG} degrees or more from the projection origin"
        )
    x = EARTH_RADIUS_M * math.cos(math.radians(origin_lat)) * np.radians(dlon)
    y = EARTH_RADIUS_M * np.radians(dlat)
    if np.ndim(x) == 0:
        return PlanarPoint(float(x), float(y))
    return x, y


def unproject(x, y, origin_lat: float, origin_lon: float):
    """Inverse of :func:`project`; returns ``(lat, lon)``."""
    lat = origin_lat + np.degrees(np.asarray(y, dtype=float) / EARTH_RADIUS_M)
    lon = origin_lon + np.degrees(
        np.asarray(x, dtype=float) / (EARTH_RADIUS_M * math.cos(math.radians(origin_lat)))
    )
    if np.ndim(lat) == 0:
        return float(lat), float(lon)
    return lat, lon


@dataclass(frozen=True)
class GridSpec:
    origin_lat: float
    origin_lon: float
    width_m: float
    height_m: float
    cell_size_m: float
    max_cells: int = field(default=DEFAULT_MAX_CELLS, compare=False)

    def __post_init__(self):
        if not self.cell_size_m > 0:
            raise GeometryError("cell_size_m must be positive")
        if not (self.width_m > 0 and self.height_m > 0):
            raise GeometryError("grid width and height must be positive")
        if self.nx * self.ny > self.max_cells:
            raise GeometryError(
                f"grid of {self.nx}x{self.ny} cells exceeds the limit of {self.max_cells}"
            )

    @property
    def nx(self) -> int:
        return math.ceil(self.width_m / self.cell_size_m)

    @property
    def ny(self) -> int:
        return math.ceil(self.height_m / self.cell_size_m)

    @property
    def shape(self) -> Tuple[int, int]:
        return self.ny, self.nx

    @property
    def cell_area(self) -> float:
        return self.cell_size_m * self.cell_size_m

    def cell_center(self, row: int, col: int) -> PlanarPoint:
        return PlanarPoint((col + 0.5) * self.cell_size_m, (row + 0.5) * self.cell_size_m)

    def project(self, lat, lon):
        return project(lat, lon, self.origin_lat, self.origin_lon)

    def unproject(self, x, y):
        return unproject(x, y, self.origin_lat, self.origin_lon)

    @classmethod
    def covering(
        cls,
        lats: Sequence[float],
        lons: Sequence[float],
        cell_size_m: float,
        padding_m: float,
        max_cells: int = DEFAULT_MAX_CELLS,
    ) -> "GridSpec":
        """Smallest grid holding every point at least ``padding_m`` from the edge."""
        lats = np.asarray(lats, dtype=float)
        lons = np.asarray(lons, dtype=float)
        if lats.size == 0:
            raise ValueError("cannot build a grid around zero points")
        origin_lat = float(lats.min()) - math.degrees(padding_m / EARTH_RADIUS_M)
        origin_lon = float(lons.min()) - math.degrees(
            padding_m / (EARTH_RADIUS_M * math.cos(math.radians(origin_lat)))
        )
        x, y = project(lats, lons, origin_lat, origin_lon)
        width = float(np.max(x)) + padding_m
        height = float(np.max(y)) + padding_m
        return cls(origin_lat, origin_lon, width, height, cell_size_m, max_cells)


@dataclass(frozen=True)
class DensityGrid:
    spec: GridSpec
    values: np.ndarray
    bandwidth_m: float
    n_points: int
    kernel: str = "gaussian"

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        if values.shape != self.spec.shape:
            raise GeometryError(f"values shape {values.shape} does not match grid {self.spec.shape}")
        values.flags.writeable = False
        object.__setattr__(self, "values", values)

    @property
    def mass(self) -> float:
        """Quadrature mass; falls short of 1 by the mass leaked off-grid or truncated."""
        return float(self.values.sum() * self.spec.cell_area)

    @property
    def leakage(self) -> float:
        return 1.0 - self.mass


def _kernel_values(r2: np.ndarray, h: float, kernel: str) -> np.ndarray:
    if kernel == "gaussian":
        return np.exp(-0.5 * r2 / (h * h)) / (2.0 * math.pi * h * h)
    return np.where(r2 < h * h, (2.0 / (math.pi * h * h)) * (1.0 - r2 / (h * h)), 0.0)


def support_radius(bandwidth_m: float, kernel: str) -> float:
    return 4.0 * bandwidth_m if kernel == "gaussian" else bandwidth_m


def _patches(
    pts: np.ndarray, spec: GridSpec, h: float, kernel: str
) -> Iterator[Tuple[slice, slice, np.ndarray]]:
    """Per point, the block of cells within the kernel support and its values."""
    if kernel not in KERNELS:
        raise ValueError(f"unknown kernel {kernel!r}; expected one of {KERNELS}")
    cs = spec.cell_size_m
    ny, nx = spec.shape
    radius = support_radius(h, kernel)
    for px, py in pts:
        j0 = max(0, math.ceil((px - radius) / cs - 0.5))
        j1 = min(nx - 1, math.floor((px + radius) / cs - 0.5))
        i0 = max(0, math.ceil((py - radius) / cs - 0.5))
        i1 = min(ny - 1, math.floor((py + radius) / cs - 0.5))
        if j0 > j1 or i0 > i1:
            continue
        dx = (np.arange(j0, j1 + 1) + 0.5) * cs - px
        dy = (np.arange(i0, i1 + 1) + 0.5) * cs - py
        r2 = dy[:, None] ** 2 + dx[None, :] ** 2
        block = np.where(r2 <= radius * radius, _kernel_values(r2, h, kernel), 0.0)
        yield slice(i0, i1 + 1), slice(j0, j1 + 1), block


def kde(
    points, spec: GridSpec, bandwidth_m: float, kernel: str = "gaussian"
) -> DensityGrid:
    """Evaluate ``(1/n) sum_i K_h(g - p_i)`` at every cell center ``g``.

    Gaussian kernels are cut off at ``4h`` and Epanechnikov kernels have
    support ``h``. Truncated and off-grid mass is not renormalized.
    """
    pts = _as_xy(points)
    if len(pts) == 0:
        raise ValueError("kde needs at least one point")
    if not bandwidth_m > 0:
        raise ValueError("bandwidth must be positive")
    values = np.zeros(spec.shape)
    for rows, cols, block in _patches(pts, spec, bandwidth_m, kernel):
        values[rows, cols] += block
    values /= len(pts)
    return DensityGrid(spec, values, float(bandwidth_m), len(pts), kernel)


def kernel_matrix(points, spec: GridSpec, bandwidth_m: float, kernel: str = "gaussian") -> sparse.csr_matrix:
    """Sparse ``(n_points, n_cells)`` matrix of unnormalized per-point kernel values.

    Row ``i`` flattened in C order is the contribution of point ``i`` to the
    grid, so ``kde(points).values.ravel() == K.sum(axis=0) / n``.
    """
    pts = _as_xy(points)
    nx = spec.nx
    rows, cols, data = [], [], []
    for k, (rs, cs_, block) in enumerate(_patches(pts, spec, bandwidth_m, kernel)):
        ii, jj = np.nonzero(block)
        rows.append(np.full(len(ii), k))
        cols.append((ii + rs.start) * nx + (jj + cs_.start))
        data.append(block[ii, jj])
    if not data:
        return sparse.csr_matrix((len(pts), spec.nx * spec.ny))
    return sparse.csr_matrix(
        (np.concatenate(data), (np.concatenate(rows), np.concatenate(cols))),
        shape=(len(pts), spec.nx * spec.ny),
    )


_FIXED = re.compile(r"^fixed\(\s*([0-9.eE+-]+)\s*\)$")


def select_bandwidth(points, rule: Union[str, float] = "silverman") -> float:
    """Bandwidth in meters by ``silverman``, ``scott`` or ``fixed(h)``.

    Both data-driven rules use the mean of the two coordinate standard
    deviations times ``n ** (-1/6)``; Silverman's extra factor
    ``(4 / (d + 2)) ** (1 / (d + 4))`` equals 1 in two dimensions.
    """
    if isinstance(rule, (int, float)):
        return _positive(float(rule))
    match = _FIXED.match(rule.strip())
    if match:
        return _positive(float(match.group(1)))
    if rule not in ("silverman", "scott"):
        raise ValueError(f"unknown bandwidth rule {rule!r}")
    pts = _as_xy(points)
    n = len(pts)
    if n < 2:
        raise DegenerateDataError(f"{rule} bandwidth needs at least 2 points; use fixed(h)")
    sigma = float(np.mean(pts.std(axis=0, ddof=1)))
    if sigma <= 0:
        raise DegenerateDataError(f"points have zero spread; {rule} undefined, use fixed(h)")
    d = 2
    factor = (4.0 / (d + 2)) ** (1.0 / (d + 4)) if rule == "silverman" else 1.0
    return factor * sigma * n ** (-1.0 / (d + 4))


def _positive(h: float) -> float:
    if not h > 0:
        raise ValueError("bandwidth must be positive")
    return h


def write_esri_ascii(grid: DensityGrid, path: os.PathLike | str, extra: Optional[Dict[str, str]] = None) -> Path:
    """Write ``grid`` as an ESRI ASCII raster plus a ``.meta`` sidecar.

    The raster is in local planar meters (lower-left corner at 0, 0); the
    sidecar records the projection origin and the KDE parameters.
    """
    path = Path(path)
    spec = grid.spec
    lines = [
        f"ncols {spec.nx}",
        f"nrows {spec.ny}",
        "xllcorner 0.0",
        "yllcorner 0.0",
        f"cellsize {spec.cell_size_m!r}",
        f"NODATA_value {NODATA}",
    ]
    for row in grid.values[::-1]:  # north row first
        lines.append(" ".join(format(v, ".17g") for v in row))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")

    meta = {
        "projection": "local-equirectangular",
        "earth_radius_m": repr(EARTH_RADIUS_M),
        "origin_lat": repr(spec.origin_lat),
        "origin_lon": repr(spec.origin_lon),
        "width_m": repr(spec.width_m),
        "height_m": repr(spec.height_m),
        "cell_size_m": repr(spec.cell_size_m),
        "bandwidth_m": repr(grid.bandwidth_m),
        "n_points": str(grid.n_points),
        "kernel": grid.kernel,
        "mass": repr(grid.mass),
    }
    for key, value in sorted((extra or {}).items()):
        meta[f"config.{key}"] = value
    meta_path = path.with_name(path.name + ".meta")
    meta_path.write_text("".join(f"{k}={v}\n" for k, v in meta.items()), encoding="utf-8")
    return path


def read_esri_ascii(path: os.PathLike | str) -> DensityGrid:
    """Read a grid written by :func:`write_esri_ascii` (sidecar required)."""
    path = Path(path)
    meta = read_kv(path.with_name(path.name + ".meta"))
    with open(path, encoding="utf-8") as fh:
        header = {}
        for _ in range(6):
            key, value = fh.readline().split()
            header[key.lower()] = value
        values = np.loadtxt(fh, ndmin=2)[::-1]
    values = np.where(values == NODATA, 0.0, values)
    spec = GridSpec(
        float(meta["origin_lat"]),
        float(meta["origin_lon"]),
        float(meta["width_m"]),
        float(meta["height_m"]),
        float(meta["cell_size_m"]),
        max_cells=max(DEFAULT_MAX_CELLS, int(header["ncols"]) * int(header["nrows"])),
    )
    return DensityGrid(spec, values, float(meta["bandwidth_m"]), int(meta["n_points"]), meta["kernel"])
