"""Planted-truth data generators for tests and experiment scripts."""

from __future__ import annotations

import csv
import datetime as dt
import math
import os
from pathlib import Path
from typing import Iterable, List, Sequence, Tuple

import numpy as np

from .density import EARTH_RADIUS_M


def step_series(
    n_days: int, step_index: int, step: float = -71.0, noise: float = 5.0, seed: int = 0
) -> np.ndarray:
    """Zero-mean noise with a level shift of ``step`` from ``step_index`` onwards."""
    rng = np.random.default_rng(seed)
    x = rng.normal(0.0, noise, n_days)
    x[step_index:] += step
    return x


def offset_latlon(lat0: float, lon0: float, east_m, north_m) -> Tuple[np.ndarray, np.ndarray]:
    """Shift ``(lat0, lon0)`` by planar meters using the local equirectangular mapping."""
    lat = lat0 + np.degrees(np.asarray(north_m) / EARTH_RADIUS_M)
    lon = lon0 + np.degrees(np.asarray(east_m) / (EARTH_RADIUS_M * math.cos(math.radians(lat0))))
    return lat, lon


def cluster(n: int, center_m: Tuple[float, float], spread_m: float, rng: np.random.Generator) -> np.ndarray:
    return rng.normal(0.0, spread_m, (n, 2)) + np.asarray(center_m)


def write_mobility_csv(
    path: os.PathLike | str,
    start: dt.date,
    columns: dict,
    skip_days: Iterable[int] = (),
) -> Path:
    """Google-mobility-style CSV: ``date`` plus one column per category."""
    path = Path(path)
    names = list(columns)
    n = len(next(iter(columns.values())))
    skip = set(skip_days)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["date", *names])
        for i in range(n):
            if i in skip:
                continue
            day = start + dt.timedelta(days=i)
            w.writerow([day.isoformat(), *[repr(float(columns[c][i])) for c in names]])
    return path


def write_accident_csv(
    path: os.PathLike | str,
    rows: Sequence[Tuple[dt.date, float, float]],
    extra: Sequence[Tuple[str, str]] = (),
) -> Path:
    """Accident CSV with ``timestamp,latitude,longitude,severity`` columns."""
    path = Path(path)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["timestamp", "latitude", "longitude", "severity"])
        for day, lat, lon in rows:
            w.writerow([day.isoformat(), f"{lat:.7f}", f"{lon:.7f}", "minor"])
    return path


def shifted_accidents(
    change: dt.date,
    n_per_window: int = 200,
    shift_east_m: float = 5000.0,
    spread_m: float = 600.0,
    origin: Tuple[float, float] = (40.70, -74.02),
    days: int = 30,
    seed: int = 0,
) -> List[Tuple[dt.date, float, float]]:
    """Accidents around one hotspot before ``change`` and a moved one after it."""
    rng = np.random.default_rng(seed)
    rows = []
    for sign, east in ((-1, 0.0), (1, shift_east_m)):
        xy = cluster(n_per_window, (8000.0 + east, 8000.0), spread_m, rng)
        lat, lon = offset_latlon(origin[0], origin[1], xy[:, 0], xy[:, 1])
        offsets = rng.integers(0, days, n_per_window)
        for k in range(n_per_window):
            day = change - dt.timedelta(days=int(offsets[k]) + 1) if sign < 0 else change + dt.timedelta(days=int(offsets[k]))
            rows.append((day, float(lat[k]), float(lon[k])))
    rows.sort(key=lambda r: r[0])
    return rows


def osm_xml(nodes: Sequence[Tuple[int, float, float]], ways: Sequence[Tuple[int, Sequence[int], dict]]) -> str:
    """Minimal OSM XML document."""
    out = ['<?xml version="1.0" encoding="UTF-8"?>', '<osm version="0.6" generator="hotspot-shift">']
    for nid, lat, lon in nodes:
        out.append(f'  <node id="{nid}" lat="{lat:.12f}" lon="{lon:.12f}"/>')
    for wid, refs, tags in ways:
        out.append(f'  <way id="{wid}">')
        out += [f'    <nd ref="{r}"/>' for r in refs]
        out += [f'    <tag k="{k}" v="{v}"/>' for k, v in tags.items()]
        out.append("  </way>")
    out.append("</osm>")
    return "\n".join(out) + "\n"


def meters_north(lat: float, meters: float) -> float:
    return lat + math.degrees(meters / EARTH_RADIUS_M)


def three_way_network(lat0: float = 40.75, lon0: float = -73.99) -> str:
    """Two 100 m residential ways and one 300 m primary way, all along meridians."""
    nodes, ways = [], []
    specs = [(1, "residential", 100.0), (2, "residential", 100.0), (3, "primary", 300.0)]
    for k, (wid, kind, length) in enumerate(specs):
        lon = lon0 + 0.002 * k
        a, b = 10 * wid + 1, 10 * wid + 2
        nodes += [(a, lat0, lon), (b, meters_north(lat0, length), lon)]
        ways.append((wid, [a, b], {"highway": kind, "name": f"Street {wid}"}))
    return osm_xml(nodes, ways)
