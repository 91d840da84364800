"""``hotspot-shift`` command line interface.

Subcommands: changepoint, kde, test, hotspots, compare, roadnet, pipeline.
Every subcommand reads an optional flat ``key=value`` file via ``--config``;
any config key can be overridden with the matching ``--key`` flag.
Exit codes: 0 success, 1 error, 2 no change point detected.
"""

from __future__ import annotations

import argparse
import dataclasses
import datetime as dt
import logging
import sys
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import changepoint as cp
from .config import PipelineConfig
from .density import DensityGrid, GridSpec, kde, read_esri_ascii, select_bandwidth, write_esri_ascii
from .errors import EmptyWindowError, HotspotShiftError, NoChangePointError
from .hotspot import extract_hotspots, hotspots_geojson, shift_metrics, write_geojson
from .ingest import AccidentRecord, AccidentSchema, StudyWindow, load_accidents, load_mobility, window_records
from .roadnet import (
    CSV_HEADER as ROAD_CSV_HEADER,
    clip_to_region,
    load_colors,
    parse_osm,
    read_region,
    segments_geojson,
    stats_csv,
    type_stats,
)
from .shifttest import IseResult, permutation_test

log = logging.getLogger("hotspot_shift")

EXIT_OK, EXIT_ERROR, EXIT_NO_CHANGE = 0, 1, 2


def _echo(cfg: PipelineConfig) -> Dict[str, str]:
    echo = cfg.echo()
    echo.pop("output_dir")  # where results land is not a method parameter
    return echo


def _write_csv(path: Path, header: str, rows: Sequence[str], cfg: PipelineConfig) -> Path:
    lines = [f"# {k}={v}" for k, v in _echo(cfg).items()]
    lines.append(header)
    lines.extend(rows)
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def _out(cfg: PipelineConfig) -> Path:
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _cost(cfg: PipelineConfig) -> cp.SegmentCost:
    kind = {"l2": "l2-mean"}.get(cfg.cost, cfg.cost)
    return cp.SegmentCost(kind, cfg.cost_reference)


# -- stages ------------------------------------------------------------------


def run_changepoint(cfg: PipelineConfig) -> Tuple[dt.date | None, cp.Segmentation]:
    cfg.validate("mobility")
    if not cfg.categories:
        raise HotspotShiftError("no mobility categories given (config key 'categories')")
    series = load_mobility(cfg.mobility, cfg.categories, cfg.fill_policy)
    seg = cp.detect_pruned(series, cfg.beta, _cost(cfg), cfg.min_seg_len)
    out = _out(cfg)
    rows = [f"{b},{series.date_at(b).isoformat()},{seg.objective!r},{seg.beta!r}" for b in seg.breakpoints]
    _write_csv(out / "changepoints.csv", "index,date,objective,beta", rows, cfg)

    summary = [
        f"series: {len(series)} days from {series.start_date.isoformat()}",
        f"categories: {', '.join(series.source_categories)}",
        f"beta: {seg.beta:.6g}  cost: {seg.cost.kind}  min_seg_len: {seg.min_seg_len}",
        f"objective: {seg.objective:.6g}",
        f"change points: {seg.K}",
    ]
    summary += [f"  index {b}: {series.date_at(b).isoformat()}" for b in seg.breakpoints]
    (out / "changepoints.txt").write_text("\n".join(summary) + "\n", encoding="utf-8")
    print("\n".join(summary))
    if seg.K == 0:
        return None, seg
    return cp.change_date(series, seg), seg


def resolve_change_date(cfg: PipelineConfig) -> dt.date:
    if cfg.change_date:
        return dt.date.fromisoformat(cfg.change_date)
    if cfg.mobility is None:
        raise HotspotShiftError("need either change_date or a mobility file to detect it")
    date, _ = run_changepoint(cfg)
    if date is None:
        raise NoChangePointError("no mobility change point detected")
    return date


def _windows(cfg: PipelineConfig, change: dt.date) -> Tuple[List[AccidentRecord], List[AccidentRecord]]:
    cfg.validate("accidents")
    schema = AccidentSchema.from_file(cfg.schema) if cfg.schema else AccidentSchema()
    loaded = load_accidents(cfg.accidents, schema)
    for rej in loaded.rejected:
        log.warning("%s line %d rejected: %s", cfg.accidents, rej.line, rej.reason)
    window = StudyWindow(change, cfg.days_before, cfg.days_after)
    before, after = window_records(loaded.records, window)
    for name, recs, (lo, hi) in (("before", before, window.before_range), ("after", after, window.after_range)):
        if not recs:
            raise EmptyWindowError(f"{name} window [{lo}, {hi}) holds no accident records")
    return before, after


def _latlon(records: Sequence[AccidentRecord]) -> Tuple[np.ndarray, np.ndarray]:
    return (np.array([r.latitude for r in records]), np.array([r.longitude for r in records]))


def prepare_surfaces(cfg: PipelineConfig, change: dt.date):
    """Project both windows onto one shared grid with one pooled bandwidth."""
    before, after = _windows(cfg, change)
    lat, lon = _latlon(before + after)
    provisional = GridSpec.covering(lat, lon, cfg.cell_size_m, 0.0, max_cells=2**62)
    px, py = provisional.project(lat, lon)
    h = select_bandwidth(np.column_stack([px, py]), cfg.bandwidth)
    pad = cfg.padding_bandwidths * h
    spec = GridSpec.covering(lat, lon, cfg.cell_size_m, pad, cfg.max_cells)
    x, y = spec.project(lat, lon)
    pts = np.column_stack([x, y])
    return spec, h, pts[: len(before)], pts[len(before):]


def run_kde(cfg: PipelineConfig, change: dt.date):
    spec, h, pb, pa = prepare_surfaces(cfg, change)
    grids = {}
    out = _out(cfg)
    extra = {**_echo(cfg), "change_date": change.isoformat()}
    for name, pts in (("before", pb), ("after", pa)):
        grid = kde(pts, spec, h, cfg.kernel)
        write_esri_ascii(grid, out / f"kde_{name}.asc", {**extra, "period": name})
        grids[name] = grid
        log.info("%s: %d points, mass on grid %.6f", name, len(pts), grid.mass)
    return spec, h, pb, pa, grids


def run_test(cfg: PipelineConfig, spec: GridSpec, h: float, pb, pa) -> IseResult:
    res = permutation_test(pb, pa, spec, h, cfg.n_permutations, cfg.seed, cfg.kernel, keep_null=cfg.write_null)
    out = _out(cfg)
    _write_csv(out / "ise_test.csv", IseResult.CSV_HEADER, [res.csv_row()], cfg)
    if cfg.write_null:
        _write_csv(out / "ise_null.csv", "replicate,ise", [f"{i},{v!r}" for i, v in enumerate(res.null)], cfg)
    print(f"ISE {res.ise:.6g}  p-value {res.p_value:.4g}  ({res.n_permutations} permutations, seed {res.seed})")
    return res


def run_hotspots(cfg: PipelineConfig, before: DensityGrid, after: DensityGrid):
    out = _out(cfg)
    sets = {}
    for name, grid in (("before", before), ("after", after)):
        hs = extract_hotspots(grid, cfg.quantile)
        write_geojson(hotspots_geojson(hs, {**_echo(cfg), "period": name}), out / f"hotspots_{name}.geojson")
        sets[name] = hs
    report = shift_metrics(sets["before"], sets["after"], before.spec)
    _write_csv(out / "shift_report.csv", report.CSV_HEADER, report.csv_rows(), cfg)
    (out / "shift_report.txt").write_text(report.pretty(), encoding="utf-8")
    print(report.pretty(), end="")
    return sets, report


def run_roadnet(cfg: PipelineConfig, region_path: str, stem: str = "road", region_label: Optional[str] = None):
    cfg.validate("osm")
    loaded = parse_osm(cfg.osm)
    for rej in loaded.rejected:
        log.warning("way %d rejected: %s", rej.way_id, rej.reason)
    clipped = clip_to_region(loaded.segments, read_region(region_path))
    rows = type_stats(clipped)
    out = _out(cfg)
    _write_csv(out / f"{stem}_stats.csv", ROAD_CSV_HEADER, stats_csv(rows), cfg)
    meta = {**_echo(cfg), "region": region_label or str(region_path),
            "clipping": "vertex-based; boundary crossings not interpolated"}
    write_geojson(segments_geojson(clipped, load_colors(cfg.colors), meta), out / f"{stem}_segments.geojson")
    for r in rows:
        print(f"{r.highway_type:<16} {r.segment_count:>6} {r.count_percent:7.2f}% "
              f"{r.normalized_percent:7.2f}% {r.total_length_m:12.1f} m")
    return rows


# -- command handlers ----------------------------------------------------------


def cmd_changepoint(cfg: PipelineConfig) -> int:
    date, _ = run_changepoint(cfg)
    return EXIT_NO_CHANGE if date is None else EXIT_OK


def cmd_kde(cfg: PipelineConfig) -> int:
    run_kde(cfg, resolve_change_date(cfg))
    return EXIT_OK


def cmd_test(cfg: PipelineConfig) -> int:
    spec, h, pb, pa = prepare_surfaces(cfg, resolve_change_date(cfg))
    run_test(cfg, spec, h, pb, pa)
    return EXIT_OK


def cmd_hotspots(cfg: PipelineConfig) -> int:
    out = Path(cfg.output_dir)
    before = read_esri_ascii(out / "kde_before.asc")
    after = read_esri_ascii(out / "kde_after.asc")
    run_hotspots(cfg, before, after)
    return EXIT_OK


def cmd_compare(cfg: PipelineConfig) -> int:
    spec, h, pb, pa, grids = run_kde(cfg, resolve_change_date(cfg))
    run_test(cfg, spec, h, pb, pa)
    run_hotspots(cfg, grids["before"], grids["after"])
    return EXIT_OK


def cmd_roadnet(cfg: PipelineConfig) -> int:
    if cfg.region is None:
        raise HotspotShiftError("roadnet needs a region GeoJSON (config key 'region')")
    run_roadnet(cfg, cfg.region)
    return EXIT_OK


def cmd_pipeline(cfg: PipelineConfig) -> int:
    if not cfg.change_date:
        date, _ = run_changepoint(cfg)
        if date is None:
            return EXIT_NO_CHANGE
        cfg = dataclasses.replace(cfg, change_date=date.isoformat())
    cmd_compare(cfg)
    if cfg.osm:
        out = Path(cfg.output_dir)
        for name in ("before", "after"):
            region = f"hotspots_{name}.geojson"
            run_roadnet(cfg, str(out / region), stem=f"road_{name}", region_label=region)
    return EXIT_OK


COMMANDS = {
    "changepoint": (cmd_changepoint, "detect mobility change points"),
    "kde": (cmd_kde, "KDE grids for the windows around the change date"),
    "test": (cmd_test, "ISE permutation test between the two windows"),
    "hotspots": (cmd_hotspots, "hotspot regions and shift report from existing KDE grids"),
    "compare": (cmd_compare, "kde + test + hotspots"),
    "roadnet": (cmd_roadnet, "road-type statistics inside a region"),
    "pipeline": (cmd_pipeline, "changepoint + compare + roadnet"),
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hotspot-shift", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (_, help_text) in COMMANDS.items():
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", help="flat key=value config file")
        p.add_argument("-v", "--verbose", action="store_true")
        for f in dataclasses.fields(PipelineConfig):
            flag = "--" + f.name.replace("_", "-")
            if f.name == "cost":
                p.add_argument(flag, dest=f.name, choices=["l2", "l2-mean", "l2-constant-reference"])
            elif f.name == "write_null":
                p.add_argument(flag, dest=f.name, action="store_const", const=True)
            else:
                p.add_argument(flag, dest=f.name, metavar=f.name.upper())
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s")
    handler = COMMANDS[args.command][0]
    overrides = {f.name: getattr(args, f.name) for f in dataclasses.fields(PipelineConfig)}
    try:
        cfg = PipelineConfig.from_file(args.config) if args.config else PipelineConfig()
        cfg = cfg.updated(overrides)
        cfg.validate()
        return handler(cfg)
    except NoChangePointError as exc:
        print(f"hotspot-shift: {exc}", file=sys.stderr)
        return EXIT_NO_CHANGE
    except (HotspotShiftError, OSError, ValueError) as exc:
        print(f"hotspot-shift: error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
