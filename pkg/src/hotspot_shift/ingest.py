"""Loaders for accident CSVs and mobility reports, and change-date windowing."""

from __future__ import annotations

import csv
import datetime as dt
import math
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Mapping, NamedTuple, Optional, Sequence, Tuple

import numpy as np

from .config import read_kv
from .errors import GapError, SchemaError

MANDATORY_FIELDS = ("timestamp", "latitude", "longitude")


@dataclass(frozen=True)
class AccidentRecord:
    timestamp: dt.datetime
    latitude: float
    longitude: float
    tz: str = "UTC"
    attributes: Mapping[str, str] = field(default_factory=dict)

    @property
    def date(self) -> dt.date:
        return self.timestamp.date()


@dataclass(frozen=True)
class Rejection:
    line: int
    reason: str


class AccidentLoad(NamedTuple):
    records: List[AccidentRecord]
    rejected: List[Rejection]


@dataclass(frozen=True)
class AccidentSchema:
    """Maps logical accident fields to source column names.

    ``attributes`` maps output attribute names to source columns; they are
    carried through untouched. ``date_format`` is a ``strptime`` pattern used
    instead of ISO-8601 parsing when set.
    """

    timestamp: str = "timestamp"
    latitude: str = "latitude"
    longitude: str = "longitude"
    attributes: Mapping[str, str] = field(default_factory=dict)
    date_format: Optional[str] = None
    timezone: str = "UTC"

    @classmethod
    def from_mapping(cls, values: Mapping[str, str]) -> "AccidentSchema":
        attrs = {}
        kwargs = {}
        for key, value in values.items():
            if key.startswith("attr."):
                attrs[key[len("attr."):]] = value
            elif key in ("timestamp", "latitude", "longitude", "date_format", "timezone"):
                kwargs[key] = value
            else:
                raise SchemaError(f"unknown schema key {key!r}")
        return cls(attributes=attrs, **kwargs)

    @classmethod
    def from_file(cls, path: os.PathLike | str) -> "AccidentSchema":
        return cls.from_mapping(read_kv(path))


@dataclass(frozen=True)
class MobilitySeries:
    start_date: dt.date
    values: np.ndarray
    source_categories: Tuple[str, ...] = ()

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        if values.ndim != 1 or len(values) < 2:
            raise ValueError("a mobility series needs at least 2 daily values")
        values.flags.writeable = False
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "source_categories", tuple(self.source_categories))

    def __len__(self) -> int:
        return len(self.values)

    def date_at(self, index: int) -> dt.date:
        return self.start_date + dt.timedelta(days=int(index))


@dataclass(frozen=True)
class StudyWindow:
    change_date: dt.date
    days_before: int = 30
    days_after: int = 30

    def __post_init__(self):
        if self.days_before <= 0 or self.days_after <= 0:
            raise ValueError("window lengths must be positive")

    @property
    def before_range(self) -> Tuple[dt.date, dt.date]:
        return self.change_date - dt.timedelta(days=self.days_before), self.change_date

    @property
    def after_range(self) -> Tuple[dt.date, dt.date]:
        return self.change_date, self.change_date + dt.timedelta(days=self.days_after)


def parse_timestamp(text: str, date_format: Optional[str] = None) -> dt.datetime:
    text = text.strip()
    if date_format:
        return dt.datetime.strptime(text, date_format)
    if text.endswith("Z"):
        text = text[:-1] + "+00:00"
    return dt.datetime.fromisoformat(text)


def load_accidents(path: os.PathLike | str, schema: Optional[AccidentSchema] = None) -> AccidentLoad:
    """Load accident records from a CSV file.

    Rows with unparseable timestamps or coordinates, or coordinates out of
    range, are not returned; they are listed in ``rejected`` with their
    1-based physical line number and a reason.
    """
    schema = schema or AccidentSchema()
    records: List[AccidentRecord] = []
    rejected: List[Rejection] = []
    with open(path, newline="", encoding="utf-8-sig") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        needed = [schema.timestamp, schema.latitude, schema.longitude, *schema.attributes.values()]
        missing = [col for col in needed if col not in header]
        if missing:
            raise SchemaError(f"{path}: missing column(s) {', '.join(missing)}")
        line = reader.line_num
        for row in reader:
            # line_num counts physical lines, so quoted newlines stay accurate
            start_line, line = line + 1, reader.line_num
            try:
                record = _make_record(row, schema)
            except ValueError as exc:
                rejected.append(Rejection(start_line, str(exc)))
                continue
            records.append(record)
    return AccidentLoad(records, rejected)


def _make_record(row: Dict[str, str], schema: AccidentSchema) -> AccidentRecord:
    raw_ts = row[schema.timestamp]
    try:
        ts = parse_timestamp(raw_ts or "", schema.date_format)
    except ValueError:
        raise ValueError(f"malformed timestamp {raw_ts!r}") from None
    lat = _parse_coord(row[schema.latitude], "latitude")
    lon = _parse_coord(row[schema.longitude], "longitude")
    if not -90.0 <= lat <= 90.0:
        raise ValueError("latitude out of range")
    if not -180.0 <= lon <= 180.0:
        raise ValueError("longitude out of range")
    tz = schema.timezone if ts.tzinfo is None else ts.tzname()
    attrs = {name: row[col] or "" for name, col in schema.attributes.items()}
    return AccidentRecord(ts, lat, lon, tz, attrs)


def _parse_coord(text: Optional[str], name: str) -> float:
    try:
        value = float(text)
    except (TypeError, ValueError):
        raise ValueError(f"malformed {name} {text!r}") from None
    if not math.isfinite(value):
        raise ValueError(f"malformed {name} {text!r}")
    return value


def load_mobility(
    path: os.PathLike | str,
    categories: Sequence[str],
    fill_policy: str = "fail",
    date_column: str = "date",
) -> MobilitySeries:
    """Load a daily mobility series as the mean of ``categories``.

    A day where any requested category is blank counts as missing. With
    ``fill_policy="fail"`` a missing day raises :class:`GapError`; with
    ``"linear-interpolate"`` it is interpolated from its neighbours.
    """
    categories = list(categories)
    if not categories:
        raise ValueError("at least one mobility category is required")
    if fill_policy not in ("fail", "linear-interpolate"):
        raise ValueError(f"unknown fill policy {fill_policy!r}")

    by_date: Dict[dt.date, float] = {}
    with open(path, newline="", encoding="utf-8-sig") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        missing = [c for c in [date_column, *categories] if c not in header]
        if missing:
            raise SchemaError(f"{path}: missing column(s) {', '.join(missing)}")
        for row in reader:
            day = dt.date.fromisoformat(row[date_column].strip())
            if day in by_date:
                raise SchemaError(f"{path}: duplicate date {day}")
            cells = [row[c].strip() if row[c] is not None else "" for c in categories]
            if any(cell == "" for cell in cells):
                continue
            by_date[day] = float(np.mean([float(cell) for cell in cells]))

    if len(by_date) < 2:
        raise ValueError(f"{path}: fewer than 2 usable days")
    start, end = min(by_date), max(by_date)
    n_days = (end - start).days + 1
    values = np.full(n_days, np.nan)
    for day, value in by_date.items():
        values[(day - start).days] = value
    gaps = np.flatnonzero(np.isnan(values))
    if len(gaps):
        if fill_policy == "fail":
            first = start + dt.timedelta(days=int(gaps[0]))
            raise GapError(f"{path}: no mobility value for {first} ({len(gaps)} missing day(s))")
        known = np.flatnonzero(~np.isnan(values))
        values[gaps] = np.interp(gaps, known, values[known])
    return MobilitySeries(start, values, tuple(categories))


def window_records(
    records: Sequence[AccidentRecord], window: StudyWindow
) -> Tuple[List[AccidentRecord], List[AccidentRecord]]:
    b0, b1 = window.before_range
    a0, a1 = window.after_range
    before = [r for r in records if b0 <= r.date < b1]
    after = [r for r in records if a0 <= r.date < a1]
    return before, after
