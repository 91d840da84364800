"""Flat ``key=value`` configuration files and the pipeline configuration."""

from __future__ import annotations

import configparser
import dataclasses
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional

from .errors import ConfigError

_ROOT = "root"


def read_kv(path: os.PathLike | str) -> Dict[str, str]:
    """Read a flat ``key=value`` file. ``#`` and ``;`` start comment lines."""
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    return parse_kv(text, source=str(path))


def parse_kv(text: str, source: str = "<string>") -> Dict[str, str]:
    parser = configparser.ConfigParser(
        delimiters=("=",), comment_prefixes=("#", ";"), interpolation=None
    )
    parser.optionxform = str  # keep key case; column names are case sensitive
    try:
        parser.read_string(f"[{_ROOT}]\n" + text, source=source)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config {source}: {exc}") from exc
    return dict(parser[_ROOT])


def _split_list(value: str) -> List[str]:
    return [item.strip() for item in value.split(",") if item.strip()]


@dataclass
class PipelineConfig:
    """Every parameter of a pipeline run.

    Numeric defaults follow the package-wide choices: 250 m cells, Silverman
    bandwidth, 95th-percentile hotspots, 999 permutations.
    """

    accidents: Optional[str] = None
    mobility: Optional[str] = None
    osm: Optional[str] = None
    region: Optional[str] = None
    schema: Optional[str] = None
    colors: Optional[str] = None
    output_dir: str = "out"

    categories: List[str] = field(default_factory=list)
    fill_policy: str = "fail"

    beta: Optional[float] = None
    cost: str = "l2"
    cost_reference: float = 0.0
    min_seg_len: int = 2

    change_date: Optional[str] = None
    days_before: int = 30
    days_after: int = 30

    cell_size_m: float = 250.0
    bandwidth: str = "silverman"
    kernel: str = "gaussian"
    max_cells: int = 4_000_000
    padding_bandwidths: float = 4.0

    quantile: float = 0.95
    n_permutations: int = 999
    seed: int = 0
    write_null: bool = False

    @classmethod
    def from_mapping(cls, values: Dict[str, str]) -> "PipelineConfig":
        cfg = cls()
        return cfg.updated(values)

    @classmethod
    def from_file(cls, path: os.PathLike | str) -> "PipelineConfig":
        return cls.from_mapping(read_kv(path))

    def updated(self, values: Dict[str, object]) -> "PipelineConfig":
        """Return a copy with ``values`` (strings or typed) applied."""
        fields = {f.name: f for f in dataclasses.fields(self)}
        changes = {}
        for key, raw in values.items():
            name = key.replace("-", "_")
            if name not in fields:
                raise ConfigError(f"unknown config key {key!r}")
            if raw is None:
                continue
            changes[name] = _coerce(name, fields[name], raw)
        return dataclasses.replace(self, **changes)

    def validate(self, *required: str) -> None:
        for name in required:
            value = getattr(self, name)
            if value is None:
                raise ConfigError(f"config key {name!r} is required")
            if not Path(value).exists():
                raise ConfigError(f"{name} file does not exist: {value}")
        if self.fill_policy not in ("fail", "linear-interpolate"):
            raise ConfigError(f"fill_policy must be fail or linear-interpolate, got {self.fill_policy!r}")
        if not 0.0 < self.quantile < 1.0:
            raise ConfigError("quantile must lie strictly between 0 and 1")

    def echo(self) -> Dict[str, str]:
        """Resolved parameters as sorted strings, embedded into every output."""
        out = {}
        for f in dataclasses.fields(self):
            value = getattr(self, f.name)
            if isinstance(value, list):
                value = ",".join(value)
            out[f.name] = "" if value is None else str(value)
        return dict(sorted(out.items()))


def _coerce(name: str, f: dataclasses.Field, raw: object) -> object:
    if not isinstance(raw, str):
        return raw
    kind = f.type if isinstance(f.type, str) else getattr(f.type, "__name__", "")
    try:
        if "List" in kind:
            return _split_list(raw)
        if "bool" in kind:
            if raw.lower() in ("1", "true", "yes", "on"):
                return True
            if raw.lower() in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if "float" in kind:
            return float(raw)
        if "int" in kind:
            return int(raw)
    except ValueError as exc:
        raise ConfigError(f"bad value for {name}: {raw!r}") from exc
    return raw
