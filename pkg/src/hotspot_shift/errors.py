"""Exception hierarchy shared by all modules."""


class HotspotShiftError(Exception):
    """Base class for every error raised by this package."""


class SchemaError(HotspotShiftError):
    """A source file lacks a column required by the column mapping."""


class GapError(HotspotShiftError):
    """A mobility series is missing a day and gap filling is disabled."""


class NoChangePointError(HotspotShiftError):
    """A segmentation contains no breakpoint."""


class ProjectionDomainError(HotspotShiftError):
    """Coordinates span more than the local projection supports."""


class DegenerateDataError(HotspotShiftError):
    """Data-driven bandwidth requested for a point set with zero spread."""


class GeometryError(HotspotShiftError):
    """Grid geometries differ, or a polygon is invalid."""


class CalibrationError(HotspotShiftError):
    """Too few permutations for a meaningful Monte-Carlo p-value."""


class EmptyWindowError(HotspotShiftError):
    """A study window holds no accident records."""


class OSMParseError(HotspotShiftError):
    """Malformed OSM XML; carries the byte offset of the failure."""

    def __init__(self, message: str, byte_offset: int):
        super().__init__(f"{message} (at byte offset {byte_offset})")
        self.byte_offset = byte_offset


class ConfigError(HotspotShiftError):
    """Invalid or incomplete configuration."""
