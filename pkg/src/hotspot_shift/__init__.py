"""Mobility change points, accident-density hotspots and hotspot-shift testing."""

__version__ = "0.1.0"
